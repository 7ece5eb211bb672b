#include "echoseg/image.h"

#include <algorithm>
#include <cmath>

#include "echoseg/errors.h"

namespace echoseg {

Affine2D Affine2D::rotation(double radians) {
    const double c = std::cos(radians);
    const double s = std::sin(radians);
    return {c, -s, 0, s, c, 0};
}

Affine2D Affine2D::inverse() const {
    const double det = xx * yy - xy * yx;
    if (det == 0.0) throw ValidationError("affine transform is singular");
    Affine2D inv;
    inv.xx = yy / det;
    inv.xy = -xy / det;
    inv.yx = -yx / det;
    inv.yy = xx / det;
    inv.tx = -(inv.xx * tx + inv.xy * ty);
    inv.ty = -(inv.yx * tx + inv.yy * ty);
    return inv;
}

Affine2D operator*(const Affine2D& a, const Affine2D& b) {
    Affine2D r;
    r.xx = a.xx * b.xx + a.xy * b.yx;
    r.xy = a.xx * b.xy + a.xy * b.yy;
    r.yx = a.yx * b.xx + a.yy * b.yx;
    r.yy = a.yx * b.xy + a.yy * b.yy;
    r.tx = a.xx * b.tx + a.xy * b.ty + a.tx;
    r.ty = a.yx * b.tx + a.yy * b.ty + a.ty;
    return r;
}

template <typename T>
Image<T> pad_to_square(const Image<T>& img, T fill) {
    const int side = std::max(img.height, img.width);
    if (img.height == side && img.width == side) return img;
    Image<T> out(side, side, fill);
    const int oy = (side - img.height) / 2;
    const int ox = (side - img.width) / 2;
    for (int y = 0; y < img.height; ++y)
        std::copy_n(&img.pixels[static_cast<std::size_t>(y) * img.width], img.width, &out.at(y + oy, ox));
    return out;
}

template Image<float> pad_to_square(const Image<float>&, float);
template Image<std::uint8_t> pad_to_square(const Image<std::uint8_t>&, std::uint8_t);

std::vector<ResampleTap> bilinear_taps(int in, int out) {
    std::vector<ResampleTap> taps(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        const int hi = std::min(lo + 1, in - 1);
        taps[i] = {lo, hi, static_cast<float>(src - lo)};
    }
    return taps;
}

FloatImage resize_bilinear(const FloatImage& img, int out_h, int out_w) {
    if (img.empty()) throw ValidationError("resize_bilinear: empty image");
    if (out_h == img.height && out_w == img.width) return img;
    const auto ty = bilinear_taps(img.height, out_h);
    const auto tx = bilinear_taps(img.width, out_w);
    FloatImage out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const ResampleTap& a = ty[y];
        for (int x = 0; x < out_w; ++x) {
            const ResampleTap& b = tx[x];
            const float top = img.at(a.lo, b.lo) * (1 - b.frac) + img.at(a.lo, b.hi) * b.frac;
            const float bot = img.at(a.hi, b.lo) * (1 - b.frac) + img.at(a.hi, b.hi) * b.frac;
            out.at(y, x) = top * (1 - a.frac) + bot * a.frac;
        }
    }
    return out;
}

LabelImage resize_nearest(const LabelImage& img, int out_h, int out_w) {
    if (img.empty()) throw ValidationError("resize_nearest: empty image");
    if (out_h == img.height && out_w == img.width) return img;
    auto index = [](int i, int in, int out) {
        const int s = static_cast<int>(std::floor((i + 0.5) * in / out));
        return std::clamp(s, 0, in - 1);
    };
    LabelImage out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = index(y, img.height, out_h);
        for (int x = 0; x < out_w; ++x) out.at(y, x) = img.at(sy, index(x, img.width, out_w));
    }
    return out;
}

FloatImage warp_bilinear(const FloatImage& img, const Affine2D& out_to_src, float fill) {
    FloatImage out(img.height, img.width);
    auto sample = [&](int y, int x) {
        return (y < 0 || x < 0 || y >= img.height || x >= img.width) ? fill : img.at(y, x);
    };
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < img.width; ++j) {
            double sx, sy;
            out_to_src.apply(j + 0.5, i + 0.5, sx, sy);
            const double u = sx - 0.5;
            const double v = sy - 0.5;
            const double fx = std::floor(u);
            const double fy = std::floor(v);
            if (fx < -1 || fy < -1 || fx > img.width || fy > img.height) {
                out.at(i, j) = fill;
                continue;
            }
            const int x0 = static_cast<int>(fx);
            const int y0 = static_cast<int>(fy);
            const float ax = static_cast<float>(u - fx);
            const float ay = static_cast<float>(v - fy);
            const float top = sample(y0, x0) * (1 - ax) + sample(y0, x0 + 1) * ax;
            const float bot = sample(y0 + 1, x0) * (1 - ax) + sample(y0 + 1, x0 + 1) * ax;
            out.at(i, j) = top * (1 - ay) + bot * ay;
        }
    }
    return out;
}

LabelImage warp_nearest(const LabelImage& img, const Affine2D& out_to_src, std::uint8_t fill) {
    LabelImage out(img.height, img.width, fill);
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < img.width; ++j) {
            double sx, sy;
            out_to_src.apply(j + 0.5, i + 0.5, sx, sy);
            const double fx = std::floor(sx);
            const double fy = std::floor(sy);
            if (fx < 0 || fy < 0 || fx >= img.width || fy >= img.height) continue;
            out.at(i, j) = img.at(static_cast<int>(fy), static_cast<int>(fx));
        }
    }
    return out;
}

}  // namespace echoseg
