#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace echoseg {

// Row-major single-channel 2-D image.
template <typename T>
struct Image {
    int height = 0;
    int width = 0;
    std::vector<T> pixels;

    Image() = default;
    Image(int h, int w, T fill = T(0)) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

    T& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    T at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
    bool empty() const { return pixels.empty(); }

    friend bool operator==(const Image&, const Image&) = default;
};

using FloatImage = Image<float>;
using LabelImage = Image<std::uint8_t>;

// Maps output pixel-center coordinates (x, y) to source coordinates:
//   src_x = xx * x + xy * y + tx,  src_y = yx * x + yy * y + ty.
// Coordinates are continuous, pixel (row i, col j) has its center at (j + 0.5, i + 0.5).
struct Affine2D {
    double xx = 1, xy = 0, tx = 0;
    double yx = 0, yy = 1, ty = 0;

    static Affine2D identity() { return {}; }
    static Affine2D translation(double dx, double dy) { return {1, 0, dx, 0, 1, dy}; }
    static Affine2D scaling(double sx, double sy) { return {sx, 0, 0, 0, sy, 0}; }
    static Affine2D rotation(double radians);

    void apply(double x, double y, double& ox, double& oy) const {
        ox = xx * x + xy * y + tx;
        oy = yx * x + yy * y + ty;
    }
    Affine2D inverse() const;
};

// Composition: (a * b)(p) = a(b(p)).
Affine2D operator*(const Affine2D& a, const Affine2D& b);

// Zero-pads the shorter side so the image becomes square, keeping content centered.
template <typename T>
Image<T> pad_to_square(const Image<T>& img, T fill);

// Source taps of a half-pixel-center bilinear resample along one axis:
// out[i] = in[lo] * (1 - frac) + in[hi] * frac.
struct ResampleTap {
    int lo = 0;
    int hi = 0;
    float frac = 0;
};
std::vector<ResampleTap> bilinear_taps(int in_size, int out_size);

// Half-pixel-center bilinear resize with edge clamping.
FloatImage resize_bilinear(const FloatImage& img, int out_h, int out_w);
// Nearest-neighbor resize; output values are always a subset of input values.
LabelImage resize_nearest(const LabelImage& img, int out_h, int out_w);

// Inverse-mapped warps. Samples outside the source frame read as `fill`.
FloatImage warp_bilinear(const FloatImage& img, const Affine2D& out_to_src, float fill = 0.0f);
LabelImage warp_nearest(const LabelImage& img, const Affine2D& out_to_src, std::uint8_t fill = 0);

}  // namespace echoseg
