#include "echoseg/layers.h"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace echoseg {

void init_kaiming(Parameter& p, int fan_in, double slope, std::mt19937_64& rng) {
    const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
    std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
    for (float& v : p.value.storage()) v = dist(rng);
}

namespace {

void im2col(const float* x, int channels, int h, int w, int k, int stride, int pad, int oh, int ow, float* col) {
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < channels; ++c) {
        const float* xc = x + static_cast<std::size_t>(c) * h * w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                float* row = col + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * plane;
                for (int oy = 0; oy < oh; ++oy) {
                    float* dst = row + static_cast<std::size_t>(oy) * ow;
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) {
                        std::fill_n(dst, ow, 0.0f);
                        continue;
                    }
                    const float* src = xc + static_cast<std::size_t>(iy) * w;
                    if (stride == 1) {
                        const int lo = std::clamp(pad - kj, 0, ow);
                        const int hi = std::clamp(w + pad - kj, lo, ow);
                        std::fill_n(dst, lo, 0.0f);
                        std::memcpy(dst + lo, src + lo - pad + kj, sizeof(float) * (hi - lo));
                        std::fill(dst + hi, dst + ow, 0.0f);
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride - pad + kj;
                            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col; dx must be zeroed by the caller.
void col2im(const float* col, int channels, int h, int w, int k, int stride, int pad, int oh, int ow, float* dx) {
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < channels; ++c) {
        float* xc = dx + static_cast<std::size_t>(c) * h * w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const float* row = col + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * plane;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    const float* src = row + static_cast<std::size_t>(oy) * ow;
                    float* dst = xc + static_cast<std::size_t>(iy) * w;
                    if (stride == 1) {
                        const int lo = std::clamp(pad - kj, 0, ow);
                        const int hi = std::clamp(w + pad - kj, lo, ow);
                        for (int ox = lo; ox < hi; ++ox) dst[ox - pad + kj] += src[ox];
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride - pad + kj;
                            if (ix >= 0 && ix < w) dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int padding,
               bool bias)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding), has_bias_(bias) {
    if (bias) this->bias = Parameter(name + ".bias", {1, out_channels, 1, 1});
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.c() != in_)
        throw ValidationError("conv '" + weight.name + "': expected " + std::to_string(in_) + " input channels, got " +
                              std::to_string(x.c()));
    const int oh = (x.h() + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (x.w() + 2 * pad_ - k_) / stride_ + 1;
    const int kdim = in_ * k_ * k_;
    const int npix = oh * ow;
    input_ = x;
    Tensor y(x.n(), out_, oh, ow);
    if (!pointwise()) col_.resize(static_cast<std::size_t>(kdim) * npix);
    for (int n = 0; n < x.n(); ++n) {
        const float* col = x.sample(n).data();
        if (!pointwise()) {
            im2col(col, in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, col_.data());
            col = col_.data();
        }
        float* yn = y.sample(n).data();
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_, npix, kdim, 1.0f, weight.value.data(), kdim, col,
                    npix, 0.0f, yn, npix);
        if (has_bias_)
            for (int o = 0; o < out_; ++o) {
                const float b = bias.value.data()[o];
                float* p = yn + static_cast<std::size_t>(o) * npix;
                for (int i = 0; i < npix; ++i) p[i] += b;
            }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = input_;
    const int oh = dy.h();
    const int ow = dy.w();
    const int kdim = in_ * k_ * k_;
    const int npix = oh * ow;
    Tensor dx(x.shape());
    for (int n = 0; n < x.n(); ++n) {
        const float* dyn = dy.sample(n).data();
        const float* col = x.sample(n).data();
        if (!pointwise()) {
            im2col(col, in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, col_.data());
            col = col_.data();
        }
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_, kdim, npix, 1.0f, dyn, npix, col, npix, 1.0f,
                    weight.grad.data(), kdim);
        if (has_bias_)
            for (int o = 0; o < out_; ++o) {
                const float* p = dyn + static_cast<std::size_t>(o) * npix;
                double s = 0;
                for (int i = 0; i < npix; ++i) s += p[i];
                bias.grad.data()[o] += static_cast<float>(s);
            }
        if (pointwise()) {
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, npix, out_, 1.0f, weight.value.data(), kdim,
                        dyn, npix, 0.0f, dx.sample(n).data(), npix);
        } else {
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, npix, out_, 1.0f, weight.value.data(), kdim,
                        dyn, npix, 0.0f, col_.data(), npix);
            col2im(col_.data(), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, dx.sample(n).data());
        }
    }
    return dx;
}

void Conv2d::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(const std::string& name, int in_channels, int out_channels, int factor)
    : weight(name + ".weight", {in_channels, out_channels, factor, factor}),
      in_(in_channels), out_(out_channels), f_(factor) {}

Tensor ConvTranspose2d::forward(const Tensor& x) {
    if (x.c() != in_)
        throw ValidationError("transposed conv '" + weight.name + "': expected " + std::to_string(in_) +
                              " input channels, got " + std::to_string(x.c()));
    input_ = x;
    const int h = x.h(), w = x.w();
    const int npix = h * w;
    const int rows = out_ * f_ * f_;
    col_.resize(static_cast<std::size_t>(rows) * npix);
    Tensor y(x.n(), out_, h * f_, w * f_);
    for (int n = 0; n < x.n(); ++n) {
        cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, rows, npix, in_, 1.0f, weight.value.data(), rows,
                    x.sample(n).data(), npix, 0.0f, col_.data(), npix);
        for (int o = 0; o < out_; ++o)
            for (int a = 0; a < f_; ++a)
                for (int b = 0; b < f_; ++b) {
                    const float* src = col_.data() + static_cast<std::size_t>((o * f_ + a) * f_ + b) * npix;
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < w; ++j) y(n, o, i * f_ + a, j * f_ + b) = src[i * w + j];
                }
    }
    return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy) {
    const Tensor& x = input_;
    const int h = x.h(), w = x.w();
    const int npix = h * w;
    const int rows = out_ * f_ * f_;
    Tensor dx(x.shape());
    for (int n = 0; n < x.n(); ++n) {
        for (int o = 0; o < out_; ++o)
            for (int a = 0; a < f_; ++a)
                for (int b = 0; b < f_; ++b) {
                    float* dst = col_.data() + static_cast<std::size_t>((o * f_ + a) * f_ + b) * npix;
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < w; ++j) dst[i * w + j] = dy(n, o, i * f_ + a, j * f_ + b);
                }
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, in_, rows, npix, 1.0f, x.sample(n).data(), npix,
                    col_.data(), npix, 1.0f, weight.grad.data(), rows);
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, in_, npix, rows, 1.0f, weight.value.data(), rows,
                    col_.data(), npix, 0.0f, dx.sample(n).data(), npix);
    }
    return dx;
}

void ConvTranspose2d::collect(std::vector<Parameter*>& out) { out.push_back(&weight); }

// ---------------------------------------------------------------------------
// Group normalization

namespace {

void group_norm_forward(const Tensor& x, int groups, const float* scale, const float* bias, float eps, Tensor& y,
                        Tensor* normalized, std::vector<float>* rstd_out) {
    const int channels = x.c();
    if (groups <= 0 || channels % groups != 0)
        throw ValidationError("group_normalize: " + std::to_string(channels) + " channels not divisible by " +
                              std::to_string(groups) + " groups");
    const int per_group = channels / groups;
    const std::size_t plane = x.shape().plane();
    const std::size_t count = per_group * plane;
    y = Tensor(x.shape());
    if (normalized) *normalized = Tensor(x.shape());
    if (rstd_out) rstd_out->assign(static_cast<std::size_t>(x.n()) * groups, 0.0f);
    for (int n = 0; n < x.n(); ++n) {
        for (int g = 0; g < groups; ++g) {
            const std::size_t offset = (static_cast<std::size_t>(n) * channels + g * per_group) * plane;
            const float* src = x.data() + offset;
            double mean = 0;
            for (std::size_t i = 0; i < count; ++i) mean += src[i];
            mean /= count;
            double var = 0;
            for (std::size_t i = 0; i < count; ++i) {
                const double d = src[i] - mean;
                var += d * d;
            }
            var /= count;
            const auto rstd = static_cast<float>(1.0 / std::sqrt(var + eps));
            const auto m = static_cast<float>(mean);
            if (rstd_out) (*rstd_out)[static_cast<std::size_t>(n) * groups + g] = rstd;
            for (int cc = 0; cc < per_group; ++cc) {
                const int c = g * per_group + cc;
                const float* s = src + cc * plane;
                float* d = y.data() + offset + cc * plane;
                float* xh = normalized ? normalized->data() + offset + cc * plane : nullptr;
                for (std::size_t i = 0; i < plane; ++i) {
                    const float v = (s[i] - m) * rstd;
                    if (xh) xh[i] = v;
                    d[i] = v * scale[c] + bias[c];
                }
            }
        }
    }
}

}  // namespace

Tensor group_normalize(const Tensor& x, int groups, std::span<const float> scale, std::span<const float> bias,
                       float eps) {
    if (scale.size() != static_cast<std::size_t>(x.c()) || bias.size() != static_cast<std::size_t>(x.c()))
        throw ValidationError("group_normalize: scale/bias length must equal the channel count");
    Tensor y;
    group_norm_forward(x, groups, scale.data(), bias.data(), eps, y, nullptr, nullptr);
    return y;
}

GroupNorm::GroupNorm(const std::string& name, int channels, int groups, float eps)
    : scale(name + ".scale", {1, channels, 1, 1}), bias(name + ".bias", {1, channels, 1, 1}),
      channels_(channels), groups_(groups), eps_(eps) {
    if (groups <= 0 || channels % groups != 0)
        throw ValidationError("group norm '" + name + "': " + std::to_string(channels) +
                              " channels not divisible by " + std::to_string(groups) + " groups");
    scale.value.fill(1.0f);
}

Tensor GroupNorm::forward(const Tensor& x) {
    if (x.c() != channels_) throw ValidationError("group norm '" + scale.name + "': channel mismatch");
    Tensor y;
    group_norm_forward(x, groups_, scale.value.data(), bias.value.data(), eps_, y, &normalized_, &rstd_);
    return y;
}

Tensor GroupNorm::backward(const Tensor& dy) {
    const Shape4 s = normalized_.shape();
    const int per_group = channels_ / groups_;
    const std::size_t plane = s.plane();
    const std::size_t count = per_group * plane;
    Tensor dx(s);
    std::vector<float> dxhat(count);
    for (int n = 0; n < s.n; ++n) {
        for (int g = 0; g < groups_; ++g) {
            const std::size_t offset = (static_cast<std::size_t>(n) * channels_ + g * per_group) * plane;
            const float* xh = normalized_.data() + offset;
            const float* d = dy.data() + offset;
            double sum1 = 0, sum2 = 0;
            for (int cc = 0; cc < per_group; ++cc) {
                const int c = g * per_group + cc;
                const float gamma = scale.value.data()[c];
                double dgamma = 0, dbeta = 0;
                for (std::size_t i = 0; i < plane; ++i) {
                    const std::size_t k = cc * plane + i;
                    dgamma += static_cast<double>(d[k]) * xh[k];
                    dbeta += d[k];
                    dxhat[k] = d[k] * gamma;
                    sum1 += dxhat[k];
                    sum2 += static_cast<double>(dxhat[k]) * xh[k];
                }
                scale.grad.data()[c] += static_cast<float>(dgamma);
                bias.grad.data()[c] += static_cast<float>(dbeta);
            }
            const float rstd = rstd_[static_cast<std::size_t>(n) * groups_ + g];
            const auto mean1 = static_cast<float>(sum1 / count);
            const auto mean2 = static_cast<float>(sum2 / count);
            float* out = dx.data() + offset;
            for (std::size_t k = 0; k < count; ++k) out[k] = rstd * (dxhat[k] - mean1 - xh[k] * mean2);
        }
    }
    return dx;
}

void GroupNorm::collect(std::vector<Parameter*>& out) {
    out.push_back(&scale);
    out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// Pointwise and structural ops

Tensor LeakyRelu::forward(const Tensor& x) {
    output_ = x;
    for (float& v : output_.storage())
        if (v < 0) v *= slope_;
    return output_;
}

Tensor LeakyRelu::backward(const Tensor& dy) {
    Tensor dx = dy;
    const float* y = output_.data();
    float* d = dx.data();
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (y[i] < 0) d[i] *= slope_;
    return dx;
}

Tensor SpatialDropout::forward(const Tensor& x, Mode mode, std::mt19937_64* rng) {
    shape_ = x.shape();
    channel_scale_.clear();
    if (mode == Mode::eval || rate_ <= 0.0) return x;
    if (!rng) throw ValidationError("spatial dropout in training mode needs an rng stream");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const float keep_scale = rate_ >= 1.0 ? 0.0f : static_cast<float>(1.0 / (1.0 - rate_));
    channel_scale_.resize(static_cast<std::size_t>(x.n()) * x.c());
    for (float& s : channel_scale_) s = unit(*rng) < rate_ ? 0.0f : keep_scale;
    Tensor y = x;
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c) {
            const float s = channel_scale_[static_cast<std::size_t>(n) * x.c() + c];
            for (float& v : y.plane(n, c)) v *= s;
        }
    return y;
}

Tensor SpatialDropout::backward(const Tensor& dy) {
    if (channel_scale_.empty()) return dy;
    Tensor dx = dy;
    for (int n = 0; n < shape_.n; ++n)
        for (int c = 0; c < shape_.c; ++c) {
            const float s = channel_scale_[static_cast<std::size_t>(n) * shape_.c + c];
            for (float& v : dx.plane(n, c)) v *= s;
        }
    return dx;
}

Tensor BilinearUpsample::forward(const Tensor& x) {
    in_shape_ = x.shape();
    if (factor_ == 1) return x;
    const int oh = x.h() * factor_, ow = x.w() * factor_;
    const auto ty = bilinear_taps(x.h(), oh);
    const auto tx = bilinear_taps(x.w(), ow);
    Tensor y(x.n(), x.c(), oh, ow);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c) {
            const float* src = x.plane(n, c).data();
            float* dst = y.plane(n, c).data();
            for (int i = 0; i < oh; ++i) {
                const ResampleTap& a = ty[i];
                const float* r0 = src + a.lo * x.w();
                const float* r1 = src + a.hi * x.w();
                for (int j = 0; j < ow; ++j) {
                    const ResampleTap& b = tx[j];
                    const float top = r0[b.lo] * (1 - b.frac) + r0[b.hi] * b.frac;
                    const float bot = r1[b.lo] * (1 - b.frac) + r1[b.hi] * b.frac;
                    dst[i * ow + j] = top * (1 - a.frac) + bot * a.frac;
                }
            }
        }
    return y;
}

Tensor BilinearUpsample::backward(const Tensor& dy) {
    if (factor_ == 1) return dy;
    const int oh = dy.h(), ow = dy.w();
    const auto ty = bilinear_taps(in_shape_.h, oh);
    const auto tx = bilinear_taps(in_shape_.w, ow);
    Tensor dx(in_shape_);
    const int w = in_shape_.w;
    for (int n = 0; n < dy.n(); ++n)
        for (int c = 0; c < dy.c(); ++c) {
            const float* src = dy.plane(n, c).data();
            float* dst = dx.plane(n, c).data();
            for (int i = 0; i < oh; ++i) {
                const ResampleTap& a = ty[i];
                for (int j = 0; j < ow; ++j) {
                    const ResampleTap& b = tx[j];
                    const float g = src[i * ow + j];
                    dst[a.lo * w + b.lo] += g * (1 - a.frac) * (1 - b.frac);
                    dst[a.lo * w + b.hi] += g * (1 - a.frac) * b.frac;
                    dst[a.hi * w + b.lo] += g * a.frac * (1 - b.frac);
                    dst[a.hi * w + b.hi] += g * a.frac * b.frac;
                }
            }
        }
    return dx;
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    add_inplace(out, b);
    return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    float* p = a.data();
    const float* q = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) p[i] += q[i];
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
        throw ValidationError("concat_channels: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
    for (int n = 0; n < a.n(); ++n) {
        auto dst = out.sample(n);
        std::copy(a.sample(n).begin(), a.sample(n).end(), dst.begin());
        std::copy(b.sample(n).begin(), b.sample(n).end(), dst.begin() + a.shape().sample());
    }
    return out;
}

void split_channels(const Tensor& ab, int a_channels, Tensor& a, Tensor& b) {
    a = Tensor(ab.n(), a_channels, ab.h(), ab.w());
    b = Tensor(ab.n(), ab.c() - a_channels, ab.h(), ab.w());
    for (int n = 0; n < ab.n(); ++n) {
        auto src = ab.sample(n);
        std::copy(src.begin(), src.begin() + a.shape().sample(), a.sample(n).begin());
        std::copy(src.begin() + a.shape().sample(), src.end(), b.sample(n).begin());
    }
}

}  // namespace echoseg
