#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "echoseg/image.h"
#include "echoseg/tensor.h"

namespace echoseg {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Shape4 shape) : name(std::move(n)), value(shape), grad(shape) {}
};

enum class Mode { train, eval };

// Kaiming-normal fill for a leaky-rectifier network.
void init_kaiming(Parameter& p, int fan_in, double slope, std::mt19937_64& rng);

// Each layer caches what its backward pass needs from the latest forward call.
// backward() accumulates into parameter gradients and returns the input gradient.

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int padding,
           bool bias);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(std::vector<Parameter*>& out);

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    Parameter weight;  // [out, in, k, k]
    Parameter bias;    // [1, out, 1, 1], empty when disabled

private:
    bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

    int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
    bool has_bias_ = false;
    Tensor input_;
    std::vector<float> col_;
};

// Transposed convolution with kernel == stride (non-overlapping upsampling).
class ConvTranspose2d {
public:
    ConvTranspose2d() = default;
    ConvTranspose2d(const std::string& name, int in_channels, int out_channels, int factor);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(std::vector<Parameter*>& out);

    Parameter weight;  // [in, out, f, f]

private:
    int in_ = 0, out_ = 0, f_ = 2;
    Tensor input_;
    std::vector<float> col_;
};

// Per-sample normalization over groups of channels, then per-channel affine.
Tensor group_normalize(const Tensor& x, int groups, std::span<const float> scale, std::span<const float> bias,
                       float eps);

class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(const std::string& name, int channels, int groups, float eps);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(std::vector<Parameter*>& out);

    Parameter scale;  // [1, C, 1, 1], init 1
    Parameter bias;   // [1, C, 1, 1], init 0

private:
    int channels_ = 0, groups_ = 1;
    float eps_ = 1e-5f;
    Tensor normalized_;
    std::vector<float> rstd_;  // per (sample, group)
};

class LeakyRelu {
public:
    explicit LeakyRelu(float slope = 0.01f) : slope_(slope) {}

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

private:
    float slope_;
    Tensor output_;
};

// Zeroes whole channels with probability `rate` in training mode and rescales the
// survivors by 1 / (1 - rate). Identity in eval mode.
class SpatialDropout {
public:
    explicit SpatialDropout(double rate = 0.0) : rate_(rate) {}

    Tensor forward(const Tensor& x, Mode mode, std::mt19937_64* rng);
    Tensor backward(const Tensor& dy);
    double rate() const { return rate_; }
    void set_rate(double rate) { rate_ = rate; }

private:
    double rate_;
    std::vector<float> channel_scale_;  // empty when the last forward was an identity
    Shape4 shape_;
};

// Bilinear (half-pixel-center) upsampling by an integer factor.
class BilinearUpsample {
public:
    explicit BilinearUpsample(int factor = 1) : factor_(factor) {}

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

private:
    int factor_;
    Shape4 in_shape_;
};

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& ab, int a_channels, Tensor& a, Tensor& b);

}  // namespace echoseg
