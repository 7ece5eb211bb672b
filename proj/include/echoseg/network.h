#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "echoseg/layers.h"
#include "echoseg/tensor.h"

namespace echoseg {

struct NetworkConfig {
    int in_channels = 1;
    int n_classes = 15;
    int levels = 5;
    int base_channels = 16;                       // doubles at every level
    std::vector<int> convs_per_level{1, 2, 3, 3, 3};
    int kernel_size = 5;
    int gn_groups = 8;
    double dropout_rate = 0.2;
    int deep_supervision_levels = 2;  // capped at levels - 2
    double leaky_slope = 0.01;
    double gn_eps = 1e-5;
    std::uint64_t init_seed = 0;

    void validate() const;  // throws ValidationError
    int channels(int level) const { return base_channels << level; }
    int aux_outputs() const;
    // Decoder level of auxiliary head j (finest tapped level first).
    int aux_level(int j) const;
    void validate_input(int height, int width) const;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// Main prediction plus auxiliary deep-supervision predictions, all at input resolution.
template <typename T>
struct BasicNetworkOutput {
    BasicTensor<T> main;
    std::vector<BasicTensor<T>> aux;
};

using NetworkOutput = BasicNetworkOutput<float>;

// k convolutions (each followed by group norm and a leaky rectifier), channel
// dropout, and a residual shortcut (1x1 convolution when channel counts differ).
class ResidualBlock {
public:
    ResidualBlock() = default;
    ResidualBlock(const std::string& name, int in_channels, int out_channels, int convs, const NetworkConfig& cfg);

    Tensor forward(const Tensor& x, Mode mode, std::mt19937_64* rng);
    Tensor backward(const Tensor& dy);
    void collect(std::vector<Parameter*>& out);

    SpatialDropout& dropout() { return dropout_; }
    Conv2d* shortcut() { return shortcut_ ? &*shortcut_ : nullptr; }

private:
    std::vector<Conv2d> convs_;
    std::vector<GroupNorm> norms_;
    std::vector<LeakyRelu> acts_;
    SpatialDropout dropout_;
    std::optional<Conv2d> shortcut_;
};

// Strided 2x2 convolution (down) or 2x2 transposed convolution (up), then GN and activation.
class ResampleStage {
public:
    ResampleStage() = default;
    ResampleStage(const std::string& name, int in_channels, int out_channels, bool upsample, const NetworkConfig& cfg);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(std::vector<Parameter*>& out);

private:
    bool upsample_ = false;
    Conv2d down_;
    ConvTranspose2d up_;
    GroupNorm norm_;
    LeakyRelu act_;
};

// Residual encoder-decoder with skip concatenation and deep supervision heads.
class VNet {
public:
    explicit VNet(NetworkConfig cfg);

    NetworkOutput forward(const Tensor& batch, Mode mode, std::mt19937_64* rng = nullptr);
    // Accumulates parameter gradients given d(loss)/d(logits) for every output.
    void backward(const NetworkOutput& grad);

    std::vector<Parameter*> parameters();
    std::size_t parameter_count();
    void zero_grad();
    const NetworkConfig& config() const { return cfg_; }

    ResidualBlock& encoder_block(int level) { return encoder_[level]; }
    Conv2d& main_head() { return main_head_; }
    Conv2d& aux_head(int j) { return aux_heads_[j]; }

private:
    NetworkConfig cfg_;
    std::vector<ResidualBlock> encoder_;
    std::vector<ResampleStage> down_;  // down_[i] feeds encoder level i (index 0 unused)
    std::vector<ResampleStage> up_;    // up_[i] produces decoder level i from level i + 1
    std::vector<ResidualBlock> decoder_;
    Conv2d main_head_;
    std::vector<Conv2d> aux_heads_;
    std::vector<BilinearUpsample> aux_upsample_;
};

}  // namespace echoseg
