#include "echoseg/network.h"

#include <algorithm>
#include <string>

#include "echoseg/errors.h"

namespace echoseg {

void NetworkConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("network config: " + msg); };
    if (in_channels < 1) fail("in_channels must be >= 1");
    if (n_classes < 2) fail("n_classes must be >= 2");
    if (levels < 1) fail("levels must be >= 1");
    if (base_channels < 1) fail("base_channels must be >= 1");
    if (static_cast<int>(convs_per_level.size()) != levels)
        fail("convs_per_level needs " + std::to_string(levels) + " entries, got " +
             std::to_string(convs_per_level.size()));
    for (int k : convs_per_level)
        if (k < 1) fail("convs_per_level entries must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0) fail("kernel_size must be a positive odd number");
    if (gn_groups < 1) fail("gn_groups must be >= 1");
    for (int l = 0; l < levels; ++l)
        if (channels(l) % gn_groups != 0)
            fail("channel count " + std::to_string(channels(l)) + " at level " + std::to_string(l) +
                 " is not divisible by gn_groups=" + std::to_string(gn_groups));
    if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0)) fail("dropout_rate must be in [0, 1]");
    if (deep_supervision_levels < 0) fail("deep_supervision_levels must be >= 0");
    if (!(leaky_slope >= 0.0 && leaky_slope <= 1.0)) fail("leaky_slope must be in [0, 1]");
    if (!(gn_eps > 0.0)) fail("gn_eps must be positive");
}

int NetworkConfig::aux_outputs() const { return std::min(deep_supervision_levels, std::max(0, levels - 2)); }

int NetworkConfig::aux_level(int j) const { return levels - 1 - aux_outputs() + j; }

void NetworkConfig::validate_input(int height, int width) const {
    const int div = 1 << (levels - 1);
    if (height < 1 || width < 1 || height % div != 0 || width % div != 0)
        throw ValidationError("input size " + std::to_string(height) + "x" + std::to_string(width) +
                              " is not divisible by 2^(levels-1) = " + std::to_string(div));
}

// ---------------------------------------------------------------------------

ResidualBlock::ResidualBlock(const std::string& name, int in_channels, int out_channels, int convs,
                             const NetworkConfig& cfg)
    : dropout_(cfg.dropout_rate) {
    const int pad = cfg.kernel_size / 2;
    for (int j = 0; j < convs; ++j) {
        const std::string id = std::to_string(j);
        convs_.emplace_back(name + ".conv" + id, j == 0 ? in_channels : out_channels, out_channels, cfg.kernel_size, 1,
                            pad, false);
        norms_.emplace_back(name + ".gn" + id, out_channels, cfg.gn_groups, static_cast<float>(cfg.gn_eps));
        acts_.emplace_back(static_cast<float>(cfg.leaky_slope));
    }
    if (in_channels != out_channels) shortcut_.emplace(name + ".shortcut", in_channels, out_channels, 1, 1, 0, false);
}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode, std::mt19937_64* rng) {
    Tensor h = x;
    for (std::size_t j = 0; j < convs_.size(); ++j) h = acts_[j].forward(norms_[j].forward(convs_[j].forward(h)));
    h = dropout_.forward(h, mode, rng);
    add_inplace(h, shortcut_ ? shortcut_->forward(x) : x);
    return h;
}

Tensor ResidualBlock::backward(const Tensor& dy) {
    Tensor d = dropout_.backward(dy);
    for (std::size_t j = convs_.size(); j-- > 0;) d = convs_[j].backward(norms_[j].backward(acts_[j].backward(d)));
    add_inplace(d, shortcut_ ? shortcut_->backward(dy) : dy);
    return d;
}

void ResidualBlock::collect(std::vector<Parameter*>& out) {
    for (std::size_t j = 0; j < convs_.size(); ++j) {
        convs_[j].collect(out);
        norms_[j].collect(out);
    }
    if (shortcut_) shortcut_->collect(out);
}

ResampleStage::ResampleStage(const std::string& name, int in_channels, int out_channels, bool upsample,
                             const NetworkConfig& cfg)
    : upsample_(upsample),
      norm_(name + ".gn", out_channels, cfg.gn_groups, static_cast<float>(cfg.gn_eps)),
      act_(static_cast<float>(cfg.leaky_slope)) {
    if (upsample)
        up_ = ConvTranspose2d(name + ".tconv", in_channels, out_channels, 2);
    else
        down_ = Conv2d(name + ".conv", in_channels, out_channels, 2, 2, 0, false);
}

Tensor ResampleStage::forward(const Tensor& x) {
    return act_.forward(norm_.forward(upsample_ ? up_.forward(x) : down_.forward(x)));
}

Tensor ResampleStage::backward(const Tensor& dy) {
    const Tensor d = norm_.backward(act_.backward(dy));
    return upsample_ ? up_.backward(d) : down_.backward(d);
}

void ResampleStage::collect(std::vector<Parameter*>& out) {
    if (upsample_)
        up_.collect(out);
    else
        down_.collect(out);
    norm_.collect(out);
}

// ---------------------------------------------------------------------------

VNet::VNet(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int levels = cfg_.levels;
    down_.resize(levels);
    for (int i = 0; i < levels; ++i) {
        const std::string id = std::to_string(i);
        if (i > 0) down_[i] = ResampleStage("down" + id, cfg_.channels(i - 1), cfg_.channels(i), false, cfg_);
        encoder_.emplace_back("enc" + id, i == 0 ? cfg_.in_channels : cfg_.channels(i), cfg_.channels(i),
                              cfg_.convs_per_level[i], cfg_);
    }
    up_.resize(std::max(0, levels - 1));
    decoder_.resize(std::max(0, levels - 1));
    for (int i = levels - 2; i >= 0; --i) {
        const std::string id = std::to_string(i);
        up_[i] = ResampleStage("up" + id, cfg_.channels(i + 1), cfg_.channels(i), true, cfg_);
        decoder_[i] = ResidualBlock("dec" + id, 2 * cfg_.channels(i), cfg_.channels(i), cfg_.convs_per_level[i], cfg_);
    }
    main_head_ = Conv2d("head.main", cfg_.channels(0), cfg_.n_classes, 1, 1, 0, true);
    for (int j = 0; j < cfg_.aux_outputs(); ++j) {
        const int level = cfg_.aux_level(j);
        aux_heads_.emplace_back("head.aux" + std::to_string(j), cfg_.channels(level), cfg_.n_classes, 1, 1, 0, true);
        aux_upsample_.emplace_back(1 << level);
    }

    std::mt19937_64 rng(cfg_.init_seed);
    for (Parameter* p : parameters()) {
        const Shape4 s = p->value.shape();
        const bool is_weight = p->name.ends_with(".weight");
        if (!is_weight) continue;
        const bool transposed = p->name.find(".tconv") != std::string::npos;
        const int fan_in = transposed ? s.n : s.c * s.h * s.w;
        const bool head = p->name.starts_with("head.");
        init_kaiming(*p, fan_in, head ? 1.0 : cfg_.leaky_slope, rng);
    }
}

NetworkOutput VNet::forward(const Tensor& batch, Mode mode, std::mt19937_64* rng) {
    if (batch.c() != cfg_.in_channels)
        throw ValidationError("network expects " + std::to_string(cfg_.in_channels) + " input channel(s), got " +
                              std::to_string(batch.c()));
    cfg_.validate_input(batch.h(), batch.w());
    const int levels = cfg_.levels;

    std::vector<Tensor> skips(levels);
    skips[0] = encoder_[0].forward(batch, mode, rng);
    for (int i = 1; i < levels; ++i) skips[i] = encoder_[i].forward(down_[i].forward(skips[i - 1]), mode, rng);

    std::vector<Tensor> decoded(levels);
    decoded[levels - 1] = std::move(skips[levels - 1]);
    for (int i = levels - 2; i >= 0; --i)
        decoded[i] = decoder_[i].forward(concat_channels(up_[i].forward(decoded[i + 1]), skips[i]), mode, rng);

    NetworkOutput out;
    out.main = main_head_.forward(decoded[0]);
    for (int j = 0; j < cfg_.aux_outputs(); ++j)
        out.aux.push_back(aux_upsample_[j].forward(aux_heads_[j].forward(decoded[cfg_.aux_level(j)])));
    return out;
}

void VNet::backward(const NetworkOutput& grad) {
    const int levels = cfg_.levels;
    if (static_cast<int>(grad.aux.size()) != cfg_.aux_outputs())
        throw ValidationError("backward: expected " + std::to_string(cfg_.aux_outputs()) + " auxiliary gradients");

    std::vector<Tensor> d_decoded(levels);
    d_decoded[0] = main_head_.backward(grad.main);
    for (int j = 0; j < cfg_.aux_outputs(); ++j) {
        Tensor d = aux_heads_[j].backward(aux_upsample_[j].backward(grad.aux[j]));
        Tensor& slot = d_decoded[cfg_.aux_level(j)];
        if (slot.empty())
            slot = std::move(d);
        else
            add_inplace(slot, d);
    }

    std::vector<Tensor> d_skip(levels);
    for (int i = 0; i < levels - 1; ++i) {
        const Tensor d_cat = decoder_[i].backward(d_decoded[i]);
        Tensor d_up;
        split_channels(d_cat, cfg_.channels(i), d_up, d_skip[i]);
        Tensor d_next = up_[i].backward(d_up);
        Tensor& slot = d_decoded[i + 1];
        if (slot.empty())
            slot = std::move(d_next);
        else
            add_inplace(slot, d_next);
    }

    Tensor d = std::move(d_decoded[levels - 1]);
    for (int i = levels - 1; i >= 0; --i) {
        if (i < levels - 1) add_inplace(d, d_skip[i]);
        d = encoder_[i].backward(d);
        if (i > 0) d = down_[i].backward(d);
    }
}

std::vector<Parameter*> VNet::parameters() {
    std::vector<Parameter*> out;
    for (int i = 0; i < cfg_.levels; ++i) {
        if (i > 0) down_[i].collect(out);
        encoder_[i].collect(out);
    }
    for (int i = cfg_.levels - 2; i >= 0; --i) {
        up_[i].collect(out);
        decoder_[i].collect(out);
    }
    main_head_.collect(out);
    for (auto& h : aux_heads_) h.collect(out);
    return out;
}

std::size_t VNet::parameter_count() {
    std::size_t n = 0;
    for (Parameter* p : parameters()) n += p->value.size();
    return n;
}

void VNet::zero_grad() {
    for (Parameter* p : parameters()) p->grad.fill(0.0f);
}

}  // namespace echoseg
