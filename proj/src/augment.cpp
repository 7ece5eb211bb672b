#include "echoseg/augment.h"

#include <cmath>
#include <numbers>
#include <string>

#include "echoseg/errors.h"

namespace echoseg {

void AugmentConfig::validate() const {
    if (!(apply_probability >= 0.0 && apply_probability <= 1.0))
        throw ValidationError("augment.apply_probability must be in [0, 1]");
    if (!(rotation_deg >= 0.0)) throw ValidationError("augment.rotation_deg must be non-negative");
    if (!(shift_fraction >= 0.0)) throw ValidationError("augment.shift_fraction must be non-negative");
    if (!(scale_low > 0.0 && scale_low <= scale_high))
        throw ValidationError("augment.scale_range must satisfy 0 < low <= high");
}

Affine2D forward_transform(const AugmentParams& p, int height, int width) {
    const double cx = width / 2.0;
    const double cy = height / 2.0;
    Affine2D t = Affine2D::translation(-cx, -cy);
    if (p.flip) t = Affine2D::scaling(-1, 1) * t;
    t = Affine2D::scaling(p.scale, p.scale) * t;
    t = Affine2D::rotation(p.rotation_deg * std::numbers::pi / 180.0) * t;
    return Affine2D::translation(cx + p.shift_x * width, cy + p.shift_y * height) * t;
}

AugmentParams sample_params(const AugmentConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    AugmentParams p;
    p.applied = unit(rng) < cfg.apply_probability;
    if (!p.applied) return p;
    p.rotation_deg = (2 * unit(rng) - 1) * cfg.rotation_deg;
    p.shift_x = (2 * unit(rng) - 1) * cfg.shift_fraction;
    p.shift_y = (2 * unit(rng) - 1) * cfg.shift_fraction;
    p.scale = cfg.scale_low + unit(rng) * (cfg.scale_high - cfg.scale_low);
    const bool coin = unit(rng) < 0.5;
    p.flip = cfg.hflip && coin;
    return p;
}

ImagePair apply_transform(const FloatImage& image, const LabelImage& labels, const AugmentParams& params) {
    if (image.height != labels.height || image.width != labels.width)
        throw ValidationError("augment: image and label map shapes differ");
    if (!params.applied) return {image, labels};
    const Affine2D inverse = forward_transform(params, image.height, image.width).inverse();
    return {warp_bilinear(image, inverse, 0.0f), warp_nearest(labels, inverse, 0)};
}

ImagePair augment_pair(const FloatImage& image, const LabelImage& labels, const AugmentConfig& cfg,
                       std::mt19937_64& rng) {
    return apply_transform(image, labels, sample_params(cfg, rng));
}

std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t sample_index, std::uint64_t epoch) {
    std::seed_seq seq{seed & 0xffffffffu, seed >> 32, sample_index, epoch, std::uint64_t{0x5eed}};
    return std::mt19937_64(seq);
}

FloatImage center_intensity(const FloatImage& image) {
    if (image.empty()) throw ValidationError("center_intensity: empty image");
    double sum = 0;
    for (float v : image.pixels) sum += v;
    const auto mean = static_cast<float>(sum / image.pixels.size());
    FloatImage out = image;
    for (float& v : out.pixels) v -= mean;
    return out;
}

}  // namespace echoseg
