#pragma once

#include <cstdint>
#include <random>

#include "echoseg/image.h"

namespace echoseg {

struct AugmentConfig {
    double apply_probability = 0.8;
    double rotation_deg = 30.0;   // rotation ~ U(-rotation_deg, rotation_deg)
    double shift_fraction = 0.2;  // per-axis shift ~ U(-f, f) of the image size
    double scale_low = 0.8;
    double scale_high = 1.2;
    bool hflip = true;
    std::uint64_t seed = 0;

    void validate() const;
};

// One drawn transform. Composition about the image center: flip, scale, rotate, shift.
struct AugmentParams {
    bool applied = false;
    double rotation_deg = 0;
    double shift_x = 0;  // fraction of width
    double shift_y = 0;  // fraction of height
    double scale = 1;
    bool flip = false;
};

// Source-to-destination map in pixel-center coordinates.
Affine2D forward_transform(const AugmentParams& params, int height, int width);

AugmentParams sample_params(const AugmentConfig& cfg, std::mt19937_64& rng);

struct ImagePair {
    FloatImage image;
    LabelImage labels;
};

// Warps the image bilinearly and the labels nearest-neighbor with the same transform.
// Out-of-frame pixels become 0 / background.
ImagePair apply_transform(const FloatImage& image, const LabelImage& labels, const AugmentParams& params);

// Draws parameters from `rng` (advancing it) and applies them. Returns the inputs
// unchanged when the apply gate does not fire.
ImagePair augment_pair(const FloatImage& image, const LabelImage& labels, const AugmentConfig& cfg,
                       std::mt19937_64& rng);

// Independent per-sample stream so augmentation does not depend on worker scheduling.
std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t sample_index, std::uint64_t epoch);

// Subtracts the image mean.
FloatImage center_intensity(const FloatImage& image);

}  // namespace echoseg
