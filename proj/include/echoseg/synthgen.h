#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "echoseg/image.h"
#include "echoseg/taxonomy.h"

namespace echoseg {

struct PhantomSpec {
    int image_size = 128;
    int n_cases = 40;
    double abnormal_fraction = 0.33;
    double drop_probability = 0.5;  // chance an abnormal case loses one structure
    double noise_level = 0.15;      // multiplicative speckle strength
    std::uint64_t seed = 0;

    void validate() const;  // throws ValidationError naming the offending field
};

enum class ShapeKind { ellipse, rectangle };

// One anatomical analog in pixel coordinates. For rectangles rx/ry are half extents.
struct Structure {
    int label = 0;
    ShapeKind kind = ShapeKind::ellipse;
    double cx = 0, cy = 0;
    double rx = 0, ry = 0;
    double angle = 0;  // radians
    float intensity = 0;

    bool contains(double x, double y) const;
};

// Rigid-plus-scale placement of a whole view layout inside the frame.
struct CasePose {
    double rotation = 0;  // radians
    double shift_x = 0;   // fraction of image size
    double shift_y = 0;
    double scale = 1;
};

CasePose random_pose(std::mt19937_64& rng);

// Structures of one view, in paint order, placed by `pose` on an image_size frame.
std::vector<Structure> phantom_structures(View view, const CasePose& pose, int image_size);

LabelImage rasterize(const Structure& s, int image_size);  // 1 inside, 0 outside

struct PhantomImage {
    FloatImage image;
    LabelImage labels;
};

// Renders one view. Structures whose label is in `dropped` are omitted from both the
// image and the label map. Pixels are never relabelled once painted.
PhantomImage render_phantom(View view, const CasePose& pose, std::span<const int> dropped, int image_size,
                            double noise_level, std::mt19937_64& rng);

// Writes images/, labels/ and manifest.jsonl under out_dir; returns the manifest path.
std::filesystem::path generate(const PhantomSpec& spec, const std::filesystem::path& out_dir);

}  // namespace echoseg
