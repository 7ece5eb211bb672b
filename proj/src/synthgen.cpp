#include "echoseg/synthgen.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "echoseg/dataset.h"
#include "echoseg/errors.h"
#include "echoseg/png_io.h"

namespace echoseg {

namespace fs = std::filesystem;

void PhantomSpec::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ValidationError("phantom." + field + " " + why);
    };
    if (image_size < 16) fail("image_size", "must be at least 16 (got " + std::to_string(image_size) + ")");
    if (n_cases < 1) fail("n_cases", "must be at least 1 (got " + std::to_string(n_cases) + ")");
    if (!(abnormal_fraction >= 0.0 && abnormal_fraction <= 1.0))
        fail("abnormal_fraction", "must be in [0, 1] (got " + std::to_string(abnormal_fraction) + ")");
    if (!(drop_probability >= 0.0 && drop_probability <= 1.0))
        fail("drop_probability", "must be in [0, 1] (got " + std::to_string(drop_probability) + ")");
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level))
        fail("noise_level", "must be non-negative (got " + std::to_string(noise_level) + ")");
}

bool Structure::contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double u = c * dx + s * dy;   // along the structure's own x axis
    const double v = -s * dx + c * dy;
    if (kind == ShapeKind::rectangle) return std::abs(u) <= rx && std::abs(v) <= ry;
    return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
}

namespace {

constexpr double kLayoutScale = 0.9;
constexpr double kDeg = std::numbers::pi / 180.0;

// Layouts on a unit frame, x right, y down. Sizes keep the largest:smallest area
// ratio above 20 (left ventricle vs descending aorta).
const std::vector<Structure>& unit_layout(View view) {
    static const std::vector<Structure> four_chamber = {
        {1, ShapeKind::ellipse, 0.65, 0.34, 0.12, 0.17, 0.0, 0.12f},
        {2, ShapeKind::ellipse, 0.36, 0.35, 0.10, 0.14, 0.0, 0.17f},
        {3, ShapeKind::ellipse, 0.64, 0.63, 0.09, 0.075, 0.0, 0.21f},
        {4, ShapeKind::ellipse, 0.36, 0.63, 0.085, 0.075, 0.0, 0.26f},
        {5, ShapeKind::ellipse, 0.60, 0.775, 0.03, 0.03, 0.0, 0.14f},
        {10, ShapeKind::ellipse, 0.47, 0.87, 0.05, 0.05, 0.0, 0.95f},
        {11, ShapeKind::rectangle, 0.50, 0.33, 0.02, 0.12, 0.0, 0.80f},
        {12, ShapeKind::rectangle, 0.50, 0.63, 0.02, 0.065, 0.0, 0.70f},
        {13, ShapeKind::rectangle, 0.64, 0.53, 0.08, 0.014, 0.0, 0.88f},
        {14, ShapeKind::rectangle, 0.36, 0.53, 0.07, 0.014, 0.0, 0.62f},
    };
    static const std::vector<Structure> three_vessel = {
        {6, ShapeKind::ellipse, 0.36, 0.42, 0.10, 0.085, 30 * kDeg, 0.18f},
        {7, ShapeKind::ellipse, 0.56, 0.40, 0.07, 0.065, 0.0, 0.13f},
        {8, ShapeKind::ellipse, 0.72, 0.38, 0.05, 0.05, 0.0, 0.23f},
        {9, ShapeKind::ellipse, 0.63, 0.56, 0.045, 0.045, 0.0, 0.33f},
        {10, ShapeKind::ellipse, 0.50, 0.80, 0.06, 0.06, 0.0, 0.95f},
    };
    return view == View::four_chamber ? four_chamber : three_vessel;
}

constexpr float kTissue = 0.5f;
constexpr float kOutside = 0.06f;
constexpr double kThoraxRadius = 0.47;

}  // namespace

CasePose random_pose(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> rot(-15 * kDeg, 15 * kDeg);
    std::uniform_real_distribution<double> shift(-0.05, 0.05);
    std::uniform_real_distribution<double> scale(0.92, 1.05);
    CasePose pose;
    pose.rotation = rot(rng);
    pose.shift_x = shift(rng);
    pose.shift_y = shift(rng);
    pose.scale = scale(rng);
    return pose;
}

std::vector<Structure> phantom_structures(View view, const CasePose& pose, int image_size) {
    const double size = image_size;
    const double c = std::cos(pose.rotation);
    const double s = std::sin(pose.rotation);
    const double k = kLayoutScale * pose.scale;
    std::vector<Structure> placed;
    for (Structure st : unit_layout(view)) {
        const double ux = (st.cx - 0.5) * k;
        const double uy = (st.cy - 0.5) * k;
        st.cx = (0.5 + pose.shift_x + c * ux - s * uy) * size;
        st.cy = (0.5 + pose.shift_y + s * ux + c * uy) * size;
        st.rx *= k * size;
        st.ry *= k * size;
        st.angle += pose.rotation;
        placed.push_back(st);
    }
    return placed;
}

LabelImage rasterize(const Structure& s, int image_size) {
    LabelImage mask(image_size, image_size);
    for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x)
            if (s.contains(x + 0.5, y + 0.5)) mask.at(y, x) = 1;
    return mask;
}

PhantomImage render_phantom(View view, const CasePose& pose, std::span<const int> dropped, int image_size,
                            double noise_level, std::mt19937_64& rng) {
    PhantomImage out{FloatImage(image_size, image_size, kOutside), LabelImage(image_size, image_size)};

    // Thorax disc with a smooth low-frequency tissue texture.
    const double size = image_size;
    const double tcx = (0.5 + pose.shift_x) * size;
    const double tcy = (0.5 + pose.shift_y) * size;
    const double tr = kThoraxRadius * pose.scale * size;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    struct Blob {
        double x, y, sigma, amp;
    };
    std::vector<Blob> blobs(4);
    for (auto& b : blobs)
        b = {unit(rng) * size, unit(rng) * size, (0.1 + 0.15 * unit(rng)) * size, (unit(rng) - 0.5) * 0.12};
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            const double dx = x + 0.5 - tcx;
            const double dy = y + 0.5 - tcy;
            if (dx * dx + dy * dy > tr * tr) continue;
            double v = kTissue;
            for (const auto& b : blobs) {
                const double ex = x + 0.5 - b.x;
                const double ey = y + 0.5 - b.y;
                v += b.amp * std::exp(-(ex * ex + ey * ey) / (2 * b.sigma * b.sigma));
            }
            out.image.at(y, x) = static_cast<float>(v);
        }
    }

    for (const Structure& st : phantom_structures(view, pose, image_size)) {
        if (std::find(dropped.begin(), dropped.end(), st.label) != dropped.end()) continue;
        for (int y = 0; y < image_size; ++y) {
            for (int x = 0; x < image_size; ++x) {
                if (out.labels.at(y, x) != kBackground || !st.contains(x + 0.5, y + 0.5)) continue;
                out.labels.at(y, x) = static_cast<std::uint8_t>(st.label);
                out.image.at(y, x) = st.intensity;
            }
        }
    }

    std::normal_distribution<float> speckle(0.0f, 1.0f);
    const auto noise = static_cast<float>(noise_level);
    for (float& v : out.image.pixels) v = std::clamp(v * (1.0f + noise * speckle(rng)), 0.0f, 1.0f);
    return out;
}

fs::path generate(const PhantomSpec& spec, const fs::path& out_dir) {
    spec.validate();
    try {
        fs::create_directories(out_dir / "images");
        fs::create_directories(out_dir / "labels");
    } catch (const fs::filesystem_error& e) {
        throw IoError("cannot create dataset directory '" + out_dir.string() + "': " + e.what());
    }

    std::mt19937_64 top(spec.seed);
    std::vector<int> order(spec.n_cases);
    for (int i = 0; i < spec.n_cases; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), top);
    const auto n_abnormal = static_cast<int>(std::lround(spec.abnormal_fraction * spec.n_cases));
    std::vector<bool> abnormal(spec.n_cases, false);
    for (int i = 0; i < n_abnormal; ++i) abnormal[order[i]] = true;

    std::vector<SampleDescriptor> records;
    for (int c = 0; c < spec.n_cases; ++c) {
        std::seed_seq seq{static_cast<std::uint64_t>(spec.seed), static_cast<std::uint64_t>(c)};
        std::mt19937_64 rng(seq);
        const CasePose pose = random_pose(rng);

        std::vector<int> dropped;
        if (abnormal[c]) {
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            std::uniform_int_distribution<int> which(1, kNumForegroundLabels);
            if (unit(rng) < spec.drop_probability) dropped.push_back(which(rng));
        }

        char id[32];
        std::snprintf(id, sizeof id, "case_%03d", c);
        for (View view : {View::three_vessel_trachea, View::four_chamber}) {
            PhantomImage ph = render_phantom(view, pose, dropped, spec.image_size, spec.noise_level, rng);
            const std::string stem = std::string(id) + "_" + std::string(to_string(view)) + ".png";
            SampleDescriptor d;
            d.case_id = id;
            d.view = view;
            d.normality = abnormal[c] ? Normality::abnormal : Normality::normal;
            d.image_path = out_dir / "images" / stem;
            d.label_path = out_dir / "labels" / stem;
            write_intensity_png(d.image_path, ph.image);
            write_png_gray8(d.label_path, ph.labels);
            records.push_back(std::move(d));
        }
    }
    const fs::path manifest = out_dir / "manifest.jsonl";
    write_manifest(manifest, records);
    return manifest;
}

}  // namespace echoseg
