#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "echoseg/image.h"
#include "echoseg/taxonomy.h"

namespace echoseg {

// One manifest record. Pixels are not loaded.
struct SampleDescriptor {
    std::string case_id;
    View view = View::four_chamber;
    Normality normality = Normality::normal;
    std::filesystem::path image_path;
    std::filesystem::path label_path;
};

struct Sample {
    std::string case_id;
    View view = View::four_chamber;
    Normality normality = Normality::normal;
    FloatImage image;     // intensities, [0, 1] before centering
    LabelImage labels;    // values 0..14
};

// Reads a JSON-lines manifest. Relative paths resolve against the manifest's directory.
// Throws IoError for a missing manifest or referenced file, ValidationError for bad
// fields or a duplicate (case_id, view) pair.
std::vector<SampleDescriptor> load_manifest(const std::filesystem::path& path);

// Paths are written relative to the manifest directory when possible.
void write_manifest(const std::filesystem::path& path, std::span<const SampleDescriptor> records);

struct PreprocessedPair {
    FloatImage image;
    LabelImage labels;
};

// Zero-pads to square then resizes to target_size (bilinear image, nearest labels).
PreprocessedPair preprocess(const FloatImage& image, const LabelImage& labels, int target_size);

Sample load_sample(const SampleDescriptor& record, int target_size);
std::vector<Sample> load_samples(std::span<const SampleDescriptor> records, int target_size);

// Ground-truth label presence; has(l) for l in 1..14.
struct PresenceVector {
    std::array<bool, kNumForegroundLabels> present{};

    bool has(int label) const { return present[label - 1]; }
    std::vector<int> labels() const;
    friend bool operator==(const PresenceVector&, const PresenceVector&) = default;
};

PresenceVector presence(const LabelImage& labels);

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct CaseInfo {
    std::string case_id;
    Normality normality = Normality::normal;
};

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

// Patient-level split stratified by normality. Per-portion counts use largest-remainder
// rounding inside each stratum; the assignment is deterministic under `seed`.
DatasetSplit split_patients(std::span<const CaseInfo> cases, const SplitRatios& ratios, std::uint64_t seed);

// Distinct cases of a manifest in first-seen order.
std::vector<CaseInfo> cases_of(std::span<const SampleDescriptor> records);

// Records whose case is in `case_ids` and whose view passes `filter`.
std::vector<SampleDescriptor> select_records(std::span<const SampleDescriptor> records,
                                             std::span<const std::string> case_ids, ViewFilter filter);

}  // namespace echoseg
