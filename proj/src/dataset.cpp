#include "echoseg/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <unordered_set>

#include "json.hpp"

#include "echoseg/errors.h"
#include "echoseg/png_io.h"

namespace echoseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string record_tag(std::size_t index, const std::string& case_id) {
    return "manifest record " + std::to_string(index) + (case_id.empty() ? "" : " (case '" + case_id + "')");
}

std::string require_string(const json& rec, const char* key, std::size_t index) {
    auto it = rec.find(key);
    if (it == rec.end() || !it->is_string())
        throw ValidationError(record_tag(index, "") + ": missing string field '" + key + "'");
    return it->get<std::string>();
}

}  // namespace

std::vector<SampleDescriptor> load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    const fs::path base = path.parent_path();

    std::vector<SampleDescriptor> records;
    std::set<std::pair<std::string, View>> seen;
    std::string line;
    std::size_t index = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(record_tag(index, "") + ": " + e.what());
        }
        if (!rec.is_object()) throw ValidationError(record_tag(index, "") + ": not a JSON object");
        static const std::set<std::string> allowed = {"case_id", "view", "normality", "image_path", "label_path"};
        for (const auto& [key, _] : rec.items())
            if (!allowed.count(key)) throw ValidationError(record_tag(index, "") + ": unknown key '" + key + "'");

        SampleDescriptor d;
        d.case_id = require_string(rec, "case_id", index);
        if (d.case_id.empty()) throw ValidationError(record_tag(index, "") + ": empty case_id");
        try {
            d.view = parse_view(require_string(rec, "view", index));
            d.normality = parse_normality(require_string(rec, "normality", index));
        } catch (const ValidationError& e) {
            throw ValidationError(record_tag(index, d.case_id) + ": " + e.what());
        }
        d.image_path = require_string(rec, "image_path", index);
        d.label_path = require_string(rec, "label_path", index);
        if (d.image_path.is_relative()) d.image_path = base / d.image_path;
        if (d.label_path.is_relative()) d.label_path = base / d.label_path;

        if (!seen.emplace(d.case_id, d.view).second)
            throw ValidationError(record_tag(index, d.case_id) + ": duplicate view " + std::string(to_string(d.view)));
        if (!fs::exists(d.image_path))
            throw IoError(record_tag(index, d.case_id) + ": image file '" + d.image_path.string() + "' not found");
        if (!fs::exists(d.label_path))
            throw IoError(record_tag(index, d.case_id) + ": label file '" + d.label_path.string() + "' not found");
        records.push_back(std::move(d));
        ++index;
    }
    return records;
}

void write_manifest(const fs::path& path, std::span<const SampleDescriptor> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
    const fs::path base = fs::absolute(path).parent_path();
    auto rel = [&](const fs::path& p) {
        const fs::path r = fs::absolute(p).lexically_relative(base);
        return (r.empty() ? p : r).generic_string();
    };
    for (const auto& d : records) {
        json rec = json::object();
        rec["case_id"] = d.case_id;
        rec["view"] = std::string(to_string(d.view));
        rec["normality"] = std::string(to_string(d.normality));
        rec["image_path"] = rel(d.image_path);
        rec["label_path"] = rel(d.label_path);
        out << rec.dump() << '\n';
    }
    if (!out) throw IoError("failed writing manifest '" + path.string() + "'");
}

PreprocessedPair preprocess(const FloatImage& image, const LabelImage& labels, int target_size) {
    if (image.empty() || labels.empty()) throw ValidationError("preprocess: empty image");
    if (image.height != labels.height || image.width != labels.width)
        throw ValidationError("preprocess: image and label map shapes differ");
    if (target_size < 1) throw ValidationError("preprocess: target_size must be positive");
    FloatImage img = pad_to_square(image, 0.0f);
    LabelImage lab = pad_to_square(labels, std::uint8_t{kBackground});
    return {resize_bilinear(img, target_size, target_size), resize_nearest(lab, target_size, target_size)};
}

Sample load_sample(const SampleDescriptor& record, int target_size) {
    FloatImage image = read_intensity_png(record.image_path);
    LabelImage labels = read_label_png(record.label_path);
    auto [img, lab] = preprocess(image, labels, target_size);
    return {record.case_id, record.view, record.normality, std::move(img), std::move(lab)};
}

std::vector<Sample> load_samples(std::span<const SampleDescriptor> records, int target_size) {
    std::vector<Sample> samples;
    samples.reserve(records.size());
    for (const auto& r : records) samples.push_back(load_sample(r, target_size));
    return samples;
}

std::vector<int> PresenceVector::labels() const {
    std::vector<int> ids;
    for (int l = 1; l <= kNumForegroundLabels; ++l)
        if (has(l)) ids.push_back(l);
    return ids;
}

PresenceVector presence(const LabelImage& labels) {
    PresenceVector p;
    for (std::uint8_t v : labels.pixels) {
        if (v > kNumForegroundLabels) throw ValidationError("presence: label value " + std::to_string(v) + " out of range");
        if (v != kBackground) p.present[v - 1] = true;
    }
    return p;
}

namespace {

// Largest-remainder apportionment of n items over the given ratios. Ties go to the
// earlier portion.
std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratios) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = n * ratios[i];
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rem[i] = exact - counts[i];
        assigned += counts[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
    for (int k = 0; assigned < n; k = (k + 1) % 3) {
        if (ratios[order[k]] <= 0) continue;
        ++counts[order[k]];
        ++assigned;
    }
    return counts;
}

}  // namespace

DatasetSplit split_patients(std::span<const CaseInfo> cases, const SplitRatios& ratios, std::uint64_t seed) {
    const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
    for (double v : r)
        if (!(v >= 0.0)) throw ValidationError("split ratios must be non-negative");
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
    const auto portions = static_cast<std::size_t>(std::count_if(r.begin(), r.end(), [](double v) { return v > 0; }));
    if (cases.size() < portions)
        throw ValidationError("split_patients: " + std::to_string(cases.size()) + " cases for " +
                              std::to_string(portions) + " portions");

    std::unordered_set<std::string> ids;
    std::array<std::vector<std::string>, 2> strata;
    for (const auto& c : cases) {
        if (!ids.insert(c.case_id).second) throw ValidationError("split_patients: duplicate case '" + c.case_id + "'");
        strata[c.normality == Normality::normal ? 0 : 1].push_back(c.case_id);
    }

    DatasetSplit split;
    std::array<std::vector<std::string>*, 3> out{&split.train, &split.val, &split.test};
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto& group = strata[s];
        std::sort(group.begin(), group.end());
        std::mt19937_64 rng(seed * 2 + s);
        std::shuffle(group.begin(), group.end(), rng);
        const auto counts = apportion(group.size(), r);
        std::size_t pos = 0;
        for (int p = 0; p < 3; ++p)
            for (std::size_t k = 0; k < counts[p]; ++k) out[p]->push_back(group[pos++]);
    }
    for (auto* portion : out) std::sort(portion->begin(), portion->end());
    return split;
}

std::vector<CaseInfo> cases_of(std::span<const SampleDescriptor> records) {
    std::vector<CaseInfo> cases;
    std::map<std::string, Normality> seen;
    for (const auto& r : records) {
        auto [it, inserted] = seen.emplace(r.case_id, r.normality);
        if (inserted)
            cases.push_back({r.case_id, r.normality});
        else if (it->second != r.normality)
            throw ValidationError("case '" + r.case_id + "' has inconsistent normality across views");
    }
    return cases;
}

std::vector<SampleDescriptor> select_records(std::span<const SampleDescriptor> records,
                                             std::span<const std::string> case_ids, ViewFilter filter) {
    const std::unordered_set<std::string> wanted(case_ids.begin(), case_ids.end());
    std::vector<SampleDescriptor> out;
    for (const auto& r : records)
        if (wanted.count(r.case_id) && view_allowed(filter, r.view)) out.push_back(r);
    return out;
}

}  // namespace echoseg
