#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "echoseg/dataset.h"
#include "echoseg/image.h"
#include "echoseg/taxonomy.h"

namespace echoseg {

// 2|P and G| / (|P| + |G|) for one label; 0 when the label is never predicted.
double hard_dice(const LabelImage& pred, const LabelImage& gt, int label);

enum class StdKind { population, sample };

struct LabelMetrics {
    int label = 0;
    double mean = 0;  // percent
    double std = 0;   // percent
    int n_images = 0;  // images whose ground truth contains the label
    // Pixels predicted as the label in images whose ground truth lacks it.
    long long false_positive_pixels = 0;
    int false_positive_images = 0;

    bool present() const { return n_images > 0; }
};

struct MetricsReport {
    std::array<LabelMetrics, kNumForegroundLabels> per_label{};
    double overall_mean = 0;  // percent, unweighted over labels with n_images >= 1
    int n_images = 0;

    const LabelMetrics& at(int label) const { return per_label[label - 1]; }
};

MetricsReport evaluate(std::span<const LabelImage> predictions, std::span<const LabelImage> ground_truths,
                       StdKind std_kind = StdKind::population);
MetricsReport evaluate(std::span<const LabelImage> predictions, std::span<const Sample> ground_truths,
                       StdKind std_kind = StdKind::population);

// label,name,mean,std,n,false_positive_pixels; one row per label with n >= 1.
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);
// Plain-text table in "mean±std%" form, "---" for absent labels.
std::string format_report_table(const MetricsReport& report);

}  // namespace echoseg
