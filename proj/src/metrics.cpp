#include "echoseg/metrics.h"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "echoseg/errors.h"

namespace echoseg {

double hard_dice(const LabelImage& pred, const LabelImage& gt, int label) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw ValidationError(fmt::format("hard_dice: shape mismatch {}x{} vs {}x{}", pred.height, pred.width,
                                          gt.height, gt.width));
    if (label < 1 || label > kNumForegroundLabels) throw ValidationError(fmt::format("hard_dice: bad label {}", label));
    long long p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
        const bool a = pred.pixels[i] == label;
        const bool b = gt.pixels[i] == label;
        p += a;
        g += b;
        both += a && b;
    }
    if (p == 0) return 0.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

MetricsReport evaluate(std::span<const LabelImage> predictions, std::span<const LabelImage> ground_truths,
                       StdKind std_kind) {
    if (predictions.size() != ground_truths.size())
        throw ValidationError(fmt::format("evaluate: {} predictions for {} ground truths", predictions.size(),
                                          ground_truths.size()));
    MetricsReport report;
    report.n_images = static_cast<int>(predictions.size());
    std::array<std::vector<double>, kNumForegroundLabels> scores;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const PresenceVector pv = presence(ground_truths[i]);
        for (int l = 1; l <= kNumForegroundLabels; ++l) {
            if (pv.has(l)) {
                scores[l - 1].push_back(hard_dice(predictions[i], ground_truths[i], l));
                continue;
            }
            long long fp = 0;
            for (std::uint8_t v : predictions[i].pixels) fp += v == l;
            if (predictions[i].pixels.size() != ground_truths[i].pixels.size())
                throw ValidationError("evaluate: prediction and ground truth sizes differ");
            LabelMetrics& m = report.per_label[l - 1];
            m.false_positive_pixels += fp;
            m.false_positive_images += fp > 0;
        }
    }
    double sum_means = 0;
    int counted = 0;
    for (int l = 1; l <= kNumForegroundLabels; ++l) {
        LabelMetrics& m = report.per_label[l - 1];
        m.label = l;
        const auto& s = scores[l - 1];
        m.n_images = static_cast<int>(s.size());
        if (s.empty()) continue;
        double mean = 0;
        for (double v : s) mean += v;
        mean /= s.size();
        double var = 0;
        for (double v : s) var += (v - mean) * (v - mean);
        const std::size_t dof = std_kind == StdKind::population ? s.size() : s.size() - 1;
        var = dof > 0 ? var / dof : 0.0;
        m.mean = 100.0 * mean;
        m.std = 100.0 * std::sqrt(var);
        sum_means += m.mean;
        ++counted;
    }
    report.overall_mean = counted ? sum_means / counted : 0.0;
    return report;
}

MetricsReport evaluate(std::span<const LabelImage> predictions, std::span<const Sample> ground_truths,
                       StdKind std_kind) {
    std::vector<LabelImage> gt;
    gt.reserve(ground_truths.size());
    for (const Sample& s : ground_truths) gt.push_back(s.labels);
    return evaluate(predictions, gt, std_kind);
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "label,name,mean,std,n,false_positive_pixels\n";
    const auto& tax = LabelTaxonomy::standard();
    for (const LabelMetrics& m : report.per_label) {
        if (!m.present()) continue;
        out << fmt::format("{},{},{:.4f},{:.4f},{},{}\n", m.label, tax.label(m.label).name, m.mean, m.std, m.n_images,
                           m.false_positive_pixels);
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::string format_report_table(const MetricsReport& report) {
    const auto& tax = LabelTaxonomy::standard();
    std::string s = fmt::format("{:>3}  {:<24} {:>16} {:>5} {:>10}\n", "id", "label", "Dice (%)", "n", "FP pixels");
    for (const LabelMetrics& m : report.per_label) {
        const std::string cell = m.present() ? fmt::format("{:.2f}±{:.2f}", m.mean, m.std) : "---";
        s += fmt::format("{:>3}  {:<24} {:>16} {:>5} {:>10}\n", m.label, tax.label(m.label).name, cell, m.n_images,
                         m.false_positive_pixels);
    }
    s += fmt::format("mean Dice over present labels: {:.2f}% ({} images)\n", report.overall_mean, report.n_images);
    return s;
}

}  // namespace echoseg
