#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echoseg/augment.h"
#include "echoseg/dataset.h"
#include "echoseg/losses.h"
#include "echoseg/metrics.h"
#include "echoseg/network.h"
#include "echoseg/optimsched.h"
#include "echoseg/taxonomy.h"

namespace echoseg {

struct TrainConfig {
    int batch_size = 8;
    int epochs = 200;
    std::uint64_t seed = 0;
    double momentum = 0.9;
    int image_size = 128;  // network input side; samples must already have this size
    std::vector<double> ds_weights{1.0, 0.5, 0.25};  // main output first
    ViewFilter view_filter = ViewFilter::combined;
    int workers = 1;  // augmentation threads; results do not depend on it
    LossConfig loss;
    ScheduleConfig schedule;
    NetworkConfig network;
    AugmentConfig augment;

    void validate() const;  // throws ValidationError
    // Loss settings with the active labels filled in from the view filter.
    LossConfig effective_loss() const;
};

struct EpochRecord {
    int epoch = 0;  // 1-based count of completed epochs
    double lr = 0;  // learning rate at the start of the epoch
    double train_loss = 0;
    int steps = 0;  // optimizer steps taken this epoch (not written to the CSV)
    double val_mean_dice = 0;  // fraction in [0, 1]
    std::array<std::optional<double>, kNumForegroundLabels> val_dice{};  // empty when absent from val set
};

struct TrainResult {
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
    std::filesystem::path curves_csv;
    std::vector<EpochRecord> records;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains from scratch. Writes best.ckpt, last.ckpt and curves.csv into out_dir after
// every epoch. A non-finite loss or gradient raises NumericError and leaves the files
// of the last completed epoch in place.
TrainResult train(const TrainConfig& cfg, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {});

// Network input for a set of samples: intensity-centred images, B x 1 x H x W.
Tensor make_batch(std::span<const Sample* const> samples);

// Per-pixel argmax of the main output, one label map per sample.
std::vector<LabelImage> predict_labels(VNet& model, std::span<const Sample> samples, int batch_size = 4);

// Curves CSV text for a list of records (byte-stable formatting).
std::string format_curves_csv(std::span<const EpochRecord> records);
std::vector<EpochRecord> read_curves_csv(const std::filesystem::path& path);

// Fixed overlay colours, index = label id (0 unused).
const std::array<std::array<std::uint8_t, 3>, kNumClasses>& overlay_palette();
// 50% blend of the palette colour over the grayscale image; background pixels keep the image.
std::vector<std::uint8_t> render_overlay(const FloatImage& image, const LabelImage& labels);

struct PredictOutput {
    std::filesystem::path overlay;
    std::filesystem::path label_map;
};

// Writes <case>_<view>_overlay.png and <case>_<view>_labels.png per sample.
std::vector<PredictOutput> predict(VNet& model, int image_size, std::span<const Sample> samples,
                                   const std::filesystem::path& out_dir);

}  // namespace echoseg
