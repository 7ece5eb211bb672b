#include "echoseg/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"

#include "echoseg/checkpoint.h"
#include "echoseg/errors.h"
#include "echoseg/png_io.h"

namespace echoseg {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("train config: " + msg); };
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (epochs < 0) fail("epochs must be >= 0");
    if (!(momentum >= 0 && momentum < 1)) fail("momentum must be in [0, 1)");
    if (workers < 1) fail("workers must be >= 1");
    network.validate();
    network.validate_input(image_size, image_size);
    if (static_cast<int>(ds_weights.size()) != 1 + network.aux_outputs())
        fail(fmt::format("ds_weights needs {} entries (main + {} auxiliary outputs), got {}", 1 + network.aux_outputs(),
                         network.aux_outputs(), ds_weights.size()));
    for (double w : ds_weights)
        if (!(w >= 0) || !std::isfinite(w)) fail("ds_weights must be finite and >= 0");
    if (!(ds_weights[0] > 0)) fail("the main output weight ds_weights[0] must be > 0");
    if (network.n_classes != kNumClasses) fail(fmt::format("network.n_classes must be {}", kNumClasses));
    effective_loss().validate(network.n_classes);
    schedule.validate();
    if (schedule.total_epochs < epochs) fail("schedule.total_epochs is shorter than epochs");
    augment.validate();
}

LossConfig TrainConfig::effective_loss() const {
    LossConfig l = loss;
    if (l.active_labels.empty()) l.active_labels = LabelTaxonomy::standard().active_labels(view_filter);
    return l;
}

Tensor make_batch(std::span<const Sample* const> samples) {
    if (samples.empty()) throw ValidationError("make_batch: no samples");
    const int h = samples[0]->image.height, w = samples[0]->image.width;
    Tensor x(static_cast<int>(samples.size()), 1, h, w);
    for (std::size_t b = 0; b < samples.size(); ++b) {
        if (samples[b]->image.height != h || samples[b]->image.width != w)
            throw ValidationError("make_batch: samples differ in size");
        const FloatImage c = center_intensity(samples[b]->image);
        std::copy(c.pixels.begin(), c.pixels.end(), x.sample(static_cast<int>(b)).begin());
    }
    return x;
}

std::vector<LabelImage> predict_labels(VNet& model, std::span<const Sample> samples, int batch_size) {
    std::vector<LabelImage> out;
    out.reserve(samples.size());
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t end = std::min(samples.size(), start + batch_size);
        std::vector<const Sample*> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(&samples[i]);
        const NetworkOutput y = model.forward(make_batch(batch), Mode::eval);
        const int C = y.main.c();
        const std::size_t plane = y.main.shape().plane();
        for (int b = 0; b < y.main.n(); ++b) {
            LabelImage m(y.main.h(), y.main.w());
            auto s = y.main.sample(b);
            for (std::size_t i = 0; i < plane; ++i) {
                int best = 0;
                for (int c = 1; c < C; ++c)
                    if (s[c * plane + i] > s[best * plane + i]) best = c;
                m.pixels[i] = static_cast<std::uint8_t>(best);
            }
            out.push_back(std::move(m));
        }
    }
    return out;
}

std::string format_curves_csv(std::span<const EpochRecord> records) {
    std::string s = "epoch,lr,train_loss,val_mean_dice";
    for (int l = 1; l <= kNumForegroundLabels; ++l) s += fmt::format(",val_dice_label_{}", l);
    s += "\n";
    for (const EpochRecord& r : records) {
        s += fmt::format("{},{},{},{}", r.epoch, r.lr, r.train_loss, r.val_mean_dice);
        for (const auto& d : r.val_dice) s += d ? fmt::format(",{}", *d) : std::string(",");
        s += "\n";
    }
    return s;
}

std::vector<EpochRecord> read_curves_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read curves file " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("epoch,lr,train_loss,val_mean_dice", 0) != 0)
        throw ValidationError(path.string() + " is not a curves CSV");
    std::vector<EpochRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (cells.size() != 4 + kNumForegroundLabels) throw ValidationError("malformed row in " + path.string());
        try {
            EpochRecord r;
            r.epoch = std::stoi(cells[0]);
            r.lr = std::stod(cells[1]);
            r.train_loss = std::stod(cells[2]);
            r.val_mean_dice = std::stod(cells[3]);
            for (int l = 0; l < kNumForegroundLabels; ++l)
                if (!cells[4 + l].empty()) r.val_dice[l] = std::stod(cells[4 + l]);
            out.push_back(r);
        } catch (const std::logic_error&) {
            throw ValidationError("malformed number in " + path.string());
        }
    }
    return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<const Sample*> filter_view(std::span<const Sample> samples, ViewFilter filter, int size,
                                       const char* what) {
    std::vector<const Sample*> out;
    for (const Sample& s : samples) {
        if (!view_allowed(filter, s.view)) continue;
        if (s.image.height != size || s.image.width != size)
            throw ValidationError(fmt::format("{} sample '{}' is {}x{}, expected {}x{}", what, s.case_id,
                                              s.image.height, s.image.width, size, size));
        out.push_back(&s);
    }
    if (out.empty())
        throw ValidationError(fmt::format("{} set has no samples for view filter '{}'", what, to_string(filter)));
    return out;
}

ImagePair augmented(const Sample& s, const TrainConfig& cfg, std::size_t index, int epoch) {
    std::mt19937_64 rng = sample_stream(cfg.seed ^ (cfg.augment.seed << 17), index, static_cast<std::uint64_t>(epoch));
    ImagePair p = augment_pair(s.image, s.labels, cfg.augment, rng);
    p.image = center_intensity(p.image);
    return p;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const fs::path& out_dir, const EpochCallback& on_epoch) {
    cfg.validate();
    if (cfg.epochs == 0) throw ValidationError("nothing trained: epochs is 0");
    const auto tr = filter_view(train_set, cfg.view_filter, cfg.image_size, "training");
    const auto va = filter_view(val_set, cfg.view_filter, cfg.image_size, "validation");
    std::vector<Sample> val_samples;
    for (const Sample* s : va) val_samples.push_back(*s);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    VNet model(cfg.network);
    SgdMomentum opt(model.parameters(), cfg.momentum);
    const LossConfig loss = cfg.effective_loss();
    const int size = cfg.image_size;
    const int n = static_cast<int>(tr.size());
    const int batches = (n + cfg.batch_size - 1) / cfg.batch_size;

    TrainResult result;
    result.best_checkpoint = out_dir / "best.ckpt";
    result.last_checkpoint = out_dir / "last.ckpt";
    result.curves_csv = out_dir / "curves.csv";
    double best = -1;

    for (int e = 0; e < cfg.epochs; ++e) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::seed_seq shuffle_seq{cfg.seed & 0xffffffffu, cfg.seed >> 32, static_cast<std::uint64_t>(e),
                                  std::uint64_t{0x5bu}};
        std::mt19937_64 shuffle_rng(shuffle_seq);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0;
        int steps = 0;
        for (int bi = 0; bi < batches; ++bi) {
            const int start = bi * cfg.batch_size;
            const int bs = std::min(cfg.batch_size, n - start);
            std::vector<ImagePair> pairs(bs);
            if (cfg.workers > 1 && bs > 1) {
                std::vector<std::future<ImagePair>> jobs;
                for (int k = 0; k < bs; ++k) {
                    const int idx = order[start + k];
                    jobs.push_back(std::async(std::launch::async, augmented, std::cref(*tr[idx]), std::cref(cfg),
                                              static_cast<std::size_t>(idx), e));
                }
                for (int k = 0; k < bs; ++k) pairs[k] = jobs[k].get();
            } else {
                for (int k = 0; k < bs; ++k) {
                    const int idx = order[start + k];
                    pairs[k] = augmented(*tr[idx], cfg, static_cast<std::size_t>(idx), e);
                }
            }

            Tensor x(bs, 1, size, size);
            std::vector<std::uint8_t> labels;
            labels.reserve(static_cast<std::size_t>(bs) * size * size);
            for (int k = 0; k < bs; ++k) {
                std::copy(pairs[k].image.pixels.begin(), pairs[k].image.pixels.end(), x.sample(k).begin());
                labels.insert(labels.end(), pairs[k].labels.pixels.begin(), pairs[k].labels.pixels.end());
            }
            const Tensor target = one_hot<float>(labels, Shape4{bs, kNumClasses, size, size});

            std::seed_seq drop_seq{cfg.seed & 0xffffffffu, cfg.seed >> 32, static_cast<std::uint64_t>(e),
                                   static_cast<std::uint64_t>(bi), std::uint64_t{0xd7u}};
            std::mt19937_64 drop_rng(drop_seq);
            const double lr = lr_at(e + static_cast<double>(bi) / batches, cfg.schedule);
            try {
                const NetworkOutput y = model.forward(x, Mode::train, &drop_rng);
                NetworkOutput grad;
                const LossBreakdown bd = total_loss<float>(y, target, loss, cfg.ds_weights, &grad);
                model.zero_grad();
                model.backward(grad);
                opt.step(lr);
                ++steps;
                loss_sum += bd.total * bs;
            } catch (const NumericError& err) {
                throw NumericError(fmt::format("training aborted at epoch {} batch {}: {}", e + 1, bi + 1, err.what()));
            }
        }

        EpochRecord rec;
        rec.epoch = e + 1;
        rec.lr = lr_at(e, cfg.schedule);
        rec.train_loss = loss_sum / n;
        rec.steps = steps;
        const std::vector<LabelImage> preds = predict_labels(model, val_samples, cfg.batch_size);
        const MetricsReport rep = evaluate(preds, val_samples);
        rec.val_mean_dice = rep.overall_mean / 100.0;
        for (const LabelMetrics& m : rep.per_label)
            if (m.present()) rec.val_dice[m.label - 1] = m.mean / 100.0;
        result.records.push_back(rec);

        nlohmann::json meta = {{"image_size", size},
                               {"view", std::string(to_string(cfg.view_filter))},
                               {"epoch", rec.epoch},
                               {"val_mean_dice", rec.val_mean_dice}};
        const Checkpoint ckpt = capture(model, meta.dump());
        save_checkpoint(result.last_checkpoint, ckpt);
        if (rec.val_mean_dice > best) {
            best = rec.val_mean_dice;
            save_checkpoint(result.best_checkpoint, ckpt);
        }
        write_text(result.curves_csv, format_curves_csv(result.records));
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

const std::array<std::array<std::uint8_t, 3>, kNumClasses>& overlay_palette() {
    static const std::array<std::array<std::uint8_t, 3>, kNumClasses> palette = {{
        {0, 0, 0},
        {230, 25, 75},
        {60, 180, 75},
        {255, 225, 25},
        {0, 130, 200},
        {245, 130, 48},
        {145, 30, 180},
        {70, 240, 240},
        {240, 50, 230},
        {210, 245, 60},
        {250, 190, 212},
        {0, 128, 128},
        {220, 190, 255},
        {170, 110, 40},
        {128, 0, 0},
    }};
    return palette;
}

std::vector<std::uint8_t> render_overlay(const FloatImage& image, const LabelImage& labels) {
    if (image.height != labels.height || image.width != labels.width)
        throw ValidationError("render_overlay: image and label map shapes differ");
    const auto& pal = overlay_palette();
    std::vector<std::uint8_t> rgb(image.pixels.size() * 3);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const std::uint8_t g = intensity_to_u8(image.pixels[i]);
        const int l = labels.pixels[i];
        if (l >= kNumClasses) throw ValidationError("render_overlay: label out of range");
        for (int k = 0; k < 3; ++k)
            rgb[3 * i + k] = l == 0 ? g : static_cast<std::uint8_t>((g + pal[l][k] + 1) / 2);
    }
    return rgb;
}

std::vector<PredictOutput> predict(VNet& model, int image_size, std::span<const Sample> samples,
                                   const fs::path& out_dir) {
    for (const Sample& s : samples)
        if (s.image.height != image_size || s.image.width != image_size)
            throw ValidationError(fmt::format("sample '{}' is {}x{} but the checkpoint expects {}x{}", s.case_id,
                                              s.image.height, s.image.width, image_size, image_size));
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    const std::vector<LabelImage> maps = predict_labels(model, samples);
    std::vector<PredictOutput> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        const std::string stem = s.case_id + "_" + std::string(to_string(s.view));
        PredictOutput p{out_dir / (stem + "_overlay.png"), out_dir / (stem + "_labels.png")};
        write_png_rgb8(p.overlay, image_size, image_size, render_overlay(s.image, maps[i]));
        write_png_gray8(p.label_map, maps[i]);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace echoseg
