// End-to-end acceptance checks. `acceptance N` runs criterion N and prints one
// "criterion N: PASS|FAIL ..." line; `acceptance` alone runs the quick ones.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "support.h"

#include "echoseg/augment.h"
#include "echoseg/checkpoint.h"
#include "echoseg/config.h"
#include "echoseg/errors.h"
#include "echoseg/losses.h"
#include "echoseg/metrics.h"
#include "echoseg/network.h"
#include "echoseg/optimsched.h"
#include "echoseg/synthgen.h"
#include "echoseg/trainer.h"

using namespace echoseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += (ok ? "" : "NOT ") + what;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path config_path(const std::string& name) { return fs::path(ECHOSEG_CONFIG_DIR) / name; }

std::vector<std::uint8_t> random_labels(std::size_t n, int classes, std::uint64_t seed, int skip) {
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> out(n);
    for (auto& v : out) {
        int c;
        do c = static_cast<int>(rng() % classes);
        while (c == skip);
        v = static_cast<std::uint8_t>(c);
    }
    return out;
}

// Phantoms generated from the config, split by patient.
struct Prepared {
    std::vector<SampleDescriptor> records;
    DatasetSplit split;
    int image_size = 0;

    std::vector<Sample> load(const std::vector<std::string>& ids, ViewFilter f) const {
        return load_samples(select_records(records, ids, f), image_size);
    }
};

Prepared prepare(const ExperimentConfig& cfg, const fs::path& dir) {
    Prepared p;
    p.records = load_manifest(generate(cfg.phantom, dir));
    p.split = split_patients(cases_of(p.records), cfg.data.split, cfg.data.split_seed);
    p.image_size = cfg.data.image_size;
    return p;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    Outcome o;
    const ExperimentConfig cfg = load_config(config_path("desk_pathology.json"));
    testing::TempDir dir("acc1");
    const Prepared data = prepare(cfg, dir.path() / "data");
    const auto tr = data.load(data.split.train, ViewFilter::combined);
    const auto va = data.load(data.split.val, ViewFilter::combined);
    o.require(cfg.phantom.n_cases >= 40 && cfg.data.image_size == 128 && cfg.train.epochs >= 30,
              fmt::format("{} cases at {} px, {} epochs", cfg.phantom.n_cases, cfg.data.image_size, cfg.train.epochs));
    const auto taxonomy = LabelTaxonomy::standard();
    auto exclusive = [&](int l) {
        return taxonomy.belongs(l, View::three_vessel_trachea) != taxonomy.belongs(l, View::four_chamber);
    };

    for (DiceMode mode : {DiceMode::epsilon_dice, DiceMode::robust_dice}) {
        TrainConfig t = cfg.train;
        t.view_filter = ViewFilter::combined;
        t.loss.mode = mode;
        const auto t0 = std::chrono::steady_clock::now();
        const TrainResult r = train(t, tr, va, dir.path() / to_string(mode), [&](const EpochRecord& e) {
            std::printf("  [%s] epoch %d loss %.5f val %.4f\n", to_string(mode).c_str(), e.epoch, e.train_loss,
                        e.val_mean_dice);
            std::fflush(stdout);
        });
        const double secs = seconds_since(t0);
        const EpochRecord& at30 = r.records.at(29);
        std::string dice;
        double lowest = 1, worst_kept = 1;
        int lowest_label = 0;
        for (int l = 1; l <= kNumForegroundLabels; ++l) {
            if (!exclusive(l) || !at30.val_dice[l - 1]) continue;
            const double d = *at30.val_dice[l - 1];
            dice += fmt::format(" {}:{:.1f}", l, 100 * d);
            if (d < lowest) {
                lowest = d;
                lowest_label = l;
            }
            worst_kept = std::min(worst_kept, d);
        }
        std::printf("  %s epoch-30 view-exclusive val Dice %%:%s\n", to_string(mode).c_str(), dice.c_str());
        if (mode == DiceMode::epsilon_dice) {
            o.require(lowest < 0.05, fmt::format("epsilon: label {} at {:.2f}% < 5% at epoch 30", lowest_label,
                                                 100 * lowest));
            bool monotone = true;
            for (int e = 21; e < 30; ++e) monotone = monotone && r.records[e].train_loss < r.records[e - 1].train_loss;
            o.require(monotone, fmt::format("epsilon: training loss strictly decreasing over epochs 21-30 ({:.4f} -> {:.4f})",
                                            r.records[20].train_loss, r.records[29].train_loss));
        } else {
            o.require(worst_kept > 0.60, fmt::format("robust: every view-exclusive label > 60% at epoch 30 (min {:.1f}%)",
                                                     100 * worst_kept));
        }
        o.require(secs < 20 * 60, fmt::format("{} run {:.0f} s < 1200 s", to_string(mode), secs));
    }
    return o;
}

Outcome criterion2() {
    Outcome o;
    double worst_robust = 0, weakest_eps = INFINITY;
    for (int inst = 0; inst < 10; ++inst) {
        const int absent = 1 + inst % 14;
        const Shape4 s{2, kNumClasses, 16, 16};
        BasicNetworkOutput<double> out{testing::random_tensor<double>(s, 1000 + inst, -4, 4), {}};
        const TensorD t = one_hot<double>(random_labels(2 * 256, kNumClasses, 2000 + inst, absent), s);
        LossConfig cfg;
        cfg.w_dice = 1;
        cfg.w_ce = 0;
        cfg.active_labels = {absent};  // the Dice term of the absent label alone
        const std::vector<double> ds{1.0};
        BasicNetworkOutput<double> g;
        total_loss<double>(out, t, cfg, ds, &g);
        for (int b = 0; b < 2; ++b)
            for (double v : g.main.plane(b, absent)) worst_robust = std::max(worst_robust, std::abs(v));
        cfg.mode = DiceMode::epsilon_dice;
        total_loss<double>(out, t, cfg, ds, &g);
        double largest = 0;
        for (int b = 0; b < 2; ++b)
            for (double v : g.main.plane(b, absent)) largest = std::max(largest, std::abs(v));
        weakest_eps = std::min(weakest_eps, largest);
    }
    o.require(worst_robust < 1e-12, fmt::format("robust max |grad| {:.3g} < 1e-12", worst_robust));
    o.require(weakest_eps > 0, fmt::format("epsilon max |grad| nonzero (smallest over instances {:.3g})", weakest_eps));
    return o;
}

Outcome criterion3() {
    Outcome o;
    double worst = 0;
    for (int inst = 0; inst < 5; ++inst) {
        const Shape4 s{2, 4, 8, 8};
        BasicNetworkOutput<double> out;
        out.main = testing::random_tensor<double>(s, 3000 + inst, -2, 2);
        out.aux = {testing::random_tensor<double>(s, 3100 + inst, -2, 2)};
        const TensorD t = one_hot<double>(random_labels(128, 4, 3200 + inst, inst % 2 ? 3 : -1), s);
        const LossConfig cfg;
        const std::vector<double> ds{1.0, 0.5};
        BasicNetworkOutput<double> g;
        total_loss<double>(out, t, cfg, ds, &g);
        for (int k = 0; k < 2; ++k) {
            TensorD& z = k == 0 ? out.main : out.aux[0];
            const TensorD& a = k == 0 ? g.main : g.aux[0];
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double saved = z.data()[i];
                z.data()[i] = saved + 1e-5;
                const double plus = total_loss<double>(out, t, cfg, ds).total;
                z.data()[i] = saved - 1e-5;
                const double minus = total_loss<double>(out, t, cfg, ds).total;
                z.data()[i] = saved;
                const double n = (plus - minus) / 2e-5;
                const double denom = std::max({std::abs(a.data()[i]), std::abs(n), 1e-6});
                worst = std::max(worst, std::abs(a.data()[i] - n) / denom);
            }
        }
    }
    o.require(worst < 1e-4, fmt::format("max relative error {:.3g} < 1e-4 over 5 instances", worst));
    return o;
}

Outcome criterion4() {
    Outcome o;
    const ScheduleConfig cfg;
    o.require(lr_at(0, cfg) == 5e-3, fmt::format("lr(0) = {}", lr_at(0, cfg)));
    o.require(lr_at(25, cfg) == 2.55e-3, fmt::format("lr(25) = {}", lr_at(25, cfg)));
    o.require(lr_at(50, cfg) == 5e-3, fmt::format("lr(50) = {}", lr_at(50, cfg)));
    const auto starts = cycle_starts(cfg);
    const ScheduleState last = schedule_state(199.0, cfg);
    const double end3 = last.cycle_start + last.cycle_length;
    o.require(starts.size() == 3, fmt::format("{} cycle starts before epoch 200", starts.size()));
    o.require(starts.size() == 3 && std::abs(starts[1] - 50) < 1e-9 && std::abs(starts[2] - 115.5) < 1e-9 &&
                  std::abs(end3 - 201.305) < 1e-9,
              fmt::format("boundaries {}, {}, {}", starts.size() > 1 ? starts[1] : -1, starts.size() > 2 ? starts[2] : -1,
                          end3));
    return o;
}

Outcome criterion5() {
    Outcome o;
    double worst = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        NetworkConfig n;
        n.init_seed = seed;
        VNet m(n);
        const Tensor x = testing::random_tensor<float>({4, 1, 64, 64}, 40 + seed);
        const NetworkOutput all = m.forward(x, Mode::eval);
        for (int b = 0; b < 4; ++b) {
            Tensor one(1, 1, 64, 64);
            std::copy(x.sample(b).begin(), x.sample(b).end(), one.data());
            const NetworkOutput single = m.forward(one, Mode::eval);
            auto cmp = [&](const Tensor& batch, const Tensor& solo) {
                const auto s = batch.sample(b);
                for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, double(std::abs(s[i] - solo.data()[i])));
            };
            cmp(all.main, single.main);
            for (std::size_t j = 0; j < all.aux.size(); ++j) cmp(all.aux[j], single.aux[j]);
        }
    }
    o.require(worst < 1e-5, fmt::format("max |batch - single| {:.3g} < 1e-5 over 3 initializations", worst));
    return o;
}

Outcome criterion6() {
    Outcome o;
    // Ground truth: a 10-pixel strip of label 2. Dice = 2h / (10 + h + e).
    auto make = [](int hit, int extra, bool has_label) {
        LabelImage gt(4, 10), pred(4, 10);
        for (int x = 0; x < 10; ++x) gt.at(0, x) = has_label ? 2 : 0;
        for (int x = 0; x < hit; ++x) pred.at(0, x) = 2;
        for (int x = 0; x < extra; ++x) pred.at(2, x) = 2;
        return std::pair{pred, gt};
    };
    const auto [p1, g1] = make(6, 4, true);   // 0.6
    const auto [p2, g2] = make(8, 2, true);   // 0.8
    const auto [p3, g3] = make(0, 7, false);  // label absent, predicted anyway
    const std::vector<LabelImage> preds{p1, p2, p3}, gts{g1, g2, g3};
    const MetricsReport r = evaluate(preds, gts);
    const LabelMetrics& m = r.at(2);
    o.require(m.mean == 70.0 && std::abs(m.std - 10.0) < 1e-12,
              fmt::format("label 2 = {}±{}% (expected 70±10)", m.mean, m.std));
    o.require(m.n_images == 2, fmt::format("{} qualifying images (absent-label image excluded)", m.n_images));
    o.require(m.false_positive_pixels == 7, fmt::format("{} false-positive pixels reported separately", m.false_positive_pixels));
    return o;
}

Outcome criterion7() {
    Outcome o;
    const ExperimentConfig cfg = load_config(config_path("desk_benchmark.json"));
    testing::TempDir dir("acc7");
    const Prepared data = prepare(cfg, dir.path() / "data");
    const auto t0 = std::chrono::steady_clock::now();

    std::map<ViewFilter, VNet> models;
    for (ViewFilter f : {ViewFilter::combined, ViewFilter::three_vessel_only, ViewFilter::four_chamber_only}) {
        TrainConfig t = cfg.train;
        t.view_filter = f;
        const auto tr = data.load(data.split.train, f);
        const auto va = data.load(data.split.val, f);
        const auto t1 = std::chrono::steady_clock::now();
        const TrainResult r = train(t, tr, va, dir.path() / std::string(to_string(f)), [&](const EpochRecord& e) {
            if (e.epoch % 10 == 0) {
                std::printf("  [%s] epoch %d loss %.5f val %.4f\n", std::string(to_string(f)).c_str(), e.epoch,
                            e.train_loss, e.val_mean_dice);
                std::fflush(stdout);
            }
        });
        std::printf("  [%s] trained in %.0f s\n", std::string(to_string(f)).c_str(), seconds_since(t1));
        VNet m(t.network);
        restore(m, load_checkpoint(r.best_checkpoint));
        models.emplace(f, std::move(m));
    }

    const auto test_all = data.load(data.split.test, ViewFilter::combined);
    const MetricsReport combined = evaluate(predict_labels(models.at(ViewFilter::combined), test_all), std::span<const Sample>(test_all));
    std::printf("  combined model on the test split:\n%s", format_report_table(combined).c_str());
    o.require(combined.overall_mean >= 85.0, fmt::format("combined test mean Dice {:.2f}% >= 85%", combined.overall_mean));

    double worst_gap = 0;
    std::string worst_where;
    for (ViewFilter f : {ViewFilter::three_vessel_only, ViewFilter::four_chamber_only}) {
        const auto test = data.load(data.split.test, f);
        const MetricsReport single = evaluate(predict_labels(models.at(f), test), std::span<const Sample>(test));
        const MetricsReport comb = evaluate(predict_labels(models.at(ViewFilter::combined), test), std::span<const Sample>(test));
        for (int l = 1; l <= kNumForegroundLabels; ++l) {
            if (!single.at(l).present()) continue;
            const double gap = std::abs(comb.at(l).mean - single.at(l).mean);
            std::printf("  %s label %2d: combined %6.2f%%  single-view %6.2f%%\n", std::string(to_string(f)).c_str(), l,
                        comb.at(l).mean, single.at(l).mean);
            if (gap > worst_gap) {
                worst_gap = gap;
                worst_where = fmt::format("{} label {}", to_string(f), l);
            }
        }
    }
    o.require(worst_gap <= 3.0, fmt::format("largest combined vs single-view gap {:.2f} pp ({}) <= 3 pp", worst_gap, worst_where));
    const double total = seconds_since(t0);
    o.require(total < 60 * 60, fmt::format("total {:.0f} s < 3600 s", total));
    return o;
}

Outcome criterion8() {
    Outcome o;
    PhantomSpec spec;
    spec.image_size = 64;
    spec.abnormal_fraction = 0;
    std::mt19937_64 rng(77);
    std::vector<std::uint8_t> labels;
    Tensor images(3, 1, 64, 64);
    for (int b = 0; b < 3; ++b) {
        const PhantomImage ph = render_phantom(View::three_vessel_trachea, random_pose(rng), {}, 64, 0.15, rng);
        labels.insert(labels.end(), ph.labels.pixels.begin(), ph.labels.pixels.end());
        const FloatImage c = center_intensity(ph.image);
        std::copy(c.pixels.begin(), c.pixels.end(), images.sample(b).begin());
    }
    NetworkConfig n;
    n.levels = 3;
    n.convs_per_level = {1, 1, 1};
    VNet m(n);
    BasicNetworkOutput<double> out{m.forward(images, Mode::eval).main.cast<double>(), {}};
    const TensorD t = one_hot<double>(labels, {3, kNumClasses, 64, 64});
    const std::vector<double> ds{1.0};
    LossConfig combined;
    combined.active_labels = LabelTaxonomy::standard().active_labels(ViewFilter::combined);
    LossConfig three = combined;
    three.active_labels = LabelTaxonomy::standard().active_labels(ViewFilter::three_vessel_only);
    const double d14 = total_loss<double>(out, t, combined, ds).dice_term;
    const double d5 = total_loss<double>(out, t, three, ds).dice_term;
    const double c = std::pow(-std::log(1e-7), 0.3);
    // Mean over 14 labels: (5 * d5 + 9 * c) / 14, hence the gap (9/14)(c - d5).
    const double expected = 9.0 / 14.0 * (c - d5);
    o.require(std::abs((d14 - d5) - expected) < 1e-6,
              fmt::format("gap {:.9f} vs (9/14)({:.4f} - {:.4f}) = {:.9f}", d14 - d5, c, d5, expected));
    o.require(std::abs(c - 2.30) < 0.005, fmt::format("absent-label term {:.4f} ~ 2.30", c));
    return o;
}

Outcome criterion9() {
    Outcome o;
    ExperimentConfig cfg = load_config(config_path("desk_pathology.json"));
    cfg.train.epochs = 2;
    testing::TempDir dir("acc9");
    const Prepared data = prepare(cfg, dir.path() / "data");
    const auto tr = data.load(data.split.train, ViewFilter::combined);
    const auto va = data.load(data.split.val, ViewFilter::combined);
    cfg.train.workers = 1;
    const TrainResult a = train(cfg.train, tr, va, dir.path() / "a");
    const TrainResult b = train(cfg.train, tr, va, dir.path() / "b");
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string ca = slurp(a.curves_csv), cb = slurp(b.curves_csv);
    o.require(!ca.empty() && ca == cb, fmt::format("curves CSVs byte-identical ({} bytes)", ca.size()));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, std::function<Outcome()>> criteria{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9},
    };
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
    if (which.empty()) which = {2, 3, 4, 5, 6, 8};
    bool all = true;
    for (int n : which) {
        const auto it = criteria.find(n);
        if (it == criteria.end()) {
            std::fprintf(stderr, "unknown criterion %d\n", n);
            return 2;
        }
        Outcome o;
        try {
            o = it->second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %d: %s (%s)\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
