#include "echoseg/cli.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "echoseg/checkpoint.h"
#include "echoseg/config.h"
#include "echoseg/errors.h"
#include "echoseg/plot.h"
#include "echoseg/png_io.h"
#include "echoseg/synthgen.h"
#include "echoseg/trainer.h"

namespace echoseg {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

ExperimentConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = path.empty() ? parse_config("{}") : load_config(path);
    for (const auto& o : overrides) apply_override(cfg, o);
    return cfg;
}

int worker_count() {
    const char* env = std::getenv("ECHOSEG_WORKERS");
    if (!env || !*env) return 1;
    try {
        const int n = std::stoi(env);
        if (n >= 1) return n;
    } catch (const std::logic_error&) {
    }
    throw ValidationError(fmt::format("ECHOSEG_WORKERS must be a positive integer (got '{}')", env));
}

struct LoadedModel {
    Checkpoint ckpt;
    int image_size = 0;
};

LoadedModel load_model(const fs::path& path) {
    LoadedModel m;
    m.ckpt = load_checkpoint(path);
    const auto meta = nlohmann::json::parse(m.ckpt.metadata_json);
    if (!meta.contains("image_size")) throw ValidationError("checkpoint " + path.string() + " lacks image_size");
    m.image_size = meta.at("image_size").get<int>();
    return m;
}

void cmd_synth(const std::string& config, const std::vector<std::string>& overrides, const fs::path& out_dir,
               std::ostream& out) {
    const ExperimentConfig cfg = build_config(config, overrides);
    const fs::path manifest = generate(cfg.phantom, out_dir);
    write_text(out_dir / "resolved_config.json", resolved_config(cfg));
    out << "wrote " << manifest.string() << "\n";
}

void cmd_train(const std::string& config, std::vector<std::string> overrides, const std::string& view,
               const std::string& loss_mode, const std::string& manifest_flag, const fs::path& out_dir,
               std::ostream& out) {
    if (!view.empty()) overrides.push_back("train.view=" + view);
    if (!loss_mode.empty()) overrides.push_back("loss.mode=" + loss_mode);
    if (!manifest_flag.empty()) overrides.push_back("data.manifest=" + nlohmann::json(manifest_flag).dump());
    ExperimentConfig cfg = build_config(config, overrides);
    cfg.train.workers = worker_count();
    make_dir(out_dir);
    write_text(out_dir / "resolved_config.json", resolved_config(cfg));

    fs::path manifest = cfg.data.manifest;
    if (manifest.empty()) {
        out << "generating phantom dataset in " << (out_dir / "data").string() << "\n";
        manifest = generate(cfg.phantom, out_dir / "data");
    }
    const auto records = load_manifest(manifest);
    const DatasetSplit split = split_patients(cases_of(records), cfg.data.split, cfg.data.split_seed);
    const ViewFilter vf = cfg.train.view_filter;
    const auto tr = select_records(records, split.train, vf);
    const auto va = select_records(records, split.val, vf);
    const auto te = select_records(records, split.test, vf);
    make_dir(out_dir / "split");
    write_manifest(out_dir / "split" / "train.jsonl", tr);
    write_manifest(out_dir / "split" / "val.jsonl", va);
    write_manifest(out_dir / "split" / "test.jsonl", te);
    out << fmt::format("view {}: {} train / {} val / {} test images\n", to_string(vf), tr.size(), va.size(),
                       te.size());

    const auto train_set = load_samples(tr, cfg.data.image_size);
    const auto val_set = load_samples(va, cfg.data.image_size);
    const TrainResult r = train(cfg.train, train_set, val_set, out_dir, [&](const EpochRecord& rec) {
        out << fmt::format("epoch {:4d}  lr {:.6f}  loss {:.5f}  val Dice {:.4f}\n", rec.epoch, rec.lr,
                           rec.train_loss, rec.val_mean_dice);
        out.flush();
    });
    out << "best checkpoint: " << r.best_checkpoint.string() << "\ncurves: " << r.curves_csv.string() << "\n";
}

std::vector<Sample> samples_for(const fs::path& manifest, int image_size) {
    return load_samples(load_manifest(manifest), image_size);
}

void cmd_eval(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_dir, bool gt_as_prediction,
              bool sample_std, std::ostream& out) {
    const LoadedModel m = load_model(checkpoint);
    const auto samples = samples_for(manifest, m.image_size);
    std::vector<LabelImage> preds;
    if (gt_as_prediction) {
        for (const Sample& s : samples) preds.push_back(s.labels);
    } else {
        VNet model(m.ckpt.network);
        restore(model, m.ckpt);
        preds = predict_labels(model, samples);
    }
    const MetricsReport rep = evaluate(preds, samples, sample_std ? StdKind::sample : StdKind::population);
    make_dir(out_dir);
    write_report_csv(out_dir / "report.csv", rep);
    const std::string table = format_report_table(rep);
    write_text(out_dir / "report.txt", table);
    out << table;
}

void cmd_predict(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_dir, std::ostream& out) {
    const LoadedModel m = load_model(checkpoint);
    const auto samples = samples_for(manifest, m.image_size);
    VNet model(m.ckpt.network);
    restore(model, m.ckpt);
    const auto written = predict(model, m.image_size, samples, out_dir);
    out << fmt::format("wrote {} overlays and {} label maps to {}\n", written.size(), written.size(),
                       out_dir.string());
}

void cmd_curves(const fs::path& run_dir, const fs::path& out_dir, std::ostream& out) {
    const fs::path csv = run_dir / "curves.csv";
    if (!fs::exists(csv)) throw ValidationError("no curves.csv in run directory " + run_dir.string());
    const auto records = read_curves_csv(csv);
    if (records.empty()) throw ValidationError(csv.string() + " has no epochs");

    ScheduleConfig sched;
    const fs::path resolved = run_dir / "resolved_config.json";
    if (fs::exists(resolved)) sched = load_config(resolved).train.schedule;
    sched.total_epochs = std::max(sched.total_epochs, records.back().epoch);

    make_dir(out_dir);
    write_text(out_dir / "curves.svg", render_curves_svg(records));
    std::string s = "epoch,lr\n";
    const int steps = 10 * sched.total_epochs;
    for (int i = 0; i < steps; ++i) {
        const double e = i / 10.0;
        s += fmt::format("{},{}\n", e, lr_at(e, sched));
    }
    write_text(out_dir / "schedule.csv", s);
    out << "wrote " << (out_dir / "curves.svg").string() << " and " << (out_dir / "schedule.csv").string() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multiview segmentation with a missing-label-robust exp-log Dice loss"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config, view, loss_mode, manifest, checkpoint, out_dir, run_dir;
    std::vector<std::string> overrides;
    bool gt_pred = false, sample_std = false;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic phantom dataset");
    synth->add_option("--config", config, "JSON config file");
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--set", overrides, "Override section.key=value");

    auto* trn = app.add_subcommand("train", "Train a model");
    trn->add_option("--config", config, "JSON config file");
    trn->add_option("--view", view, "3vtv, 4chv or combined");
    trn->add_option("--loss-mode", loss_mode, "epsilon_dice or robust_dice");
    trn->add_option("--manifest", manifest, "Dataset manifest (default: generate phantoms)");
    trn->add_option("--out", out_dir, "Run directory")->required();
    trn->add_option("--set", overrides, "Override section.key=value");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--checkpoint", checkpoint)->required();
    ev->add_option("--manifest", manifest)->required();
    ev->add_option("--out", out_dir)->required();
    ev->add_flag("--debug-gt-as-prediction", gt_pred, "Score the ground truth against itself");
    ev->add_flag("--sample-std", sample_std, "Report sample instead of population std");

    auto* pr = app.add_subcommand("predict", "Write overlays and label maps");
    pr->add_option("--checkpoint", checkpoint)->required();
    pr->add_option("--manifest", manifest)->required();
    pr->add_option("--out", out_dir)->required();

    auto* cv = app.add_subcommand("curves", "Plot training curves and the learning-rate schedule");
    cv->add_option("--run-dir", run_dir)->required();
    cv->add_option("--out", out_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) cmd_synth(config, overrides, out_dir, out);
        if (*trn) cmd_train(config, overrides, view, loss_mode, manifest, out_dir, out);
        if (*ev) cmd_eval(checkpoint, manifest, out_dir, gt_pred, sample_std, out);
        if (*pr) cmd_predict(checkpoint, manifest, out_dir, out);
        if (*cv) cmd_curves(run_dir, out_dir, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace echoseg
