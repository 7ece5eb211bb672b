#include "echoseg/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "echoseg/errors.h"

namespace echoseg {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& root, std::string name) : name_(std::move(name)) {
        if (name_.empty()) {
            obj_ = &root;
        } else if (root.contains(name_)) {
            obj_ = &root.at(name_);
        }
        if (obj_ && !obj_->is_object()) throw ValidationError("'" + name_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& dst) {
        known_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        try {
            dst = obj_->at(key).get<T>();
        } catch (const json::exception& e) {
            throw ValidationError(path(key) + ": " + e.what());
        }
    }

    template <typename T, typename Parse>
    void get_enum(const char* key, T& dst, Parse parse) {
        std::string s;
        known_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        get(key, s);
        try {
            dst = parse(s);
        } catch (const ValidationError& e) {
            throw ValidationError(path(key) + ": " + e.what());
        }
    }

    void ignore(const char* key) { known_.insert(key); }

    void finish() const {
        if (!obj_) return;
        for (const auto& [k, _] : obj_->items())
            if (!known_.count(k)) throw ValidationError("unknown config key '" + path(k) + "'");
    }

private:
    std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

    const json* obj_ = nullptr;
    std::string name_;
    std::set<std::string> known_;
};

json network_json(const NetworkConfig& n) {
    return {{"in_channels", n.in_channels},
            {"n_classes", n.n_classes},
            {"levels", n.levels},
            {"base_channels", n.base_channels},
            {"convs_per_level", n.convs_per_level},
            {"kernel_size", n.kernel_size},
            {"gn_groups", n.gn_groups},
            {"dropout_rate", n.dropout_rate},
            {"deep_supervision_levels", n.deep_supervision_levels},
            {"leaky_slope", n.leaky_slope},
            {"gn_eps", n.gn_eps},
            {"init_seed", n.init_seed}};
}

void read_network(Section s, NetworkConfig& n) {
    s.get("in_channels", n.in_channels);
    s.get("n_classes", n.n_classes);
    s.get("levels", n.levels);
    s.get("base_channels", n.base_channels);
    s.get("convs_per_level", n.convs_per_level);
    s.get("kernel_size", n.kernel_size);
    s.get("gn_groups", n.gn_groups);
    s.get("dropout_rate", n.dropout_rate);
    s.get("deep_supervision_levels", n.deep_supervision_levels);
    s.get("leaky_slope", n.leaky_slope);
    s.get("gn_eps", n.gn_eps);
    s.get("init_seed", n.init_seed);
    s.finish();
}

json to_json(const ExperimentConfig& c) {
    const PhantomSpec& p = c.phantom;
    const DataConfig& d = c.data;
    const TrainConfig& t = c.train;
    const LossConfig& l = t.loss;
    const ScheduleConfig& s = t.schedule;
    const AugmentConfig& a = t.augment;
    json j;
    j["echoseg_version"] = kVersion;
    j["phantom"] = {{"image_size", p.image_size},   {"n_cases", p.n_cases},
                    {"abnormal_fraction", p.abnormal_fraction}, {"drop_probability", p.drop_probability},
                    {"noise_level", p.noise_level}, {"seed", p.seed}};
    j["data"] = {{"manifest", d.manifest},
                 {"image_size", d.image_size},
                 {"split", {{"train", d.split.train}, {"val", d.split.val}, {"test", d.split.test}}},
                 {"split_seed", d.split_seed}};
    j["train"] = {{"batch_size", t.batch_size}, {"epochs", t.epochs},
                  {"seed", t.seed},             {"momentum", t.momentum},
                  {"ds_weights", t.ds_weights}, {"view", std::string(to_string(t.view_filter))}};
    j["loss"] = {{"dice_exponent", l.dice_exponent},
                 {"ce_exponent", l.ce_exponent},
                 {"w_dice", l.w_dice},
                 {"w_ce", l.w_ce},
                 {"pred_floor", l.pred_floor},
                 {"dice_floor", l.dice_floor},
                 {"legacy_epsilon", l.legacy_epsilon},
                 {"mode", to_string(l.mode)},
                 {"presence_policy", to_string(l.presence)},
                 {"active_labels", l.active_labels},
                 {"class_weights", l.class_weights}};
    j["schedule"] = {{"lr_min", s.lr_min},
                     {"lr_max", s.lr_max},
                     {"first_cycle_epochs", s.first_cycle_epochs},
                     {"cycle_mult", s.cycle_mult}};
    j["network"] = network_json(t.network);
    j["augment"] = {{"apply_probability", a.apply_probability},
                    {"rotation_deg", a.rotation_deg},
                    {"shift_fraction", a.shift_fraction},
                    {"scale_low", a.scale_low},
                    {"scale_high", a.scale_high},
                    {"hflip", a.hflip},
                    {"seed", a.seed}};
    return j;
}

ExperimentConfig from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    ExperimentConfig c;
    Section top(j, "");
    for (const char* k : {"phantom", "data", "train", "loss", "schedule", "network", "augment"}) top.ignore(k);
    top.ignore("echoseg_version");
    top.finish();

    Section p(j, "phantom");
    p.get("image_size", c.phantom.image_size);
    p.get("n_cases", c.phantom.n_cases);
    p.get("abnormal_fraction", c.phantom.abnormal_fraction);
    p.get("drop_probability", c.phantom.drop_probability);
    p.get("noise_level", c.phantom.noise_level);
    p.get("seed", c.phantom.seed);
    p.finish();

    Section d(j, "data");
    d.get("manifest", c.data.manifest);
    d.get("image_size", c.data.image_size);
    d.get("split_seed", c.data.split_seed);
    d.ignore("split");
    d.finish();
    if (j.contains("data")) {
        Section sp(j.at("data"), "split");
        sp.get("train", c.data.split.train);
        sp.get("val", c.data.split.val);
        sp.get("test", c.data.split.test);
        sp.finish();
    }

    TrainConfig& t = c.train;
    Section tr(j, "train");
    tr.get("batch_size", t.batch_size);
    tr.get("epochs", t.epochs);
    tr.get("seed", t.seed);
    tr.get("momentum", t.momentum);
    tr.get("ds_weights", t.ds_weights);
    tr.get_enum("view", t.view_filter, [](const std::string& s) { return parse_view_filter(s); });
    tr.finish();

    Section l(j, "loss");
    l.get("dice_exponent", t.loss.dice_exponent);
    l.get("ce_exponent", t.loss.ce_exponent);
    l.get("w_dice", t.loss.w_dice);
    l.get("w_ce", t.loss.w_ce);
    l.get("pred_floor", t.loss.pred_floor);
    l.get("dice_floor", t.loss.dice_floor);
    l.get("legacy_epsilon", t.loss.legacy_epsilon);
    l.get_enum("mode", t.loss.mode, parse_dice_mode);
    l.get_enum("presence_policy", t.loss.presence, parse_presence_policy);
    l.get("active_labels", t.loss.active_labels);
    l.get("class_weights", t.loss.class_weights);
    l.finish();

    Section s(j, "schedule");
    s.get("lr_min", t.schedule.lr_min);
    s.get("lr_max", t.schedule.lr_max);
    s.get("first_cycle_epochs", t.schedule.first_cycle_epochs);
    s.get("cycle_mult", t.schedule.cycle_mult);
    s.finish();

    read_network(Section(j, "network"), t.network);

    Section a(j, "augment");
    a.get("apply_probability", t.augment.apply_probability);
    a.get("rotation_deg", t.augment.rotation_deg);
    a.get("shift_fraction", t.augment.shift_fraction);
    a.get("scale_low", t.augment.scale_low);
    a.get("scale_high", t.augment.scale_high);
    a.get("hflip", t.augment.hflip);
    a.get("seed", t.augment.seed);
    a.finish();

    t.image_size = c.data.image_size;
    t.schedule.total_epochs = t.epochs;

    c.phantom.validate();
    if (c.data.image_size < 1) throw ValidationError("data.image_size must be >= 1");
    t.validate();
    return c;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(origin + ": " + e.what());
    }
    return from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string resolved_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ValidationError("override '" + assignment + "' is not of the form section.key=value");
    const std::string section = assignment.substr(0, dot);
    const std::string key = assignment.substr(dot + 1, eq - dot - 1);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json j = to_json(cfg);
    if (!j.contains(section)) throw ValidationError("unknown config section '" + section + "'");
    if (!j[section].contains(key)) throw ValidationError("unknown config key '" + section + "." + key + "'");
    j[section][key] = value;
    cfg = from_json(j);
}

std::string network_config_json(const NetworkConfig& cfg) { return network_json(cfg).dump(); }

NetworkConfig parse_network_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("network config: ") + e.what());
    }
    NetworkConfig n;
    read_network(Section(j, ""), n);
    n.validate();
    return n;
}

}  // namespace echoseg
