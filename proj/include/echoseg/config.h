#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "echoseg/dataset.h"
#include "echoseg/synthgen.h"
#include "echoseg/trainer.h"

namespace echoseg {

inline constexpr const char* kVersion = "0.1.0";

struct DataConfig {
    std::string manifest;  // empty: generate phantoms from the phantom section
    int image_size = 128;  // network input side after pad-and-resize
    SplitRatios split;
    std::uint64_t split_seed = 0;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

// Everything one experiment needs, loaded from one JSON file with sections
// phantom, data, train, loss, schedule, network, augment.
struct ExperimentConfig {
    PhantomSpec phantom;
    DataConfig data;
    TrainConfig train;
};

// Throws ValidationError for malformed JSON, wrong types, unknown keys or invalid values.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "config");
// IoError when the file cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON text; parse_config(resolved_config(c)) reproduces c.
std::string resolved_config(const ExperimentConfig& cfg);

// "section.key=value" where value is JSON (bare words are taken as strings).
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

std::string network_config_json(const NetworkConfig& cfg);
NetworkConfig parse_network_config(const std::string& text);

}  // namespace echoseg
