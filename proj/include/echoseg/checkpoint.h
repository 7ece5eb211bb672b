#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "echoseg/network.h"

namespace echoseg {

// Binary container: magic, format version, a JSON header (network config plus
// caller metadata) and named float32 tensors in parameter order.
struct Checkpoint {
    NetworkConfig network;
    std::string metadata_json = "{}";  // free-form object stored in the header
    std::map<std::string, Tensor> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint capture(VNet& model, const std::string& metadata_json = "{}");
// Writes atomically through a temporary file in the same directory.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies tensors into `model`. Throws ValidationError when the configs differ (the
// init seed is ignored) or a
// tensor is missing or has the wrong shape.
void restore(VNet& model, const Checkpoint& ckpt);

}  // namespace echoseg
