#include "echoseg/checkpoint.h"

#include <array>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "echoseg/config.h"
#include "echoseg/errors.h"

namespace echoseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic = {'E', 'S', 'G', 'C', 'K', 'P', 'T', '\n'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in, const fs::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("truncated checkpoint " + path.string());
    return v;
}

std::string take_string(std::istream& in, std::uint64_t n, const fs::path& path) {
    if (n > (1u << 30)) throw ValidationError("corrupt checkpoint " + path.string());
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw ValidationError("truncated checkpoint " + path.string());
    return s;
}

}  // namespace

Checkpoint capture(VNet& model, const std::string& metadata_json) {
    Checkpoint c;
    c.network = model.config();
    c.metadata_json = metadata_json;
    for (Parameter* p : model.parameters()) c.tensors.emplace(p->name, p->value);
    return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    json header;
    header["network"] = json::parse(network_config_json(ckpt.network));
    header["metadata"] = json::parse(ckpt.metadata_json);
    const std::string text = header.dump();

    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + tmp.string());
        out.write(kMagic.data(), kMagic.size());
        put<std::uint32_t>(out, kCheckpointVersion);
        put<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
        for (const auto& [name, t] : ckpt.tensors) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            for (int d : {t.n(), t.c(), t.h(), t.w()}) put<std::int32_t>(out, d);
            out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        }
        if (!out) throw IoError("failed writing checkpoint " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic)
        throw ValidationError(path.string() + " is not a checkpoint file");
    const auto version = take<std::uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw ValidationError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
    const std::string text = take_string(in, take<std::uint64_t>(in, path), path);
    Checkpoint c;
    try {
        const json header = json::parse(text);
        c.network = parse_network_config(header.at("network").dump());
        c.metadata_json = header.at("metadata").dump();
    } catch (const json::exception& e) {
        throw ValidationError("corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    const auto count = take<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = take_string(in, take<std::uint32_t>(in, path), path);
        Shape4 s;
        s.n = take<std::int32_t>(in, path);
        s.c = take<std::int32_t>(in, path);
        s.h = take<std::int32_t>(in, path);
        s.w = take<std::int32_t>(in, path);
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.size() > (1u << 28))
            throw ValidationError("corrupt tensor shape in " + path.string());
        Tensor t(s);
        if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
            throw ValidationError("truncated checkpoint " + path.string());
        c.tensors.emplace(name, std::move(t));
    }
    return c;
}

void restore(VNet& model, const Checkpoint& ckpt) {
    NetworkConfig structural = ckpt.network;
    structural.init_seed = model.config().init_seed;  // only affects initialization
    if (!(model.config() == structural))
        throw ValidationError("checkpoint network config " + network_config_json(ckpt.network) +
                              " does not match model config " + network_config_json(model.config()));
    const auto params = model.parameters();
    if (params.size() != ckpt.tensors.size())
        throw ValidationError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model has " +
                              std::to_string(params.size()));
    for (Parameter* p : params) {
        auto it = ckpt.tensors.find(p->name);
        if (it == ckpt.tensors.end()) throw ValidationError("checkpoint lacks tensor '" + p->name + "'");
        require_same_shape(p->value.shape(), it->second.shape(), ("checkpoint tensor '" + p->name + "'").c_str());
        p->value = it->second;
    }
}

}  // namespace echoseg
