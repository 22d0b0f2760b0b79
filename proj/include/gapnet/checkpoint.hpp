#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gapnet/errors.hpp"
#include "gapnet/layers.hpp"
#include "gapnet/tensor.hpp"

namespace gapnet {

// Versioned binary container of named tensors plus a config echo.
// Layout: magic, scalar width, config text, then per tensor
// name / flags / shape / raw little-endian values. Round-trips bit-exactly.
inline constexpr char kCheckpointMagic[8] = {'G', 'A', 'P', 'C', 'K', 'P', 'T', '1'};

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint: truncated file");
    return v;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const std::string& config_echo,
                     const std::vector<NamedTensorRef<S>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_pod(out, static_cast<std::uint32_t>(sizeof(S)));
    detail::write_pod(out, static_cast<std::uint32_t>(config_echo.size()));
    out.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& ref : tensors) {
        detail::write_pod(out, static_cast<std::uint16_t>(ref.name.size()));
        out.write(ref.name.data(), static_cast<std::streamsize>(ref.name.size()));
        detail::write_pod(out, static_cast<std::uint8_t>(ref.is_param ? 1 : 0));
        detail::write_pod(out, static_cast<std::uint8_t>(ref.tensor->rank()));
        for (auto e : ref.tensor->shape) detail::write_pod(out, static_cast<std::uint32_t>(e));
        out.write(reinterpret_cast<const char*>(ref.tensor->data.data()),
                  static_cast<std::streamsize>(ref.tensor->size() * sizeof(S)));
    }
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

template <typename S>
struct CheckpointData {
    std::string config_echo;
    std::map<std::string, Tensor<S>> tensors;
};

template <typename S>
CheckpointData<S> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw DataError("not a checkpoint file: " + path);
    }
    const auto width = detail::read_pod<std::uint32_t>(in);
    if (width != sizeof(S)) {
        throw ConfigError("checkpoint scalar width " + std::to_string(width) +
                          " does not match build width " + std::to_string(sizeof(S)));
    }
    const auto cfg_len = detail::read_pod<std::uint32_t>(in);
    CheckpointData<S> data;
    data.config_echo.resize(cfg_len);
    in.read(data.config_echo.data(), cfg_len);
    const auto count = detail::read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_pod<std::uint16_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        detail::read_pod<std::uint8_t>(in);  // param flag, informational
        const auto rank = detail::read_pod<std::uint8_t>(in);
        Shape sh(rank);
        for (auto& e : sh) e = detail::read_pod<std::uint32_t>(in);
        Tensor<S> t(sh);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.size() * sizeof(S)));
        if (!in) throw DataError("checkpoint: truncated tensor " + name);
        data.tensors.emplace(std::move(name), std::move(t));
    }
    return data;
}

// Copies checkpoint tensors into a model's named slots; any missing name or
// shape disagreement means the checkpoint belongs to a different config.
template <typename S>
void apply_checkpoint(const CheckpointData<S>& data, std::vector<NamedTensorRef<S>>& refs) {
    for (auto& ref : refs) {
        auto it = data.tensors.find(ref.name);
        if (it == data.tensors.end()) {
            throw ConfigError("checkpoint missing tensor: " + ref.name);
        }
        if (it->second.shape != ref.tensor->shape) {
            throw ConfigError("checkpoint tensor " + ref.name + " has shape " +
                              shape_str(it->second.shape) + ", model expects " +
                              shape_str(ref.tensor->shape));
        }
        ref.tensor->data = it->second.data;
    }
}

}  // namespace gapnet
