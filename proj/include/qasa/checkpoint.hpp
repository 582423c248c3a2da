#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qasa/errors.hpp"
#include "qasa/model.hpp"

namespace qasa {

// Checkpoint layout:
//   bytes 0..4   "QASA1"
//   bytes 5..12  metadata length, unsigned 64-bit little-endian
//   metadata     UTF-8 JSON {format_version, config, parameters:[{path,shape,offset}]}
//   data         contiguous little-endian IEEE-754 doubles in manifest order;
//                offset is the byte offset of each tensor within this section

inline constexpr char kCheckpointMagic[] = "QASA1";
inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["variant"] = variant_name(c.variant);
    j["L"] = c.L;
    j["d"] = c.d;
    j["H"] = c.H;
    j["d_ff"] = c.d_ff;
    j["N"] = c.N;
    j["n"] = c.n;
    j["L_q"] = c.L_q;
    j["seed"] = c.seed;
    j["layer_norm_eps"] = c.layer_norm_eps;
    j["t_ref"] = c.t_ref;
    j["gradient_engine"] =
        c.gradient_engine == circuit::GradientEngine::Adjoint ? "adjoint"
                                                              : "parameter_shift";
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "variant") c.variant = parse_variant(value.get<std::string>());
        else if (key == "L") c.L = value.get<int>();
        else if (key == "d") c.d = value.get<int>();
        else if (key == "H") c.H = value.get<int>();
        else if (key == "d_ff") c.d_ff = value.get<int>();
        else if (key == "N") c.N = value.get<int>();
        else if (key == "n") c.n = value.get<int>();
        else if (key == "L_q") c.L_q = value.get<int>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "layer_norm_eps") c.layer_norm_eps = value.get<double>();
        else if (key == "t_ref") c.t_ref = value.get<double>();
        else if (key == "gradient_engine") {
            const auto name = value.get<std::string>();
            if (name == "adjoint")
                c.gradient_engine = circuit::GradientEngine::Adjoint;
            else if (name == "parameter_shift")
                c.gradient_engine = circuit::GradientEngine::ParameterShift;
            else
                throw ConfigError("unknown gradient_engine '" + name + "'");
        } else {
            throw ConfigError("unknown model config field '" + key + "'");
        }
    }
    return c;
}

namespace detail {

inline void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t read_u64_le(std::span<const std::uint8_t> in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
    nlohmann::ordered_json meta;
    meta["format_version"] = kCheckpointFormatVersion;
    meta["config"] = model_config_to_json(model.config());
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& path : model.param_paths()) {
        const Tensor& t = model.param(path);
        nlohmann::ordered_json entry;
        entry["path"] = path;
        entry["shape"] = t.shape();
        entry["offset"] = offset;
        manifest.push_back(std::move(entry));
        offset += static_cast<std::uint64_t>(t.size()) * 8;
    }
    meta["parameters"] = std::move(manifest);
    const std::string meta_str = meta.dump();

    std::vector<std::uint8_t> out;
    out.reserve(5 + 8 + meta_str.size() + offset);
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 5);
    detail::append_u64_le(out, meta_str.size());
    out.insert(out.end(), meta_str.begin(), meta_str.end());
    for (const auto& path : model.param_paths()) {
        for (const double v : model.param(path).data())
            detail::append_u64_le(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline std::unique_ptr<Model> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 13 || std::memcmp(bytes.data(), kCheckpointMagic, 5) != 0)
        throw ConfigError("not a QASA checkpoint (bad magic)");
    const std::uint64_t meta_len = detail::read_u64_le(bytes.subspan(5, 8));
    if (bytes.size() < 13 + meta_len)
        throw ConfigError("checkpoint truncated inside metadata");
    const nlohmann::json meta = nlohmann::json::parse(
        bytes.begin() + 13, bytes.begin() + 13 + static_cast<std::ptrdiff_t>(meta_len));
    if (meta.at("format_version").get<int>() != kCheckpointFormatVersion)
        throw ConfigError("unsupported checkpoint format version");

    auto model = std::make_unique<Model>(model_config_from_json(meta.at("config")));
    const auto data = bytes.subspan(13 + meta_len);
    const auto& manifest = meta.at("parameters");
    if (manifest.size() != model->param_paths().size())
        throw ConfigError("checkpoint manifest does not match model registry");
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& entry = manifest[i];
        const std::string path = entry.at("path").get<std::string>();
        if (path != model->param_paths()[i])
            throw ConfigError("checkpoint parameter order mismatch at '" + path + "'");
        Tensor& t = model->param(path);
        const auto shape = entry.at("shape").get<Shape>();
        if (shape != t.shape())
            throw ConfigError("checkpoint shape mismatch for '" + path + "'");
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        if (offset + t.size() * 8 > data.size())
            throw ConfigError("checkpoint data section truncated at '" + path + "'");
        double* dst = t.mutable_data();
        for (std::size_t k = 0; k < t.size(); ++k)
            dst[k] = std::bit_cast<double>(
                detail::read_u64_le(data.subspan(offset + k * 8, 8)));
    }
    return model;
}

inline void write_checkpoint(const std::string& path, const Model& model) {
    const auto bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline std::unique_ptr<Model> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace qasa
