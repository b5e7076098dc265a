#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "anml/nn.hpp"

namespace anml {

// Checkpoint format: `manifest.txt` holds one line per parameter
//   <name> f32 <d0>x<d1>x... m<0|1>i<0|1>t<0|1> <byte-offset>
// after a version line, and `params.bin` holds the little-endian 32-bit
// float payload concatenated in manifest order. Round-trips are bit-exact.

inline constexpr const char* kCheckpointVersionLine = "anml-checkpoint v1";

namespace detail {

inline void append_f32_le(std::string& out, float v) {
    const uint32_t bits = std::bit_cast<uint32_t>(v);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline float read_f32_le(const unsigned char* p) {
    const uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                          (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

inline std::string shape_token(const std::vector<int64_t>& shape) {
    if (shape.empty()) return "scalar";
    std::string s;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s;
}

inline std::vector<int64_t> parse_shape_token(const std::string& tok) {
    if (tok == "scalar") return {};
    std::vector<int64_t> shape;
    std::stringstream ss(tok);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        try {
            shape.push_back(std::stoll(part));
        } catch (...) {
            throw CheckpointError("bad shape token '" + tok + "' in manifest");
        }
    }
    return shape;
}

inline std::string flags_token(const ParamFlags& f) {
    std::string s = "m";
    s += f.meta_learned ? '1' : '0';
    s += 'i';
    s += f.inner_plastic ? '1' : '0';
    s += 't';
    s += f.metatest_plastic ? '1' : '0';
    return s;
}

inline ParamFlags parse_flags_token(const std::string& tok) {
    if (tok.size() != 6 || tok[0] != 'm' || tok[2] != 'i' || tok[4] != 't')
        throw CheckpointError("bad flags token '" + tok + "' in manifest");
    ParamFlags f;
    f.meta_learned = tok[1] == '1';
    f.inner_plastic = tok[3] == '1';
    f.metatest_plastic = tok[5] == '1';
    return f;
}

}  // namespace detail

inline void save_parameter_archive(const std::filesystem::path& manifest_path,
                                   const std::filesystem::path& bin_path,
                                   const ParameterSet<float>& params) {
    std::string manifest = std::string(kCheckpointVersionLine) + "\n";
    std::string blob;
    for (const auto& e : params.entries()) {
        manifest += e.name + " f32 " + detail::shape_token(e.tensor.shape()) + " " +
                    detail::flags_token(e.flags) + " " + std::to_string(blob.size()) + "\n";
        for (float v : e.tensor.values()) detail::append_f32_le(blob, v);
    }
    std::ofstream mf(manifest_path, std::ios::binary | std::ios::trunc);
    if (!mf) throw IoError("cannot write " + manifest_path.string());
    mf << manifest;
    std::ofstream bf(bin_path, std::ios::binary | std::ios::trunc);
    if (!bf) throw IoError("cannot write " + bin_path.string());
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!mf.good() || !bf.good())
        throw IoError("short write while saving checkpoint to " + manifest_path.parent_path().string());
}

inline ParameterSet<float> load_parameter_archive(const std::filesystem::path& manifest_path,
                                                  const std::filesystem::path& bin_path) {
    std::ifstream mf(manifest_path, std::ios::binary);
    if (!mf) throw CheckpointError("cannot open " + manifest_path.string());
    std::string line;
    if (!std::getline(mf, line) || line != kCheckpointVersionLine)
        throw CheckpointError("unsupported checkpoint version in " + manifest_path.string() +
                              ": '" + line + "'");

    std::ifstream bf(bin_path, std::ios::binary);
    if (!bf) throw CheckpointError("cannot open " + bin_path.string());
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)),
                                    std::istreambuf_iterator<char>());

    ParameterSet<float> out;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string name, dtype, shape_tok, flags_tok;
        uint64_t offset = 0;
        if (!(ss >> name >> dtype >> shape_tok >> flags_tok >> offset))
            throw CheckpointError("malformed manifest line '" + line + "'");
        if (dtype != "f32")
            throw CheckpointError("unsupported dtype '" + dtype + "' for parameter '" + name + "'");
        std::vector<int64_t> shape = detail::parse_shape_token(shape_tok);
        const size_t count = static_cast<size_t>(shape_numel(shape));
        if (offset + count * 4 > blob.size())
            throw CheckpointError("parameter '" + name + "' extends past end of " +
                                  bin_path.string());
        std::vector<float> values(count);
        for (size_t i = 0; i < count; ++i)
            values[i] = detail::read_f32_le(blob.data() + offset + i * 4);
        out.add(name, Tensor<float>::from_values(std::move(shape), std::move(values)),
                detail::parse_flags_token(flags_tok));
    }
    return out;
}

// Optimizer state rides in the same archive format under reserved names.
inline ParameterSet<float> adam_state_to_archive(const AdamState<float>& state) {
    ParameterSet<float> out;
    out.add("adam.step", Tensor<float>::from_values({1}, {static_cast<float>(state.step)}));
    for (size_t i = 0; i < state.names.size(); ++i) {
        out.add("adam.m." + state.names[i],
                Tensor<float>::from_values({static_cast<int64_t>(state.m[i].size())},
                                           std::vector<float>(state.m[i])));
        out.add("adam.v." + state.names[i],
                Tensor<float>::from_values({static_cast<int64_t>(state.v[i].size())},
                                           std::vector<float>(state.v[i])));
    }
    return out;
}

inline AdamState<float> adam_state_from_archive(const ParameterSet<float>& archive,
                                                const ParameterSet<float>& params) {
    AdamState<float> state = AdamState<float>::for_params(params);
    state.step = static_cast<int64_t>(archive.get("adam.step").values()[0]);
    for (size_t i = 0; i < state.names.size(); ++i) {
        const auto& m = archive.get("adam.m." + state.names[i]).values();
        const auto& v = archive.get("adam.v." + state.names[i]).values();
        if (m.size() != state.m[i].size() || v.size() != state.v[i].size())
            throw CheckpointError("optimizer state size mismatch for '" + state.names[i] + "'");
        state.m[i] = m;
        state.v[i] = v;
    }
    return state;
}

struct CheckpointMeta {
    std::vector<std::pair<std::string, std::string>> items;

    void set(const std::string& key, const std::string& value) {
        for (auto& kv : items)
            if (kv.first == key) {
                kv.second = value;
                return;
            }
        items.emplace_back(key, value);
    }
    std::string get(const std::string& key, const std::string& fallback = "") const {
        for (const auto& kv : items)
            if (kv.first == key) return kv.second;
        return fallback;
    }
};

inline void save_checkpoint_meta(const std::filesystem::path& path, const CheckpointMeta& meta) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    for (const auto& kv : meta.items) f << kv.first << " = " << kv.second << "\n";
}

inline CheckpointMeta load_checkpoint_meta(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw CheckpointError("cannot open " + path.string());
    CheckpointMeta meta;
    std::string line;
    while (std::getline(f, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
        };
        trim(key);
        trim(value);
        meta.set(key, value);
    }
    return meta;
}

// Directory-level checkpoint: model (+ optional optimizer state) + metadata.
inline void save_checkpoint_dir(const std::filesystem::path& dir,
                                const ParameterSet<float>& params,
                                const AdamState<float>* opt_state, const CheckpointMeta& meta) {
    std::filesystem::create_directories(dir);
    save_parameter_archive(dir / "manifest.txt", dir / "params.bin", params);
    if (opt_state)
        save_parameter_archive(dir / "opt_manifest.txt", dir / "opt_params.bin",
                               adam_state_to_archive(*opt_state));
    save_checkpoint_meta(dir / "meta.txt", meta);
}

}  // namespace anml
