#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace anml {

// ---------------------------------------------------------------------------
// Error taxonomy. Each carries a short machine-greppable code that the CLI
// prints as "error: E_XXX: message".
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& msg)
        : std::runtime_error(msg), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("E_SHAPE", msg) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("E_NUMERIC", msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("E_CONFIG", msg) {}
};
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("E_DATA", msg) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("E_IO", msg) {}
};
struct CheckpointError : Error {
    explicit CheckpointError(const std::string& msg) : Error("E_CHECKPOINT", msg) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error("E_USAGE", msg) {}
};

// ---------------------------------------------------------------------------
// Debug checks. When enabled, every op validates that its output is finite
// and frozen-parameter audits run each episode. Cheap at desk scale.
// ---------------------------------------------------------------------------

inline bool& debug_checks() {
    static bool enabled = false;
    return enabled;
}

struct DebugChecksGuard {
    explicit DebugChecksGuard(bool on) : prev_(debug_checks()) { debug_checks() = on; }
    ~DebugChecksGuard() { debug_checks() = prev_; }
    DebugChecksGuard(const DebugChecksGuard&) = delete;
    DebugChecksGuard& operator=(const DebugChecksGuard&) = delete;

private:
    bool prev_;
};

// ---------------------------------------------------------------------------
// Seed derivation. All randomness in a run is derived from one master seed
// plus (stream, index) tags, so a resumed run replays the exact streams of
// an uninterrupted one.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t master, uint64_t stream, uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ 0x6a09e667f3bcc908ULL) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + index));
}

// Named streams so call sites do not collide by accident.
namespace seed_stream {
inline constexpr uint64_t kInitParams = 1;
inline constexpr uint64_t kDataSplit = 2;
inline constexpr uint64_t kTrajectory = 3;
inline constexpr uint64_t kRememberSet = 4;
inline constexpr uint64_t kReinitColumn = 5;
inline constexpr uint64_t kSynthetic = 6;
inline constexpr uint64_t kIidStream = 7;
inline constexpr uint64_t kRandomNm = 8;
inline constexpr uint64_t kPretrain = 9;
}  // namespace seed_stream

// FNV-1a over raw bytes; used for frozen-parameter audits.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string format_shape(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace anml
