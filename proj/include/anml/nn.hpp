#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "anml/ops.hpp"
#include "anml/tensor.hpp"

namespace anml {

// Per-parameter behaviour flags. meta_learned: updated by the outer-loop
// optimizer. inner_plastic: updated by inner-loop SGD during meta-training.
// metatest_plastic: fine-tuned during meta-test training.
struct ParamFlags {
    bool meta_learned = true;
    bool inner_plastic = true;
    bool metatest_plastic = false;

    bool operator==(const ParamFlags&) const = default;
};

// Ordered, named collection of parameter tensors. Iteration order is the
// insertion order, which makes checkpoints and audits deterministic.
template <typename T>
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Tensor<T> tensor;
        ParamFlags flags;
    };

    void add(const std::string& name, Tensor<T> tensor, ParamFlags flags = {}) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        index_[name] = entries_.size();
        entries_.push_back({name, std::move(tensor), flags});
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const Tensor<T>& get(const std::string& name) const { return entry(name).tensor; }
    Tensor<T>& get(const std::string& name) { return entry(name).tensor; }
    const ParamFlags& flags(const std::string& name) const { return entry(name).flags; }

    void set_tensor(const std::string& name, Tensor<T> t) {
        Entry& e = entry(name);
        if (e.tensor.defined() && e.tensor.shape() != t.shape())
            throw ShapeError("parameter '" + name + "' shape " + format_shape(e.tensor.shape()) +
                             " cannot be replaced by " + format_shape(t.shape()));
        e.tensor = std::move(t);
    }

    void set_flags(const std::string& name, ParamFlags f) { entry(name).flags = f; }

    size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    int64_t total_scalars() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.tensor.numel();
        return n;
    }

    // Fresh leaf tensors sharing no storage or graph identity with this set.
    ParameterSet deep_copy(bool requires_grad = false) const {
        ParameterSet out;
        for (const auto& e : entries_)
            out.add(e.name, e.tensor.detached_copy(requires_grad), e.flags);
        return out;
    }

    std::vector<Tensor<T>> tensors_where(bool ParamFlags::*flag) const {
        std::vector<Tensor<T>> out;
        for (const auto& e : entries_)
            if (e.flags.*flag) out.push_back(e.tensor);
        return out;
    }

    std::vector<std::string> names_where(bool ParamFlags::*flag) const {
        std::vector<std::string> out;
        for (const auto& e : entries_)
            if (e.flags.*flag) out.push_back(e.name);
        return out;
    }

    // FNV hash over the raw value bits of a flag-selected subset (all
    // parameters when pred is null). Used by frozen-parameter audits.
    uint64_t subset_hash(bool (*pred)(const ParamFlags&) = nullptr) const {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& e : entries_) {
            if (pred && !pred(e.flags)) continue;
            h = fnv1a(e.name.data(), e.name.size(), h);
            h = fnv1a(e.tensor.values().data(), e.tensor.values().size() * sizeof(T), h);
        }
        return h;
    }

private:
    Entry& entry(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return entries_[it->second];
    }
    const Entry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return entries_[it->second];
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// Layer specifications and initialization
// ---------------------------------------------------------------------------

enum class LayerKind { conv2d, batchnorm, affine, relu, sigmoid };

struct LayerSpec {
    LayerKind kind;
    std::string name;  // parameter name prefix, e.g. "pln.conv1"
    // conv2d
    int64_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1, pad = 0;
    // affine
    int64_t in_features = 0, out_features = 0;
    // batchnorm
    int64_t channels = 0;

    static LayerSpec conv(std::string name, int64_t in_ch, int64_t out_ch, int64_t k,
                          int64_t stride, int64_t pad) {
        LayerSpec s;
        s.kind = LayerKind::conv2d;
        s.name = std::move(name);
        s.in_channels = in_ch;
        s.out_channels = out_ch;
        s.kernel = k;
        s.stride = stride;
        s.pad = pad;
        return s;
    }
    static LayerSpec bn(std::string name, int64_t channels) {
        LayerSpec s;
        s.kind = LayerKind::batchnorm;
        s.name = std::move(name);
        s.channels = channels;
        return s;
    }
    static LayerSpec fc(std::string name, int64_t in_features, int64_t out_features) {
        LayerSpec s;
        s.kind = LayerKind::affine;
        s.name = std::move(name);
        s.in_features = in_features;
        s.out_features = out_features;
        return s;
    }
    static LayerSpec act(LayerKind kind) {
        LayerSpec s;
        s.kind = kind;
        return s;
    }
};

template <typename T>
Tensor<T> uniform_fan_in_init(std::vector<int64_t> shape, int64_t fan_in, std::mt19937_64& rng) {
    if (fan_in <= 0) throw ConfigError("fan_in must be positive");
    const T bound = static_cast<T>(std::sqrt(1.0 / static_cast<double>(fan_in)));
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                                static_cast<double>(bound));
    std::vector<T> v(shape_numel(shape));
    for (auto& e : v) e = static_cast<T>(dist(rng));
    return Tensor<T>::from_values(std::move(shape), std::move(v));
}

// Weights uniform in +-sqrt(1/fan_in); biases zero; batchnorm scale 1, shift 0.
template <typename T>
ParameterSet<T> init_parameters(const std::vector<LayerSpec>& specs, uint64_t seed) {
    std::mt19937_64 rng(mix_seed(seed, seed_stream::kInitParams));
    ParameterSet<T> out;
    int64_t prev_out = -1;
    for (const auto& s : specs) {
        switch (s.kind) {
            case LayerKind::conv2d: {
                if (prev_out >= 0 && s.in_channels != prev_out)
                    throw ShapeError("layer '" + s.name + "' expects " +
                                     std::to_string(s.in_channels) + " input channels, chain provides " +
                                     std::to_string(prev_out));
                const int64_t fan_in = s.in_channels * s.kernel * s.kernel;
                out.add(s.name + ".weight",
                        uniform_fan_in_init<T>({s.out_channels, s.in_channels, s.kernel, s.kernel},
                                               fan_in, rng));
                out.add(s.name + ".bias", Tensor<T>::zeros({s.out_channels}));
                prev_out = s.out_channels;
                break;
            }
            case LayerKind::batchnorm: {
                if (prev_out >= 0 && s.channels != prev_out)
                    throw ShapeError("batchnorm '" + s.name + "' channel count " +
                                     std::to_string(s.channels) + " does not match chain " +
                                     std::to_string(prev_out));
                out.add(s.name + ".gamma", Tensor<T>::ones({s.channels}));
                out.add(s.name + ".beta", Tensor<T>::zeros({s.channels}));
                break;
            }
            case LayerKind::affine: {
                out.add(s.name + ".weight",
                        uniform_fan_in_init<T>({s.out_features, s.in_features}, s.in_features, rng));
                out.add(s.name + ".bias", Tensor<T>::zeros({s.out_features}));
                prev_out = s.out_features;
                break;
            }
            case LayerKind::relu:
            case LayerKind::sigmoid:
                break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer steps
// ---------------------------------------------------------------------------

// One SGD step over a flag-selected subset (inner_plastic during
// meta-training, metatest_plastic during fine-tuning). Unselected parameters
// are carried into the result as the same tensors (bit-exact, graph identity
// preserved). With differentiable set, updates are graph nodes so a later
// backward() reaches through them; otherwise they are fresh leaves that keep
// their requires-grad flag for the next step.
template <typename T>
ParameterSet<T> sgd_step(const ParameterSet<T>& params, const std::vector<Tensor<T>>& grads,
                         T beta, bool differentiable,
                         bool ParamFlags::*selector = &ParamFlags::inner_plastic) {
    if (beta < T(0)) throw ConfigError("sgd_step: beta must be non-negative");
    ParameterSet<T> out;
    size_t gi = 0;
    GradRecordingGuard guard(differentiable);
    for (const auto& e : params.entries()) {
        if (!(e.flags.*selector)) {
            out.add(e.name, e.tensor, e.flags);
            continue;
        }
        if (gi >= grads.size())
            throw ShapeError("sgd_step: fewer gradients than plastic parameters");
        const Tensor<T>& g = grads[gi++];
        if (g.shape() != e.tensor.shape())
            throw ShapeError("sgd_step: gradient shape " + format_shape(g.shape()) +
                             " does not match parameter '" + e.name + "' " +
                             format_shape(e.tensor.shape()));
        Tensor<T> stepped = sub(e.tensor, scale(g, beta));
        if (!differentiable) stepped.set_requires_grad(e.tensor.requires_grad());
        out.add(e.name, stepped, e.flags);
    }
    if (gi != grads.size())
        throw ShapeError("sgd_step: " + std::to_string(grads.size()) +
                         " gradients for " + std::to_string(gi) + " plastic parameters");
    return out;
}

// Adam moment accumulators for the meta_learned subset of one ParameterSet.
template <typename T>
struct AdamState {
    std::vector<std::string> names;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    int64_t step = 0;

    static AdamState for_params(const ParameterSet<T>& params) {
        AdamState s;
        for (const auto& e : params.entries()) {
            if (!e.flags.meta_learned) continue;
            s.names.push_back(e.name);
            s.m.emplace_back(e.tensor.numel(), T(0));
            s.v.emplace_back(e.tensor.numel(), T(0));
        }
        return s;
    }
};

struct AdamConfig {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over the meta_learned subset; other parameters carried
// over unchanged. Returns fresh leaves so checkpoint replay is bit-exact.
template <typename T>
ParameterSet<T> adam_step(const ParameterSet<T>& params, const std::vector<Tensor<T>>& grads,
                          AdamState<T>& state, const AdamConfig& cfg) {
    ParameterSet<T> out;
    size_t gi = 0;
    state.step += 1;
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T correction1 = T(1) - static_cast<T>(std::pow(cfg.beta1, state.step));
    const T correction2 = T(1) - static_cast<T>(std::pow(cfg.beta2, state.step));
    const T alpha = static_cast<T>(cfg.alpha), eps = static_cast<T>(cfg.eps);
    for (const auto& e : params.entries()) {
        if (!e.flags.meta_learned) {
            out.add(e.name, e.tensor, e.flags);
            continue;
        }
        if (gi >= grads.size() || gi >= state.names.size())
            throw ShapeError("adam_step: fewer gradients than meta-learned parameters");
        if (state.names[gi] != e.name)
            throw ShapeError("adam_step: state holds '" + state.names[gi] +
                             "' where parameters hold '" + e.name + "'");
        const Tensor<T>& g = grads[gi];
        if (g.shape() != e.tensor.shape())
            throw ShapeError("adam_step: gradient shape " + format_shape(g.shape()) +
                             " does not match parameter '" + e.name + "'");
        std::vector<T> next(e.tensor.values());
        auto& m = state.m[gi];
        auto& v = state.v[gi];
        const auto& gv = g.values();
        for (size_t i = 0; i < next.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * gv[i];
            v[i] = b2 * v[i] + (T(1) - b2) * gv[i] * gv[i];
            const T m_hat = m[i] / correction1;
            const T v_hat = v[i] / correction2;
            next[i] -= alpha * m_hat / (std::sqrt(v_hat) + eps);
        }
        out.add(e.name, Tensor<T>::from_values(e.tensor.shape(), std::move(next), true), e.flags);
        ++gi;
    }
    if (gi != grads.size())
        throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(gi) + " meta-learned parameters");
    return out;
}

}  // namespace anml
