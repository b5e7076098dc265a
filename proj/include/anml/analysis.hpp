#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "anml/data.hpp"
#include "anml/models.hpp"

namespace anml {

// Per-image latent captures from a gated forward pass. OML models fill only
// the pre-gate (representation) vector.
struct ActivationRecord {
    int64_t class_id = 0;
    int64_t instance_id = 0;
    std::vector<float> pre_gate;
    std::vector<float> gate;
    std::vector<float> post_gate;
};

struct ActivationDump {
    std::string phase;  // capture moment, e.g. pre_finetune / post_finetune
    int64_t latent_size = 0;
    bool has_gate = false;
    std::vector<ActivationRecord> records;
};

template <typename T>
ActivationDump capture_activations(const AnyModel<T>& model, const std::vector<Example>& items,
                                   const std::string& phase) {
    NoGradGuard ng;
    ActivationDump dump;
    dump.phase = phase;
    dump.has_gate = std::holds_alternative<AnmlModel<T>>(model);
    for (const auto& item : items) {
        ForwardResult<T> out = model_forward(model, batch_tensor<T>({item}));
        ActivationRecord rec;
        rec.class_id = item.class_id;
        rec.instance_id = item.instance_id;
        auto to_float = [](const Tensor<T>& t) {
            std::vector<float> v(t.values().size());
            for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(t.values()[i]);
            return v;
        };
        rec.pre_gate = to_float(out.pre_gate);
        if (dump.has_gate) {
            rec.gate = to_float(out.gate);
            rec.post_gate = to_float(out.post_gate);
        }
        dump.latent_size = static_cast<int64_t>(rec.pre_gate.size());
        dump.records.push_back(std::move(rec));
    }
    return dump;
}

// ---------------------------------------------------------------------------
// Sparsity statistics: a unit is active when its value exceeds the threshold
// (0.01 in the reference analysis); a dead unit is active on zero images.
// ---------------------------------------------------------------------------

struct SparsityStats {
    double mean_active_fraction = 0.0;
    int64_t dead_neuron_count = 0;
};

struct SparsityReport {
    SparsityStats pre_gate;
    SparsityStats gate;
    SparsityStats post_gate;
    bool has_gate = false;
};

namespace detail {

inline SparsityStats sparsity_of(const std::vector<const std::vector<float>*>& vectors,
                                 double threshold) {
    SparsityStats stats;
    if (vectors.empty()) return stats;
    const size_t dim = vectors.front()->size();
    std::vector<int64_t> ever_active(dim, 0);
    double fraction_sum = 0.0;
    for (const auto* vec : vectors) {
        int64_t active = 0;
        for (size_t j = 0; j < dim; ++j)
            if (static_cast<double>((*vec)[j]) > threshold) {
                ++active;
                ever_active[j] = 1;
            }
        fraction_sum += static_cast<double>(active) / static_cast<double>(dim);
    }
    stats.mean_active_fraction = fraction_sum / static_cast<double>(vectors.size());
    for (size_t j = 0; j < dim; ++j)
        if (!ever_active[j]) ++stats.dead_neuron_count;
    return stats;
}

}  // namespace detail

inline SparsityReport sparsity_stats(const ActivationDump& dump, double threshold = 0.01) {
    if (threshold <= 0.0) throw ConfigError("sparsity threshold must be positive");
    if (dump.records.empty()) throw DataError("sparsity_stats: empty activation dump");
    SparsityReport report;
    report.has_gate = dump.has_gate;
    std::vector<const std::vector<float>*> pre, gate, post;
    for (const auto& r : dump.records) {
        pre.push_back(&r.pre_gate);
        if (dump.has_gate) {
            gate.push_back(&r.gate);
            post.push_back(&r.post_gate);
        }
    }
    report.pre_gate = detail::sparsity_of(pre, threshold);
    if (dump.has_gate) {
        report.gate = detail::sparsity_of(gate, threshold);
        report.post_gate = detail::sparsity_of(post, threshold);
    }
    return report;
}

// ---------------------------------------------------------------------------
// K-nearest-neighbor classification over activation vectors (Euclidean).
// Majority vote; ties break toward the smaller summed distance, then the
// smaller label id.
// ---------------------------------------------------------------------------

struct LabeledPoint {
    std::vector<float> values;
    int64_t label = 0;
};

inline int64_t knn_classify_one(const std::vector<LabeledPoint>& train,
                                const std::vector<float>& query, int64_t k) {
    if (train.empty()) throw DataError("knn: empty training set");
    if (k < 1 || k > static_cast<int64_t>(train.size()))
        throw ConfigError("knn: k=" + std::to_string(k) + " with " +
                          std::to_string(train.size()) + " training points");
    std::vector<std::pair<double, size_t>> dist(train.size());
    for (size_t i = 0; i < train.size(); ++i) {
        if (train[i].values.size() != query.size())
            throw ShapeError("knn: dimension mismatch");
        double d2 = 0.0;
        for (size_t j = 0; j < query.size(); ++j) {
            const double diff = static_cast<double>(train[i].values[j]) -
                                static_cast<double>(query[j]);
            d2 += diff * diff;
        }
        dist[i] = {d2, i};
    }
    // Index as secondary key keeps equal-distance ordering deterministic.
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());

    std::map<int64_t, std::pair<int64_t, double>> votes;  // label -> (count, summed distance)
    for (int64_t i = 0; i < k; ++i) {
        const auto& [d2, idx] = dist[static_cast<size_t>(i)];
        auto& v = votes[train[idx].label];
        v.first += 1;
        v.second += std::sqrt(d2);
    }
    int64_t best_label = -1;
    int64_t best_count = -1;
    double best_sum = 0.0;
    for (const auto& [label, v] : votes) {  // map iterates labels ascending
        if (v.first > best_count ||
            (v.first == best_count && v.second < best_sum)) {
            best_label = label;
            best_count = v.first;
            best_sum = v.second;
        }
    }
    return best_label;
}

inline std::vector<int64_t> knn_classify(const std::vector<LabeledPoint>& train,
                                         const std::vector<std::vector<float>>& queries,
                                         int64_t k) {
    std::vector<int64_t> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(knn_classify_one(train, q, k));
    return out;
}

enum class ActivationKind { pre_gate, gate, post_gate };

inline const std::vector<float>& record_vector(const ActivationRecord& r, ActivationKind kind) {
    switch (kind) {
        case ActivationKind::pre_gate: return r.pre_gate;
        case ActivationKind::gate: return r.gate;
        default: return r.post_gate;
    }
}

inline const char* kind_name(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::pre_gate: return "pre";
        case ActivationKind::gate: return "gate";
        default: return "post";
    }
}

// KNN accuracy of query activations against labeled training activations.
inline double knn_accuracy(const ActivationDump& train, const ActivationDump& queries,
                           ActivationKind kind, int64_t k) {
    std::vector<LabeledPoint> points;
    for (const auto& r : train.records) points.push_back({record_vector(r, kind), r.class_id});
    int64_t correct = 0;
    for (const auto& r : queries.records)
        correct += knn_classify_one(points, record_vector(r, kind), k) == r.class_id;
    return queries.records.empty()
               ? 0.0
               : static_cast<double>(correct) / static_cast<double>(queries.records.size());
}

// ---------------------------------------------------------------------------
// Activation export: CSV with one row per (image, kind), 9 significant
// digits (lossless for 32-bit floats).
// ---------------------------------------------------------------------------

inline void export_activations(const ActivationDump& dump, const std::filesystem::path& path) {
    if (dump.records.empty()) throw DataError("export_activations: empty dump");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << "class,instance,kind";
    for (int64_t j = 0; j < dump.latent_size; ++j) f << ",v" << j;
    f << "\n";
    char num[40];
    auto write_row = [&](const ActivationRecord& r, ActivationKind kind) {
        const auto& vec = record_vector(r, kind);
        f << r.class_id << "," << r.instance_id << "," << kind_name(kind);
        for (float v : vec) {
            std::snprintf(num, sizeof(num), ",%.9g", static_cast<double>(v));
            f << num;
        }
        f << "\n";
    };
    for (const auto& r : dump.records) {
        write_row(r, ActivationKind::pre_gate);
        if (dump.has_gate) {
            write_row(r, ActivationKind::gate);
            write_row(r, ActivationKind::post_gate);
        }
    }
    if (!f.good()) throw IoError("short write to " + path.string());
}

}  // namespace anml
