#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "anml/data.hpp"
#include "anml/models.hpp"
#include "anml/nn.hpp"

namespace anml {

struct MetaTrainConfig {
    int64_t inner_steps = 20;      // k
    int64_t remember_size = 64;
    int64_t outer_iterations = 20000;
    double alpha = 1e-3;           // outer Adam learning rate
    double beta = 1e-1;            // inner SGD learning rate
    uint64_t seed = 0;
    std::string profile = "desk";
    std::string treatment = "ANML";
    int64_t checkpoint_every = 1000;
    double grad_clip = 0.0;        // 0 disables clipping
    bool audit = true;             // frozen-parameter hash audits per episode
};

// Record of one unrolled inner loop: the parameter states theta_0..theta_k
// (one graph when differentiable) and the per-step losses.
template <typename T>
struct EpisodeResult {
    std::vector<ParameterSet<T>> step_params;
    std::vector<double> step_losses;
    double meta_loss = std::numeric_limits<double>::quiet_NaN();
    double traj_loss = std::numeric_limits<double>::quiet_NaN();
    double rem_loss = std::numeric_limits<double>::quiet_NaN();
    double grad_norm_aux = 0.0;
    double grad_norm_pln = 0.0;

    const ParameterSet<T>& final_params() const { return step_params.back(); }
};

// View holding both parameter sets' tensors (aux first, then prediction) so
// the outer optimizer treats them as one collection.
template <typename T>
ParameterSet<T> merged_meta_view(const AnyModel<T>& model) {
    ParameterSet<T> merged;
    for (const auto& e : auxiliary_params(model).entries()) merged.add(e.name, e.tensor, e.flags);
    for (const auto& e : prediction_params(model).entries()) merged.add(e.name, e.tensor, e.flags);
    return merged;
}

template <typename T>
void assign_from_merged(AnyModel<T>& model, const ParameterSet<T>& merged) {
    auto& aux = auxiliary_params(model);
    auto& pln = prediction_params(model);
    for (const auto& e : merged.entries()) {
        if (aux.has(e.name))
            aux.set_tensor(e.name, e.tensor);
        else
            pln.set_tensor(e.name, e.tensor);
    }
}

template <typename T>
void set_all_requires_grad(ParameterSet<T>& params, bool on) {
    for (auto& e : params.entries()) e.tensor.set_requires_grad(on);
}

// ---------------------------------------------------------------------------
// Inner loop (Algorithm 1 lines 6-8): k sequential SGD steps, one trajectory
// instance per step, gated forward each step. Auxiliary parameters (NM/RLN)
// are read but never updated here.
// ---------------------------------------------------------------------------

template <typename T>
EpisodeResult<T> run_inner_loop(const AnyModel<T>& model, const ParameterSet<T>& start_params,
                                const TaskTrajectory& trajectory, T beta, bool differentiable) {
    if (trajectory.phase != Phase::meta_train || trajectory.class_order.size() != 1)
        throw ConfigError("inner loop expects a single-class meta-train trajectory");
    EpisodeResult<T> episode;
    episode.step_params.push_back(start_params);
    for (size_t i = 0; i < trajectory.items.size(); ++i) {
        const ParameterSet<T>& current = episode.step_params.back();
        Tensor<T> images = batch_tensor<T>(trajectory.items, i, 1);
        ForwardResult<T> out = model_forward(model, current, images);
        Tensor<T> loss =
            softmax_cross_entropy(out.logits, {trajectory.items[i].class_id});
        const double loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value))
            throw NumericError("inner loop: non-finite loss at step " + std::to_string(i) +
                               " (class " + std::to_string(trajectory.items[i].class_id) + ")");
        episode.step_losses.push_back(loss_value);
        std::vector<Tensor<T>> plastic = current.tensors_where(&ParamFlags::inner_plastic);
        std::vector<Tensor<T>> grads = backward(loss, plastic, differentiable);
        episode.step_params.push_back(sgd_step(current, grads, beta, differentiable));
    }
    return episode;
}

// ---------------------------------------------------------------------------
// Output-column reinitialization (meta-training only): the head weights and
// bias feeding one output unit are redrawn; every other scalar is carried
// bit-exactly. Implemented as a masked graph node so meta-gradients still
// reach the untouched rows.
// ---------------------------------------------------------------------------

template <typename T>
ParameterSet<T> reinit_output_column(const ParameterSet<T>& params, const std::string& head_layer,
                                     int64_t class_index, uint64_t seed,
                                     bool differentiable = true) {
    const Tensor<T>& w = params.get(head_layer + ".weight");
    const Tensor<T>& b = params.get(head_layer + ".bias");
    const int64_t out_units = w.shape()[0], fan_in = w.shape()[1];
    if (class_index < 0 || class_index >= out_units)
        throw ConfigError("reinit_output_column: class " + std::to_string(class_index) +
                          " out of range for head width " + std::to_string(out_units));

    std::mt19937_64 rng(mix_seed(seed, seed_stream::kReinitColumn));
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);

    std::vector<T> w_mask(static_cast<size_t>(w.numel()), T(1));
    std::vector<T> w_fresh(static_cast<size_t>(w.numel()), T(0));
    for (int64_t j = 0; j < fan_in; ++j) {
        w_mask[static_cast<size_t>(class_index * fan_in + j)] = T(0);
        w_fresh[static_cast<size_t>(class_index * fan_in + j)] = static_cast<T>(dist(rng));
    }
    std::vector<T> b_mask(static_cast<size_t>(out_units), T(1));
    std::vector<T> b_fresh(static_cast<size_t>(out_units), T(0));
    b_mask[static_cast<size_t>(class_index)] = T(0);
    b_fresh[static_cast<size_t>(class_index)] = static_cast<T>(dist(rng));

    GradRecordingGuard guard(differentiable);
    Tensor<T> new_w = add(mul(w, Tensor<T>::from_values(w.shape(), std::move(w_mask))),
                          Tensor<T>::from_values(w.shape(), std::move(w_fresh)));
    Tensor<T> new_b = add(mul(b, Tensor<T>::from_values(b.shape(), std::move(b_mask))),
                          Tensor<T>::from_values(b.shape(), std::move(b_fresh)));
    if (!differentiable) {
        new_w.set_requires_grad(w.requires_grad());
        new_b.set_requires_grad(b.requires_grad());
    }

    ParameterSet<T> out;
    for (const auto& e : params.entries()) {
        if (e.name == head_layer + ".weight")
            out.add(e.name, new_w, e.flags);
        else if (e.name == head_layer + ".bias")
            out.add(e.name, new_b, e.flags);
        else
            out.add(e.name, e.tensor, e.flags);
    }
    return out;
}

// ---------------------------------------------------------------------------
// One outer iteration (Algorithm 1): sample task and remember set, unroll the
// differentiable inner loop from a fresh prediction-net copy, evaluate the
// meta-loss at theta_k on trajectory + remember set, and take one Adam step
// on all meta-learned parameters jointly.
// ---------------------------------------------------------------------------

struct MetaStepMetrics {
    double meta_loss = 0.0;
    double traj_loss = 0.0;
    double rem_loss = 0.0;
    double grad_norm_aux = 0.0;
    double grad_norm_pln = 0.0;
};

template <typename T>
MetaStepMetrics meta_step(AnyModel<T>& model, const ClassInstanceStore& store,
                          const MetaTrainConfig& cfg, AdamState<T>& opt_state,
                          int64_t iteration) {
    set_all_requires_grad(auxiliary_params(model), true);
    set_all_requires_grad(prediction_params(model), true);

    std::mt19937_64 task_rng(mix_seed(cfg.seed, seed_stream::kTrajectory,
                                      static_cast<uint64_t>(iteration)));
    std::uniform_int_distribution<int64_t> class_pick(0, store.n_classes() - 1);
    const int64_t class_id = class_pick(task_rng);
    TaskTrajectory trajectory =
        make_metatrain_trajectory(store, class_id, cfg.inner_steps, task_rng());
    std::vector<Example> remember = sample_remember_set(
        store, cfg.remember_size,
        mix_seed(cfg.seed, seed_stream::kRememberSet, static_cast<uint64_t>(iteration)));

    const bool audit = cfg.audit || debug_checks();
    const uint64_t aux_hash_before = audit ? auxiliary_params(model).subset_hash() : 0;
    const uint64_t pln_hash_before = audit ? prediction_params(model).subset_hash() : 0;

    // Fresh inner copy of the prediction net with the trajectory class column
    // redrawn (not applied at meta-test).
    ParameterSet<T> theta0 = reinit_output_column(
        prediction_params(model), head_layer_name(model), class_id,
        mix_seed(cfg.seed, seed_stream::kReinitColumn, static_cast<uint64_t>(iteration)),
        /*differentiable=*/true);

    EpisodeResult<T> episode =
        run_inner_loop(model, theta0, trajectory, static_cast<T>(cfg.beta), /*differentiable=*/true);

    // Meta-loss batch: all trajectory images plus the remember set.
    std::vector<Example> meta_batch = trajectory.items;
    meta_batch.insert(meta_batch.end(), remember.begin(), remember.end());
    Tensor<T> images = batch_tensor<T>(meta_batch);
    std::vector<int64_t> labels = batch_labels(meta_batch, 0, meta_batch.size());
    ForwardResult<T> out = model_forward(model, episode.final_params(), images);
    Tensor<T> meta_loss = softmax_cross_entropy(out.logits, labels);
    const double meta_loss_value = static_cast<double>(meta_loss.item());
    if (!std::isfinite(meta_loss_value))
        throw NumericError("meta step " + std::to_string(iteration) + ": non-finite meta-loss");

    MetaStepMetrics metrics;
    metrics.meta_loss = meta_loss_value;
    {
        // Per-subset losses from the same logits, for the metrics stream.
        std::vector<T> probs = softmax_rows(out.logits);
        const int64_t C = out.logits.shape()[1];
        double traj_nll = 0.0, rem_nll = 0.0;
        for (size_t r = 0; r < meta_batch.size(); ++r) {
            const double p = static_cast<double>(
                probs[r * static_cast<size_t>(C) + static_cast<size_t>(labels[r])]);
            const double nll = -std::log(std::max(p, 1e-30));
            if (r < trajectory.items.size())
                traj_nll += nll;
            else
                rem_nll += nll;
        }
        metrics.traj_loss = traj_nll / static_cast<double>(trajectory.items.size());
        metrics.rem_loss =
            remember.empty() ? 0.0 : rem_nll / static_cast<double>(remember.size());
    }

    if (audit) {
        if (auxiliary_params(model).subset_hash() != aux_hash_before)
            throw NumericError("audit: auxiliary (NM/RLN) parameters changed inside the inner loop");
        if (prediction_params(model).subset_hash() != pln_hash_before)
            throw NumericError("audit: meta parameters mutated by the inner-loop copy");
    }

    ParameterSet<T> merged = merged_meta_view(model);
    std::vector<Tensor<T>> wrt = merged.tensors_where(&ParamFlags::meta_learned);
    std::vector<Tensor<T>> grads = backward(meta_loss, wrt, /*create_graph=*/false);

    if (cfg.grad_clip > 0.0) {
        double norm_sq = 0.0;
        for (const auto& g : grads)
            for (T v : g.values()) norm_sq += static_cast<double>(v) * static_cast<double>(v);
        const double norm = std::sqrt(norm_sq);
        if (norm > cfg.grad_clip) {
            NoGradGuard ng;
            const T factor = static_cast<T>(cfg.grad_clip / norm);
            for (auto& g : grads) g = scale(g, factor);
        }
    }

    {
        const size_t n_aux = auxiliary_params(model).names_where(&ParamFlags::meta_learned).size();
        double aux_sq = 0.0, pln_sq = 0.0;
        for (size_t i = 0; i < grads.size(); ++i)
            for (T v : grads[i].values())
                (i < n_aux ? aux_sq : pln_sq) += static_cast<double>(v) * static_cast<double>(v);
        metrics.grad_norm_aux = std::sqrt(aux_sq);
        metrics.grad_norm_pln = std::sqrt(pln_sq);
    }

    episode.meta_loss = metrics.meta_loss;
    episode.traj_loss = metrics.traj_loss;
    episode.rem_loss = metrics.rem_loss;
    episode.grad_norm_aux = metrics.grad_norm_aux;
    episode.grad_norm_pln = metrics.grad_norm_pln;

    AdamConfig adam_cfg;
    adam_cfg.alpha = cfg.alpha;
    ParameterSet<T> updated = adam_step(merged, grads, opt_state, adam_cfg);
    assign_from_merged(model, updated);
    return metrics;
}

// ---------------------------------------------------------------------------
// Pretrain-and-transfer baseline: plain i.i.d. supervised training on the
// meta-train images for a fixed evaluation budget, one image per SGD step.
// ---------------------------------------------------------------------------

template <typename T>
int64_t pretrain_iid(AnyModel<T>& model, const ClassInstanceStore& store, int64_t image_budget,
                     const MetaTrainConfig& cfg,
                     const std::function<void(int64_t, double)>& metrics_sink = {}) {
    if (image_budget < 0) throw ConfigError("pretrain budget must be non-negative");
    set_all_requires_grad(auxiliary_params(model), true);
    set_all_requires_grad(prediction_params(model), true);
    AdamState<T> opt = AdamState<T>::for_params(merged_meta_view(model));
    AdamConfig adam_cfg;
    adam_cfg.alpha = cfg.alpha;

    std::vector<Example> all;
    for (int64_t c = 0; c < store.n_classes(); ++c)
        for (int64_t i = 0; i < store.n_train_instances(c); ++i)
            all.push_back({store.train_instance(c, i), c, i});

    int64_t seen = 0;
    for (int64_t epoch = 0; seen < image_budget; ++epoch) {
        std::vector<Example> stream = all;
        std::mt19937_64 rng(mix_seed(cfg.seed, seed_stream::kPretrain, static_cast<uint64_t>(epoch)));
        std::shuffle(stream.begin(), stream.end(), rng);
        for (const auto& item : stream) {
            if (seen >= image_budget) break;
            Tensor<T> images = batch_tensor<T>({item});
            ForwardResult<T> out = model_forward(model, images);
            Tensor<T> loss = softmax_cross_entropy(out.logits, {item.class_id});
            if (!std::isfinite(static_cast<double>(loss.item())))
                throw NumericError("pretrain: non-finite loss at image " + std::to_string(seen));
            ParameterSet<T> merged = merged_meta_view(model);
            std::vector<Tensor<T>> wrt = merged.tensors_where(&ParamFlags::meta_learned);
            std::vector<Tensor<T>> grads = backward(loss, wrt);
            assign_from_merged(model, adam_step(merged, grads, opt, adam_cfg));
            ++seen;
            if (metrics_sink) metrics_sink(seen, static_cast<double>(loss.item()));
        }
    }
    return seen;
}

}  // namespace anml
