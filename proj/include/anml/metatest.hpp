#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "anml/analysis.hpp"
#include "anml/data.hpp"
#include "anml/metatrain.hpp"
#include "anml/models.hpp"

namespace anml {

struct EvalReport {
    std::string treatment;
    int64_t n_classes = 0;
    uint64_t seed = 0;
    double beta = 0.0;
    bool iid = false;
    int64_t epochs = 1;
    bool dry_run = false;

    double train_acc = std::numeric_limits<double>::quiet_NaN();
    double test_acc = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> per_class_train_acc;  // encounter order
    std::vector<double> per_class_test_acc;   // encounter order
    std::vector<int64_t> class_order;         // store class ids in encounter order

    int64_t total_steps = 0;
    int64_t first_class_update_gap = 0;  // steps since the first class was last seen
    double runtime_s = 0.0;
    bool failed = false;
    int64_t failed_step = -1;
    std::string error;

    std::optional<ActivationDump> activations;  // post-fine-tuning captures, when requested
};

struct MetaTestOptions {
    bool iid = false;
    int64_t epochs = 1;
    bool dry_run = false;
    bool audit = true;
    bool capture_activations = false;
};

// ---------------------------------------------------------------------------
// Algorithm 2: sequential fine-tuning over a meta-test trajectory, one SGD
// step per instance, restricted to the treatment's metatest_plastic subset.
// No per-class copies and no output-column reinitialization. Classes map to
// head indices in encounter order.
// ---------------------------------------------------------------------------

template <typename T>
EvalReport run_metatest(const AnyModel<T>& base_model, const ClassInstanceStore& store,
                        int64_t n_classes, T beta, const std::string& treatment, uint64_t seed,
                        const MetaTestOptions& opts = {}) {
    const auto t_start = std::chrono::steady_clock::now();
    EvalReport report;
    report.treatment = treatment;
    report.n_classes = n_classes;
    report.seed = seed;
    report.beta = static_cast<double>(beta);
    report.iid = opts.iid;
    report.epochs = opts.epochs;
    report.dry_run = opts.dry_run;

    if (!opts.iid && opts.epochs != 1)
        throw ConfigError("sequential meta-test runs are single-epoch; epochs apply to oracles");

    TaskTrajectory trajectory = make_metatest_trajectory(store, n_classes, seed);
    report.class_order = trajectory.class_order;

    // Head indices are assigned in encounter order and shared between the
    // sequential run and its oracle so both consume the same multiset.
    std::map<int64_t, int64_t> head_index;
    for (int64_t c : trajectory.class_order)
        head_index.emplace(c, static_cast<int64_t>(head_index.size()));
    if (static_cast<int64_t>(head_index.size()) > model_head_classes(base_model))
        throw ConfigError("trajectory spans " + std::to_string(head_index.size()) +
                          " classes but the head has " +
                          std::to_string(model_head_classes(base_model)) + " outputs");

    std::vector<Example> stream =
        opts.iid ? make_iid_stream(trajectory, opts.epochs, seed) : trajectory.items;
    report.total_steps = static_cast<int64_t>(stream.size());
    {
        int64_t last_seen = -1;
        for (size_t i = 0; i < stream.size(); ++i)
            if (stream[i].class_id == trajectory.class_order.front())
                last_seen = static_cast<int64_t>(i);
        report.first_class_update_gap =
            last_seen < 0 ? 0 : report.total_steps - (last_seen + 1);
    }
    if (opts.dry_run) return report;

    AnyModel<T> model = deep_copy_model(base_model);
    // Only fine-tunable parameters participate in gradients; everything else
    // runs forward-only.
    for (auto& e : auxiliary_params(model).entries())
        e.tensor.set_requires_grad(e.flags.metatest_plastic);
    for (auto& e : prediction_params(model).entries())
        e.tensor.set_requires_grad(e.flags.metatest_plastic);

    auto frozen_hash = [](const ParamFlags& f) { return !f.metatest_plastic; };
    const uint64_t aux_frozen_before = auxiliary_params(model).subset_hash(frozen_hash);
    const uint64_t pln_frozen_before = prediction_params(model).subset_hash(frozen_hash);

    const size_t n_aux_plastic =
        auxiliary_params(model).names_where(&ParamFlags::metatest_plastic).size();

    for (size_t step = 0; step < stream.size(); ++step) {
        const Example& item = stream[step];
        try {
            Tensor<T> images = batch_tensor<T>(stream, step, 1);
            ForwardResult<T> out = model_forward(model, images);
            Tensor<T> loss = softmax_cross_entropy(out.logits, {head_index.at(item.class_id)});
            if (!std::isfinite(static_cast<double>(loss.item())))
                throw NumericError("non-finite fine-tuning loss");
            std::vector<Tensor<T>> plastic =
                auxiliary_params(model).tensors_where(&ParamFlags::metatest_plastic);
            {
                auto pln_plastic =
                    prediction_params(model).tensors_where(&ParamFlags::metatest_plastic);
                plastic.insert(plastic.end(), pln_plastic.begin(), pln_plastic.end());
            }
            if (!plastic.empty()) {
                std::vector<Tensor<T>> grads = backward(loss, plastic);
                std::vector<Tensor<T>> aux_grads(grads.begin(),
                                                 grads.begin() + static_cast<long>(n_aux_plastic));
                std::vector<Tensor<T>> pln_grads(grads.begin() + static_cast<long>(n_aux_plastic),
                                                 grads.end());
                auxiliary_params(model) = sgd_step(auxiliary_params(model), aux_grads, beta, false,
                                                   &ParamFlags::metatest_plastic);
                prediction_params(model) = sgd_step(prediction_params(model), pln_grads, beta,
                                                    false, &ParamFlags::metatest_plastic);
            }
        } catch (const NumericError& e) {
            report.failed = true;
            report.failed_step = static_cast<int64_t>(step);
            report.error = e.what();
            report.runtime_s = std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - t_start)
                                   .count();
            return report;
        }
    }

    if (opts.audit) {
        if (auxiliary_params(model).subset_hash(frozen_hash) != aux_frozen_before ||
            prediction_params(model).subset_hash(frozen_hash) != pln_frozen_before)
            throw NumericError("audit: frozen parameters changed during meta-test fine-tuning (" +
                               treatment + ")");
    }

    // Evaluate final parameters on (a) every meta-test training instance and
    // (b) the held-out instances of every trajectory class, one image per
    // forward pass (matching the fine-tuning batch statistics).
    NoGradGuard ng;
    auto evaluate = [&](bool train_split, std::vector<double>& per_class) {
        int64_t correct_total = 0, count_total = 0;
        for (int64_t c : trajectory.class_order) {
            const int64_t n =
                train_split ? store.n_train_instances(c) : store.n_test_instances(c);
            int64_t correct = 0;
            for (int64_t i = 0; i < n; ++i) {
                Example e{train_split ? store.train_instance(c, i) : store.test_instance(c, i), c,
                          i};
                ForwardResult<T> out = model_forward(model, batch_tensor<T>({e}));
                correct += argmax_rows(out.logits)[0] == head_index.at(c);
            }
            per_class.push_back(static_cast<double>(correct) / static_cast<double>(n));
            correct_total += correct;
            count_total += n;
        }
        return static_cast<double>(correct_total) / static_cast<double>(count_total);
    };
    report.train_acc = evaluate(true, report.per_class_train_acc);
    report.test_acc = evaluate(false, report.per_class_test_acc);

    if (opts.capture_activations) {
        std::vector<Example> queries;
        for (int64_t c : trajectory.class_order)
            for (int64_t i = 0; i < store.n_test_instances(c); ++i)
                queries.push_back({store.test_instance(c, i), c, i});
        report.activations = capture_activations(model, queries, "post_finetune");
    }

    report.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

// ---------------------------------------------------------------------------
// Learning-rate search (per sequence length): the beta with the best mean
// meta-test-test accuracy over the search seeds wins; ties go to the smaller
// beta.
// ---------------------------------------------------------------------------

template <typename T>
T grid_search_beta(const AnyModel<T>& model, const ClassInstanceStore& store, int64_t n_classes,
                   std::vector<T> candidate_betas, const std::vector<uint64_t>& seeds,
                   const std::string& treatment, const MetaTestOptions& opts = {}) {
    if (candidate_betas.empty()) throw ConfigError("beta grid is empty");
    if (seeds.empty()) throw ConfigError("beta grid search needs at least one seed");
    std::sort(candidate_betas.begin(), candidate_betas.end());

    bool any_succeeded = false;
    T best_beta = candidate_betas.front();
    double best_acc = -1.0;
    for (T beta : candidate_betas) {
        double acc_sum = 0.0;
        int64_t successes = 0;
        for (uint64_t seed : seeds) {
            EvalReport r = run_metatest(model, store, n_classes, beta, treatment, seed, opts);
            if (r.failed) continue;
            acc_sum += r.test_acc;
            ++successes;
        }
        if (successes == 0) continue;
        any_succeeded = true;
        const double mean = acc_sum / static_cast<double>(successes);
        if (mean > best_acc) {  // strict: earlier (smaller) beta wins ties
            best_acc = mean;
            best_beta = beta;
        }
    }
    if (!any_succeeded)
        throw NumericError("beta grid search: every candidate failed for " + treatment);
    return best_beta;
}

// ---------------------------------------------------------------------------
// Treatment x length x seed matrix. Cells are independent; failures are
// recorded per cell and the matrix completes.
// ---------------------------------------------------------------------------

struct MatrixConfig {
    std::vector<std::string> treatments;
    std::vector<int64_t> lengths;
    std::vector<uint64_t> seeds;
    std::vector<double> betas = {3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
    std::vector<uint64_t> search_seeds = {1001, 1002, 1003};
    bool oracle = false;       // run cells i.i.d. instead of sequentially
    int64_t epochs = 1;        // oracle epochs
    int64_t workers = 1;
    bool audit = true;
};

// Provides the (meta-trained or fresh) model for a treatment and cell seed.
using ModelProvider = std::function<AnyModel<float>(const std::string& treatment, uint64_t seed)>;

inline std::vector<EvalReport> run_matrix(const MatrixConfig& cfg, const ClassInstanceStore& store,
                                          const ModelProvider& provider,
                                          const std::function<void(const EvalReport&)>& on_cell = {}) {
    struct Cell {
        std::string treatment;
        int64_t length;
        uint64_t seed;
        double beta;
    };
    std::vector<Cell> cells;
    for (const auto& treatment : cfg.treatments) {
        for (int64_t length : cfg.lengths) {
            MetaTestOptions search_opts;
            search_opts.iid = cfg.oracle;
            search_opts.epochs = cfg.oracle ? cfg.epochs : 1;
            search_opts.audit = cfg.audit;
            double beta;
            if (cfg.betas.size() == 1) {
                beta = cfg.betas.front();
            } else {
                AnyModel<float> model = provider(treatment, cfg.search_seeds.front());
                std::vector<float> grid(cfg.betas.begin(), cfg.betas.end());
                beta = static_cast<double>(grid_search_beta(model, store, length, grid,
                                                            cfg.search_seeds, treatment,
                                                            search_opts));
            }
            for (uint64_t seed : cfg.seeds) cells.push_back({treatment, length, seed, beta});
        }
    }

    std::vector<EvalReport> reports(cells.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            MetaTestOptions opts;
            opts.iid = cfg.oracle;
            opts.epochs = cfg.oracle ? cfg.epochs : 1;
            opts.audit = cfg.audit;
            try {
                AnyModel<float> model = provider(cell.treatment, cell.seed);
                reports[i] = run_metatest(model, store, cell.length,
                                          static_cast<float>(cell.beta), cell.treatment,
                                          cell.seed, opts);
                reports[i].beta = cell.beta;
            } catch (const std::exception& e) {
                reports[i].treatment = cell.treatment;
                reports[i].n_classes = cell.length;
                reports[i].seed = cell.seed;
                reports[i].beta = cell.beta;
                reports[i].iid = cfg.oracle;
                reports[i].failed = true;
                reports[i].error = e.what();
            }
        }
    };
    const int64_t n_workers = std::max<int64_t>(1, cfg.workers);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int64_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (on_cell)
        for (const auto& r : reports) on_cell(r);
    return reports;
}

// Aggregate CSV row: treatment,n_classes,seed,beta,iid,epochs,train_acc,test_acc,runtime_s
inline std::string eval_report_csv_header() {
    return "treatment,n_classes,seed,beta,iid,epochs,train_acc,test_acc,runtime_s";
}

inline std::string eval_report_csv_row(const EvalReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%lld,%llu,%.9g,%d,%lld,%.9g,%.9g,%.3f",
                  r.treatment.c_str(), static_cast<long long>(r.n_classes),
                  static_cast<unsigned long long>(r.seed), r.beta, r.iid ? 1 : 0,
                  static_cast<long long>(r.epochs), r.train_acc, r.test_acc, r.runtime_s);
    return buf;
}

}  // namespace anml
