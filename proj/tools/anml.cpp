#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "anml/analysis.hpp"
#include "anml/config.hpp"
#include "anml/fetch.hpp"
#include "anml/metatest.hpp"
#include "anml/metatrain.hpp"
#include "anml/model_io.hpp"
#include "anml/omniglot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace anml;

namespace {

struct Stores {
    std::optional<ClassInstanceStore> meta_train;
    std::optional<ClassInstanceStore> meta_test;
};

int64_t effective_image_size(const RunConfig& cfg, const ArchProfile& profile) {
    const int64_t override_size = cfg.get_int("image_size");
    return override_size > 0 ? override_size : profile.input_hw;
}

Stores build_stores(const RunConfig& cfg, const ArchProfile& profile, bool need_train,
                    bool need_test) {
    Stores stores;
    const std::string dataset = cfg.get("dataset");
    const int64_t image_size = effective_image_size(cfg, profile);
    if (image_size != profile.input_hw)
        throw ConfigError("image_size " + std::to_string(image_size) +
                          " does not match profile input " + std::to_string(profile.input_hw));
    const uint64_t seed = cfg.get_uint("seed");
    if (dataset == "synthetic") {
        if (need_train)
            stores.meta_train = make_synthetic_store(cfg.get_int("synthetic_classes"),
                                                     cfg.get_int("synthetic_instances"),
                                                     image_size, mix_seed(seed, 0x11));
        if (need_test)
            stores.meta_test = make_synthetic_store(cfg.get_int("synthetic_test_classes"),
                                                    cfg.get_int("synthetic_instances"), image_size,
                                                    mix_seed(seed, 0x22), Phase::meta_test,
                                                    cfg.get_int("omniglot_test_train_per_class"));
    } else if (dataset == "omniglot") {
        OmniglotOptions opts;
        opts.image_size = image_size;
        opts.expected_classes = cfg.get_int("omniglot_expected_classes");
        opts.n_meta_train = cfg.get_int("omniglot_split_train");
        opts.n_meta_test = cfg.get_int("omniglot_split_test");
        opts.instances_per_class = cfg.get_int("omniglot_instances");
        opts.test_train_per_class = cfg.get_int("omniglot_test_train_per_class");
        OmniglotSplit split = load_omniglot(resolve_data_root(cfg), seed, opts);
        std::fprintf(stdout, "omniglot: %lld meta-train / %lld meta-test classes\n",
                     static_cast<long long>(split.meta_train.n_classes()),
                     static_cast<long long>(split.meta_test.n_classes()));
        if (need_train) stores.meta_train = std::move(split.meta_train);
        if (need_test) stores.meta_test = std::move(split.meta_test);
    } else {
        throw ConfigError("unknown dataset '" + dataset + "' (expected synthetic|omniglot)");
    }
    return stores;
}

fs::path make_run_dir(const RunConfig& cfg, const std::string& command) {
    fs::path dir;
    if (!cfg.get("out_dir").empty()) {
        dir = cfg.get("out_dir");
    } else {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::tm tm_utc{};
        gmtime_r(&now, &tm_utc);
        std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_utc);
        dir = fs::path("runs") / (std::string(stamp) + "-" + command + "-" + cfg.get("treatment"));
    }
    fs::create_directories(dir);
    fs::create_directories(dir / "ckpt");
    fs::create_directories(dir / "reports");
    cfg.save_snapshot(dir / "config.snapshot");
    return dir;
}

MetaTrainConfig metatrain_config(const RunConfig& cfg) {
    MetaTrainConfig mt;
    mt.inner_steps = cfg.get_int("inner_steps");
    mt.remember_size = cfg.get_int("remember_size");
    mt.outer_iterations = cfg.get_int("iterations");
    mt.alpha = cfg.get_real("alpha");
    mt.beta = cfg.get_real("beta");
    mt.seed = cfg.get_uint("seed");
    mt.profile = cfg.get("profile");
    mt.treatment = cfg.get("treatment");
    mt.checkpoint_every = cfg.get_int("checkpoint_every");
    mt.grad_clip = cfg.get_real("grad_clip");
    mt.audit = cfg.get_bool("audit");
    return mt;
}

CheckpointMeta checkpoint_meta(const RunConfig& cfg, int64_t iteration) {
    CheckpointMeta meta;
    meta.set("iteration", std::to_string(iteration));
    meta.set("treatment", cfg.get("treatment"));
    meta.set("seed", cfg.get("seed"));
    meta.set("dataset", cfg.get("dataset"));
    return meta;
}

void append_metrics_row(std::ofstream& csv, int64_t iter, const MetaStepMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(iter), m.meta_loss, m.traj_loss, m.rem_loss,
                  m.grad_norm_aux, m.grad_norm_pln);
    csv << buf;
}

int cmd_fetch_data(const RunConfig& cfg, bool offline) {
    FetchOptions opts;
    opts.base_url = cfg.get("fetch_url");
    opts.offline = offline;
    opts.expected_classes = cfg.get_int("omniglot_expected_classes");
    FetchReport report = fetch_omniglot(resolve_data_root(cfg), opts);
    if (report.already_present)
        std::fprintf(stdout, "omniglot already present (%lld classes), no downloads\n",
                     static_cast<long long>(report.classes_found));
    else
        std::fprintf(stdout, "fetched %zu files, %lld classes\n", report.files_extracted,
                     static_cast<long long>(report.classes_found));
    return 0;
}

int cmd_meta_train(const RunConfig& cfg, const std::string& resume) {
    const std::string treatment = cfg.get("treatment");
    TreatmentProfile tp = treatment_profile(treatment);
    if (!tp.meta_trained && !tp.pretrained)
        throw ConfigError("treatment '" + treatment +
                          "' involves no training; use it directly at meta-test");

    const ArchProfile profile = make_profile(cfg.get("profile"));
    Stores stores = build_stores(cfg, profile, /*need_train=*/true, /*need_test=*/false);
    const fs::path run_dir = make_run_dir(cfg, "meta-train");
    MetaTrainConfig mt = metatrain_config(cfg);

    AnyModel<float> model{};
    int64_t start_iteration = 0;
    std::optional<AdamState<float>> opt_state;
    if (!resume.empty()) {
        LoadedCheckpoint loaded = load_model_checkpoint(resume);
        if (loaded.meta.get("treatment") != treatment)
            throw CheckpointError("checkpoint treatment '" + loaded.meta.get("treatment") +
                                  "' does not match configured '" + treatment + "'");
        if (loaded.meta.get("profile") != cfg.get("profile"))
            throw CheckpointError("checkpoint profile '" + loaded.meta.get("profile") +
                                  "' does not match configured '" + cfg.get("profile") + "'");
        model = std::move(loaded.model);
        if (loaded.opt_state) opt_state = std::move(*loaded.opt_state);
        start_iteration = std::stoll(loaded.meta.get("iteration", "0"));
        std::fprintf(stdout, "resuming at iteration %lld\n",
                     static_cast<long long>(start_iteration));
    } else {
        model = init_model<float>(treatment, profile, mt.seed);
    }
    if (!opt_state) opt_state = AdamState<float>::for_params(merged_meta_view(model));

    std::ofstream csv(run_dir / "metrics.csv", start_iteration > 0 ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (run_dir / "metrics.csv").string());
    if (start_iteration == 0) csv << "iter,meta_loss,traj_loss,rem_loss,grad_norm_nm,grad_norm_pln\n";

    if (tp.pretrained) {
        const int64_t budget = cfg.get_int("pretrain_budget");
        const int64_t seen = pretrain_iid(model, *stores.meta_train, budget, mt,
                                          [&](int64_t step, double loss) {
                                              MetaStepMetrics m;
                                              m.meta_loss = loss;
                                              m.traj_loss = loss;
                                              append_metrics_row(csv, step, m);
                                          });
        std::fprintf(stdout, "pretrained on %lld image evaluations\n",
                     static_cast<long long>(seen));
        save_model_checkpoint(run_dir / "ckpt" / "final", model, nullptr,
                              checkpoint_meta(cfg, seen));
        return 0;
    }

    for (int64_t iter = start_iteration + 1; iter <= mt.outer_iterations; ++iter) {
        MetaStepMetrics metrics = meta_step(model, *stores.meta_train, mt, *opt_state, iter);
        append_metrics_row(csv, iter, metrics);
        if (mt.checkpoint_every > 0 && iter % mt.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof(name), "iter-%06lld", static_cast<long long>(iter));
            save_model_checkpoint(run_dir / "ckpt" / name, model, &*opt_state,
                                  checkpoint_meta(cfg, iter));
        }
        if (iter % 100 == 0 || iter == mt.outer_iterations)
            std::fprintf(stdout, "iter %lld meta_loss %.6f\n", static_cast<long long>(iter),
                         metrics.meta_loss);
    }
    csv.flush();
    save_model_checkpoint(run_dir / "ckpt" / "final", model, &*opt_state,
                          checkpoint_meta(cfg, mt.outer_iterations));
    std::fprintf(stdout, "final checkpoint: %s\n",
                 (run_dir / "ckpt" / "final").string().c_str());
    return 0;
}

json report_to_json(const EvalReport& r, const std::string& snapshot) {
    json j;
    j["treatment"] = r.treatment;
    j["n_classes"] = r.n_classes;
    j["seed"] = r.seed;
    j["beta"] = r.beta;
    j["iid"] = r.iid;
    j["epochs"] = r.epochs;
    j["dry_run"] = r.dry_run;
    j["train_acc"] = r.train_acc;
    j["test_acc"] = r.test_acc;
    j["per_class_train_acc"] = r.per_class_train_acc;
    j["per_class_test_acc"] = r.per_class_test_acc;
    j["class_order"] = r.class_order;
    j["total_steps"] = r.total_steps;
    j["first_class_update_gap"] = r.first_class_update_gap;
    j["runtime_s"] = r.runtime_s;
    j["failed"] = r.failed;
    j["failed_step"] = r.failed_step;
    j["error"] = r.error;
    j["config_snapshot"] = snapshot;
    return j;
}

void write_cell_report(const fs::path& reports_dir, const EvalReport& r,
                       const std::string& snapshot) {
    std::string name = "cell-" + r.treatment + "-n" + std::to_string(r.n_classes) + "-s" +
                       std::to_string(r.seed) + (r.iid ? "-iid" : "-seq") + ".json";
    for (auto& ch : name)
        if (ch == ':' || ch == '+' || ch == '/') ch = '_';
    const fs::path tmp = reports_dir / (name + ".tmp");
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f << report_to_json(r, snapshot).dump(2) << "\n";
    }
    fs::rename(tmp, reports_dir / name);  // atomic per cell
}

int cmd_meta_test(const RunConfig& cfg, const std::string& checkpoint, bool dry_run) {
    const ArchProfile profile = make_profile(cfg.get("profile"));
    std::vector<std::string> treatments = cfg.get_string_list("metatest_treatments");
    if (treatments.empty()) treatments = {cfg.get("treatment")};
    for (const auto& t : treatments) treatment_profile(t);  // validate names early

    bool needs_checkpoint = false;
    for (const auto& t : treatments)
        if (t != "Scratch") needs_checkpoint = true;
    std::optional<LoadedCheckpoint> loaded;
    if (needs_checkpoint) {
        if (checkpoint.empty())
            throw ConfigError("--checkpoint is required unless every treatment is Scratch");
        loaded = load_model_checkpoint(checkpoint);
        if (model_profile(loaded->model).name != cfg.get("profile"))
            throw CheckpointError("checkpoint profile '" + model_profile(loaded->model).name +
                                  "' does not match configured '" + cfg.get("profile") + "'");
        for (const auto& t : treatments) {
            if (t == "Scratch") continue;
            AnyModel<float> probe = deep_copy_model(loaded->model);
            apply_treatment_to_model(probe, t);  // throws on arch mismatch
        }
    }

    Stores stores = build_stores(cfg, profile, /*need_train=*/false, /*need_test=*/true);
    const fs::path run_dir = make_run_dir(cfg, "meta-test");
    const std::string snapshot = cfg.snapshot();
    const uint64_t seed = cfg.get_uint("seed");

    ModelProvider provider = [&](const std::string& treatment, uint64_t cell_seed) {
        if (treatment == "Scratch")
            return init_model<float>("Scratch", profile, mix_seed(seed, 0x5c4a7c11ull, cell_seed));
        AnyModel<float> model = deep_copy_model(loaded->model);
        apply_treatment_to_model(model, treatment);
        return model;
    };

    MatrixConfig mc;
    mc.treatments = treatments;
    mc.lengths = cfg.get_int_list("metatest_lengths");
    mc.seeds = cfg.get_uint_list("metatest_seeds");
    mc.betas = cfg.get_real_list("metatest_betas");
    mc.search_seeds = cfg.get_uint_list("metatest_search_seeds");
    mc.epochs = cfg.get_int("metatest_epochs");
    mc.workers = cfg.get_int("metatest_workers");
    mc.audit = cfg.get_bool("audit");
    const std::string oracle_mode = cfg.get("metatest_oracle");
    if (oracle_mode != "none" && oracle_mode != "also" && oracle_mode != "only")
        throw ConfigError("metatest_oracle must be none|also|only, got '" + oracle_mode + "'");

    std::ofstream agg(run_dir / "reports" / "aggregate.csv", std::ios::trunc);
    if (!agg) throw IoError("cannot write aggregate.csv");
    agg << eval_report_csv_header() << "\n";

    std::vector<EvalReport> all;
    if (dry_run) {
        for (const auto& treatment : treatments)
            for (int64_t length : mc.lengths) {
                AnyModel<float> model = provider(treatment, mc.seeds.front());
                MetaTestOptions opts;
                opts.dry_run = true;
                EvalReport r = run_metatest(model, *stores.meta_test, length, 0.0f, treatment,
                                            mc.seeds.front(), opts);
                std::fprintf(stdout,
                             "dry-run %s n=%lld: trajectory_length=%lld "
                             "first_class_update_gap=%lld remember_size=%lld\n",
                             treatment.c_str(), static_cast<long long>(length),
                             static_cast<long long>(r.total_steps),
                             static_cast<long long>(r.first_class_update_gap),
                             static_cast<long long>(cfg.get_int("remember_size")));
                all.push_back(r);
            }
    } else {
        auto run_pass = [&](bool oracle) {
            MatrixConfig pass = mc;
            pass.oracle = oracle;
            auto reports = run_matrix(pass, *stores.meta_test, provider,
                                      [&](const EvalReport& r) {
                                          write_cell_report(run_dir / "reports", r, snapshot);
                                      });
            all.insert(all.end(), reports.begin(), reports.end());
        };
        if (oracle_mode != "only") run_pass(false);
        if (oracle_mode != "none") run_pass(true);
    }

    for (const auto& r : all) agg << eval_report_csv_row(r) << "\n";
    agg.flush();
    for (const auto& r : all)
        if (!r.dry_run)
            std::fprintf(stdout, "%s n=%lld seed=%llu %s train_acc=%.4f test_acc=%.4f%s\n",
                         r.treatment.c_str(), static_cast<long long>(r.n_classes),
                         static_cast<unsigned long long>(r.seed), r.iid ? "iid" : "seq",
                         r.train_acc, r.test_acc, r.failed ? " FAILED" : "");

    // With both passes present, report the sequential-vs-oracle drop per
    // treatment and length: 1 - sequential/oracle test accuracy.
    if (oracle_mode == "also" && !dry_run) {
        std::ofstream summary(run_dir / "reports" / "relative_drop.txt", std::ios::trunc);
        for (const auto& treatment : treatments)
            for (int64_t length : mc.lengths) {
                std::vector<double> seq, iid;
                for (const auto& r : all) {
                    if (r.treatment != treatment || r.n_classes != length || r.failed) continue;
                    (r.iid ? iid : seq).push_back(r.test_acc);
                }
                if (seq.empty() || iid.empty()) continue;
                auto med = [](std::vector<double> v) {
                    std::sort(v.begin(), v.end());
                    return v[v.size() / 2];
                };
                const double oracle_acc = med(iid);
                const double drop = oracle_acc > 0 ? 1.0 - med(seq) / oracle_acc : 0.0;
                char line[160];
                std::snprintf(line, sizeof(line), "%s n=%lld relative_drop = %.4f\n",
                              treatment.c_str(), static_cast<long long>(length), drop);
                summary << line;
                std::fputs(line, stdout);
            }
    }
    std::fprintf(stdout, "reports: %s\n", (run_dir / "reports").string().c_str());
    return 0;
}

int cmd_analyze(const RunConfig& cfg, const std::string& checkpoint) {
    if (checkpoint.empty()) throw ConfigError("--checkpoint is required for analyze");
    LoadedCheckpoint loaded = load_model_checkpoint(checkpoint);
    if (model_profile(loaded.model).name != cfg.get("profile"))
        throw CheckpointError("checkpoint profile '" + model_profile(loaded.model).name +
                              "' does not match configured '" + cfg.get("profile") + "'");
    const ArchProfile profile = make_profile(cfg.get("profile"));
    Stores stores = build_stores(cfg, profile, false, true);
    const ClassInstanceStore& store = *stores.meta_test;
    const fs::path run_dir = make_run_dir(cfg, "analyze");

    std::vector<Example> train_items, test_items;
    for (int64_t c = 0; c < store.n_classes(); ++c) {
        for (int64_t i = 0; i < store.n_train_instances(c); ++i)
            train_items.push_back({store.train_instance(c, i), c, i});
        for (int64_t i = 0; i < store.n_test_instances(c); ++i)
            test_items.push_back({store.test_instance(c, i), c, i});
    }

    // Pre-fine-tuning captures of the checkpointed model.
    ActivationDump train_dump = capture_activations(loaded.model, train_items, "pre_finetune");
    ActivationDump test_dump = capture_activations(loaded.model, test_items, "pre_finetune");
    export_activations(test_dump, run_dir / "reports" / "activations_test.csv");
    export_activations(train_dump, run_dir / "reports" / "activations_train.csv");

    const double threshold = cfg.get_real("sparsity_threshold");
    SparsityReport sparsity = sparsity_stats(test_dump, threshold);
    const int64_t k = cfg.get_int("knn_k");

    std::ofstream stats(run_dir / "reports" / "stats.txt", std::ios::trunc);
    if (!stats) throw IoError("cannot write stats.txt");
    char line[160];
    auto emit = [&](const char* key, double value) {
        std::snprintf(line, sizeof(line), "%s = %.9g\n", key, value);
        stats << line;
        std::fputs(line, stdout);
    };
    emit("sparsity.threshold", threshold);
    emit("sparsity.pre.active_fraction", sparsity.pre_gate.mean_active_fraction);
    emit("sparsity.pre.dead_neurons", static_cast<double>(sparsity.pre_gate.dead_neuron_count));
    if (sparsity.has_gate) {
        emit("sparsity.gate.active_fraction", sparsity.gate.mean_active_fraction);
        emit("sparsity.gate.dead_neurons", static_cast<double>(sparsity.gate.dead_neuron_count));
        emit("sparsity.post.active_fraction", sparsity.post_gate.mean_active_fraction);
        emit("sparsity.post.dead_neurons", static_cast<double>(sparsity.post_gate.dead_neuron_count));
    }
    emit("knn.k", static_cast<double>(k));
    emit("knn.pre_acc", knn_accuracy(train_dump, test_dump, ActivationKind::pre_gate, k));
    if (test_dump.has_gate) {
        emit("knn.gate_acc", knn_accuracy(train_dump, test_dump, ActivationKind::gate, k));
        emit("knn.post_acc", knn_accuracy(train_dump, test_dump, ActivationKind::post_gate, k));
        if (cfg.get_bool("analyze_random_nm")) {
            // Same NM architecture, fresh weights from a reserved seed stream.
            AnyModel<float> control = deep_copy_model(loaded.model);
            auto& anml = std::get<AnmlModel<float>>(control);
            AnmlModel<float> fresh = init_anml_model<float>(
                profile, mix_seed(cfg.get_uint("seed"), seed_stream::kRandomNm), "ANML");
            anml.nm_params = fresh.nm_params;
            ActivationDump rnd_train = capture_activations(control, train_items, "pre_finetune");
            ActivationDump rnd_test = capture_activations(control, test_items, "pre_finetune");
            emit("knn.random_nm_gate_acc",
                 knn_accuracy(rnd_train, rnd_test, ActivationKind::gate, k));
        }
    }
    std::fprintf(stdout, "reports: %s\n", (run_dir / "reports").string().c_str());
    return 0;
}

int exit_code_for(const Error& e) {
    if (e.code() == "E_USAGE") return 2;
    if (e.code() == "E_CONFIG") return 3;
    if (e.code() == "E_DATA") return 4;
    if (e.code() == "E_IO") return 5;
    if (e.code() == "E_NUMERIC" || e.code() == "E_SHAPE") return 6;
    if (e.code() == "E_CHECKPOINT") return 7;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ANML: neuromodulated meta-learning for continual learning"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir, profile, treatment, data_root, seed_str;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "config file (key = value lines)");
    app.add_option("--set", sets, "override a config key, e.g. --set alpha=0.001")
        ->take_all();
    app.add_option("--seed", seed_str, "master seed");
    app.add_option("--out", out_dir, "run directory (default runs/<timestamp>-<tag>)");
    app.add_option("--profile", profile, "architecture profile: desk|full");
    app.add_option("--treatment", treatment, "treatment name, e.g. ANML, OML, Scratch");
    app.add_option("--data-root", data_root, "dataset root (or env ANML_DATA_ROOT)");

    auto* fetch = app.add_subcommand("fetch-data", "download and verify Omniglot");
    bool offline = false;
    fetch->add_flag("--offline", offline, "validate an existing tree, do not download");

    auto* train = app.add_subcommand("meta-train", "run meta-training (Algorithm 1)");
    std::string resume;
    train->add_option("--resume", resume, "checkpoint directory to resume from");

    auto* test = app.add_subcommand("meta-test", "run the meta-test matrix (Algorithm 2)");
    std::string checkpoint;
    bool dry_run = false;
    test->add_option("--checkpoint", checkpoint, "checkpoint directory to evaluate");
    test->add_flag("--dry-run", dry_run, "report protocol arithmetic without training");

    auto* analyze = app.add_subcommand("analyze", "activation sparsity and KNN analyses");
    std::string analyze_checkpoint;
    analyze->add_option("--checkpoint", analyze_checkpoint, "checkpoint directory to analyze");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        std::cerr << "error: E_USAGE: " << e.what() << "\n";
        return 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw UsageError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (!seed_str.empty()) cfg.set("seed", seed_str);
        if (!out_dir.empty()) cfg.set("out_dir", out_dir);
        if (!profile.empty()) cfg.set("profile", profile);
        if (!treatment.empty()) cfg.set("treatment", treatment);
        if (!data_root.empty()) cfg.set("data_root", data_root);

        if (*fetch) return cmd_fetch_data(cfg, offline);
        if (*train) return cmd_meta_train(cfg, resume);
        if (*test) return cmd_meta_test(cfg, checkpoint, dry_run);
        if (*analyze) return cmd_analyze(cfg, analyze_checkpoint);
        throw UsageError("no subcommand selected");
    } catch (const Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: E_INTERNAL: " << e.what() << "\n";
        return 1;
    }
}
