#include <gtest/gtest.h>

#include "anml/metatest.hpp"

using namespace anml;

namespace {

struct Fixture {
    ClassInstanceStore train_store = make_synthetic_store(12, 20, 14, 40);
    ClassInstanceStore test_store = make_synthetic_store(12, 20, 14, 41, Phase::meta_test, 15);
};

AnyModel<float> quick_meta_trained(const ClassInstanceStore& train_store, uint64_t seed,
                                   int64_t iterations = 30) {
    AnyModel<float> model = init_anml_model<float>(make_profile("desk"), seed, "ANML");
    MetaTrainConfig cfg;
    cfg.inner_steps = 5;
    cfg.remember_size = 16;
    cfg.seed = seed;
    auto opt = AdamState<float>::for_params(merged_meta_view(model));
    for (int64_t i = 1; i <= iterations; ++i) meta_step(model, train_store, cfg, opt, i);
    return model;
}

}  // namespace

TEST(MetaTest, DryRunProtocolArithmetic) {
    auto store = make_synthetic_store(600, 20, 14, 3, Phase::meta_test, 15);
    AnyModel<float> model = init_anml_model<float>(make_profile("full"), 1, "ANML");
    // Desk-profile models cannot take 600 classes in a 64-wide head; the full
    // profile has 1000 outputs. Dry runs never execute forwards, so image
    // size differences do not matter.
    MetaTestOptions opts;
    opts.dry_run = true;
    auto report = run_metatest(model, store, 600, 0.001f, "ANML", 7, opts);
    EXPECT_EQ(report.total_steps, 9000);
    EXPECT_EQ(report.first_class_update_gap, 8985);
    EXPECT_EQ(report.class_order.size(), 600u);
}

TEST(MetaTest, ZeroBetaKeepsUntunedAccuracy) {
    Fixture fx;
    AnyModel<float> model = init_anml_model<float>(make_profile("desk"), 5, "ANML");
    MetaTestOptions opts;
    auto tuned = run_metatest(model, fx.test_store, 4, 0.0f, "ANML", 9, opts);

    // Oracle: evaluate the untuned model with the same head mapping.
    auto traj = make_metatest_trajectory(fx.test_store, 4, 9);
    std::map<int64_t, int64_t> head;
    for (int64_t c : traj.class_order) head.emplace(c, static_cast<int64_t>(head.size()));
    NoGradGuard ng;
    int64_t correct = 0, total = 0;
    for (int64_t c : traj.class_order)
        for (int64_t i = 0; i < fx.test_store.n_train_instances(c); ++i) {
            Example e{fx.test_store.train_instance(c, i), c, i};
            auto out = model_forward(model, batch_tensor<float>({e}));
            correct += argmax_rows(out.logits)[0] == head.at(c);
            ++total;
        }
    EXPECT_DOUBLE_EQ(tuned.train_acc, static_cast<double>(correct) / total);
}

TEST(MetaTest, FrozenSubsetsAuditedPerTreatment) {
    Fixture fx;
    for (const std::string treatment : {"ANML", "ANML-FT:PLN", "ANML-FT:PLN+NM_out",
                                        "ANML-Unlimited"}) {
        AnyModel<float> model = init_anml_model<float>(make_profile("desk"), 6, treatment);
        auto report = run_metatest(model, fx.test_store, 3, 0.01f, treatment, 11);
        EXPECT_FALSE(report.failed) << treatment;
        EXPECT_EQ(report.per_class_test_acc.size(), 3u) << treatment;
    }
    for (const std::string treatment :
         {"OML", "OML-OLFT", "OML-FT:PLN+RLN_final", "OML-Unlimited", "Scratch", "Pretrain"}) {
        AnyModel<float> model = init_oml_model<float>(make_profile("desk"), 6, treatment);
        auto report = run_metatest(model, fx.test_store, 3, 0.01f, treatment, 11);
        EXPECT_FALSE(report.failed) << treatment;
    }
}

TEST(MetaTest, OnlyPlasticParametersChange) {
    Fixture fx;
    AnyModel<float> model = init_anml_model<float>(make_profile("desk"), 7, "ANML");
    auto before_head = prediction_params(model).get("pln.head.weight").values();
    auto before_conv = prediction_params(model).get("pln.conv1.weight").values();
    auto before_nm = auxiliary_params(model).get("nm.fc.weight").values();

    auto report = run_metatest(model, fx.test_store, 3, 0.05f, "ANML", 13);
    ASSERT_FALSE(report.failed);
    // The audited run returned; the source model itself must be untouched
    // (fine-tuning happens on a deep copy).
    EXPECT_EQ(prediction_params(model).get("pln.head.weight").values(), before_head);
    EXPECT_EQ(prediction_params(model).get("pln.conv1.weight").values(), before_conv);
    EXPECT_EQ(auxiliary_params(model).get("nm.fc.weight").values(), before_nm);
}

TEST(MetaTest, SequentialMultiEpochRejected) {
    Fixture fx;
    AnyModel<float> model = init_anml_model<float>(make_profile("desk"), 8, "ANML");
    MetaTestOptions opts;
    opts.iid = false;
    opts.epochs = 3;
    EXPECT_THROW(run_metatest(model, fx.test_store, 2, 0.01f, "ANML", 1, opts), ConfigError);
}

TEST(MetaTest, TrainAccAtLeastTestAccAfterFineTuning) {
    Fixture fx;
    AnyModel<float> model = quick_meta_trained(fx.train_store, 21);
    std::vector<double> train, test;
    for (uint64_t seed : {31ull, 32ull, 33ull}) {
        auto r = run_metatest(model, fx.test_store, 5, 0.01f, "ANML", seed);
        ASSERT_FALSE(r.failed);
        train.push_back(r.train_acc);
        test.push_back(r.test_acc);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    EXPECT_GE(train[1], test[1]);  // median comparison
}

TEST(GridSearch, SingleCandidateAndTieRule) {
    Fixture fx;
    AnyModel<float> model = init_anml_model<float>(make_profile("desk"), 9, "ANML");
    auto only = grid_search_beta<float>(model, fx.test_store, 2, {0.05f}, {5}, "ANML");
    EXPECT_FLOAT_EQ(only, 0.05f);
}

TEST(GridSearch, ZeroBetaCannotWinAgainstLearning) {
    Fixture fx;
    AnyModel<float> model = quick_meta_trained(fx.train_store, 22);
    auto best = grid_search_beta<float>(model, fx.test_store, 3, {0.0f, 0.01f}, {6, 7}, "ANML");
    EXPECT_FLOAT_EQ(best, 0.01f);
}

TEST(GridSearch, TieBreaksTowardSmallerBeta) {
    // With a single class every positive beta reaches the same accuracy; the
    // smaller candidate must win.
    Fixture fx;
    AnyModel<float> model = quick_meta_trained(fx.train_store, 23);
    auto best = grid_search_beta<float>(model, fx.test_store, 1, {0.01f, 0.1f}, {8}, "ANML");
    EXPECT_FLOAT_EQ(best, 0.01f);
}

TEST(Matrix, CardinalityAndOracleFlag) {
    Fixture fx;
    AnyModel<float> model = init_anml_model<float>(make_profile("desk"), 10, "ANML");
    MatrixConfig cfg;
    cfg.treatments = {"ANML"};
    cfg.lengths = {2};
    cfg.seeds = {1, 2, 3};
    cfg.betas = {0.01};
    auto provider = [&](const std::string&, uint64_t) { return model; };

    auto seq = run_matrix(cfg, fx.test_store, provider);
    ASSERT_EQ(seq.size(), 3u);
    for (const auto& r : seq) {
        EXPECT_FALSE(r.iid);
        EXPECT_FALSE(r.failed);
        EXPECT_EQ(r.n_classes, 2);
    }

    cfg.oracle = true;
    auto oracle = run_matrix(cfg, fx.test_store, provider);
    for (const auto& r : oracle) {
        EXPECT_TRUE(r.iid);
        EXPECT_EQ(r.total_steps, 2 * 15);  // each image exactly once per epoch
    }

    // Same cell, same seed: the sequential and oracle runs consume the same
    // image multiset (up to order), hence identical class orders.
    EXPECT_EQ(seq[0].class_order, oracle[0].class_order);
}

TEST(Matrix, CellsFailIndependently) {
    Fixture fx;
    MatrixConfig cfg;
    cfg.treatments = {"ANML", "OML"};
    cfg.lengths = {2};
    cfg.seeds = {4};
    cfg.betas = {0.01};
    auto provider = [&](const std::string& treatment, uint64_t) -> AnyModel<float> {
        if (treatment == "OML") throw DataError("no OML checkpoint in this fixture");
        return init_anml_model<float>(make_profile("desk"), 11, treatment);
    };
    auto reports = run_matrix(cfg, fx.test_store, provider);
    ASSERT_EQ(reports.size(), 2u);
    EXPECT_FALSE(reports[0].failed);
    EXPECT_TRUE(reports[1].failed);
    EXPECT_NE(reports[1].error.find("no OML checkpoint"), std::string::npos);
}

TEST(Matrix, CsvRowFormat) {
    EvalReport r;
    r.treatment = "ANML";
    r.n_classes = 10;
    r.seed = 3;
    r.beta = 0.01;
    r.iid = true;
    r.epochs = 1;
    r.train_acc = 0.5;
    r.test_acc = 0.25;
    r.runtime_s = 1.5;
    EXPECT_EQ(eval_report_csv_header(),
              "treatment,n_classes,seed,beta,iid,epochs,train_acc,test_acc,runtime_s");
    EXPECT_EQ(eval_report_csv_row(r), "ANML,10,3,0.01,1,1,0.5,0.25,1.500");
}
