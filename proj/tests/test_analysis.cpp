#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "anml/analysis.hpp"
#include "support/oracles.hpp"

using namespace anml;

namespace {

ActivationDump fixture_dump() {
    ActivationDump dump;
    dump.phase = "pre_finetune";
    dump.latent_size = 4;
    dump.has_gate = true;
    ActivationRecord a;
    a.class_id = 0;
    a.instance_id = 0;
    a.pre_gate = {1.0f, 0.0f, 0.02f, 0.0f};
    a.gate = {0.5f, 0.5f, 0.5f, 0.5f};
    a.post_gate = {0.5f, 0.0f, 0.01f, 0.0f};
    ActivationRecord b;
    b.class_id = 1;
    b.instance_id = 0;
    b.pre_gate = {0.0f, 1.0f, 0.0f, 0.0f};
    b.gate = {0.5f, 0.5f, 0.5f, 0.5f};
    b.post_gate = {0.0f, 0.5f, 0.0f, 0.0f};
    dump.records = {a, b};
    return dump;
}

using testsupport::knn_brute_force;

}  // namespace

TEST(Sparsity, AllZeroVectors) {
    ActivationDump dump;
    dump.latent_size = 3;
    dump.has_gate = false;
    ActivationRecord r;
    r.pre_gate = {0.0f, 0.0f, 0.0f};
    dump.records = {r, r};
    auto stats = sparsity_stats(dump, 0.01);
    EXPECT_DOUBLE_EQ(stats.pre_gate.mean_active_fraction, 0.0);
    EXPECT_EQ(stats.pre_gate.dead_neuron_count, 3);
}

TEST(Sparsity, HandComputedFixture) {
    // Vectors (1,0,0.02,0) and (0,1,0,0) at threshold 0.01: active fractions
    // 2/4 and 1/4 (mean 37.5%), and exactly index 3 is dead.
    auto dump = fixture_dump();
    auto stats = sparsity_stats(dump, 0.01);
    EXPECT_DOUBLE_EQ(stats.pre_gate.mean_active_fraction, 0.375);
    EXPECT_EQ(stats.pre_gate.dead_neuron_count, 1);
    // Gate vectors are all 0.5: fully active, no dead units.
    EXPECT_DOUBLE_EQ(stats.gate.mean_active_fraction, 1.0);
    EXPECT_EQ(stats.gate.dead_neuron_count, 0);
}

TEST(Sparsity, InvariantToRecordOrder) {
    auto dump = fixture_dump();
    auto reversed = dump;
    std::reverse(reversed.records.begin(), reversed.records.end());
    auto a = sparsity_stats(dump, 0.01);
    auto b = sparsity_stats(reversed, 0.01);
    EXPECT_DOUBLE_EQ(a.pre_gate.mean_active_fraction, b.pre_gate.mean_active_fraction);
    EXPECT_EQ(a.pre_gate.dead_neuron_count, b.pre_gate.dead_neuron_count);
}

TEST(Sparsity, EmptyDumpAndBadThresholdRejected) {
    ActivationDump empty;
    EXPECT_THROW(sparsity_stats(empty, 0.01), DataError);
    EXPECT_THROW(sparsity_stats(fixture_dump(), 0.0), ConfigError);
}

TEST(Knn, ExactTrainingPointWithKOne) {
    std::vector<LabeledPoint> train = {{{0.0f, 0.0f}, 7}, {{5.0f, 5.0f}, 9}};
    EXPECT_EQ(knn_classify_one(train, {5.0f, 5.0f}, 1), 9);
}

TEST(Knn, TwoDimensionalFixture) {
    std::vector<LabeledPoint> train = {
        {{0.0f, 0.0f}, 0}, {{0.0f, 1.0f}, 0}, {{5.0f, 5.0f}, 1}, {{5.0f, 6.0f}, 1}, {{5.0f, 4.0f}, 1}};
    EXPECT_EQ(knn_classify_one(train, {4.0f, 5.0f}, 3), 1);
}

TEST(Knn, ErrorsOnEmptyOrOversizedK) {
    std::vector<LabeledPoint> train = {{{0.0f}, 0}};
    EXPECT_THROW(knn_classify_one({}, {0.0f}, 1), DataError);
    EXPECT_THROW(knn_classify_one(train, {0.0f}, 2), ConfigError);
}

TEST(Knn, MatchesBruteForceOracleOnRandomFixtures) {
    std::mt19937 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> n_points(5, 60);
        std::uniform_int_distribution<int> n_labels(2, 6);
        std::uniform_int_distribution<int> dims(2, 5);
        std::uniform_real_distribution<float> coord(-2.0f, 2.0f);
        const int n = n_points(rng), labels = n_labels(rng), d = dims(rng);
        std::uniform_int_distribution<int> label_pick(0, labels - 1);
        std::vector<LabeledPoint> train;
        for (int i = 0; i < n; ++i) {
            LabeledPoint p;
            p.label = label_pick(rng);
            for (int j = 0; j < d; ++j) p.values.push_back(coord(rng));
            train.push_back(p);
        }
        std::uniform_int_distribution<int> k_pick(1, std::min(7, n));
        const int64_t k = k_pick(rng);
        for (int q = 0; q < 5; ++q) {
            std::vector<float> query;
            for (int j = 0; j < d; ++j) query.push_back(coord(rng));
            EXPECT_EQ(knn_classify_one(train, query, k), knn_brute_force(train, query, k))
                << "trial " << trial;
        }
    }
}

TEST(Export, RowShapeAndRoundTrip) {
    auto dump = fixture_dump();
    auto path = std::filesystem::temp_directory_path() / "anml_activations_test.csv";
    export_activations(dump, path);

    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, "class,instance,kind,v0,v1,v2,v3");

    int rows = 0;
    std::string line;
    std::vector<std::vector<float>> parsed;
    std::vector<std::string> kinds;
    while (std::getline(f, line)) {
        ++rows;
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');  // class
        std::getline(ss, tok, ',');  // instance
        std::getline(ss, tok, ',');  // kind
        kinds.push_back(tok);
        std::vector<float> vals;
        while (std::getline(ss, tok, ',')) vals.push_back(std::stof(tok));
        parsed.push_back(vals);
    }
    EXPECT_EQ(rows, 3 * 2);  // pre/gate/post per record
    EXPECT_EQ(kinds[0], "pre");
    EXPECT_EQ(kinds[1], "gate");
    EXPECT_EQ(kinds[2], "post");
    for (size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(parsed[0][j], dump.records[0].pre_gate[j]);
        EXPECT_EQ(parsed[1][j], dump.records[0].gate[j]);
        EXPECT_EQ(parsed[2][j], dump.records[0].post_gate[j]);
    }
    std::filesystem::remove(path);
}

TEST(Capture, PostGateBoundedByPreGate) {
    auto model = init_anml_model<float>(make_profile("desk"), 13, "ANML");
    AnyModel<float> any = model;
    auto store = make_synthetic_store(4, 8, 14, 14, Phase::meta_test, 5);
    std::vector<Example> items;
    for (int64_t c = 0; c < store.n_classes(); ++c)
        for (int64_t i = 0; i < store.n_test_instances(c); ++i)
            items.push_back({store.test_instance(c, i), c, i});
    auto dump = capture_activations(any, items, "pre_finetune");
    ASSERT_EQ(dump.records.size(), items.size());
    EXPECT_EQ(dump.latent_size, 144);
    EXPECT_TRUE(dump.has_gate);
    for (const auto& r : dump.records)
        for (size_t j = 0; j < r.pre_gate.size(); ++j) {
            EXPECT_GE(r.pre_gate[j], 0.0f);  // rectified
            EXPECT_LE(r.post_gate[j], r.pre_gate[j]);
            EXPECT_GT(r.gate[j], 0.0f);
            EXPECT_LT(r.gate[j], 1.0f);
        }
}
