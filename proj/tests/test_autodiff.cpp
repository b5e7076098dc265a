#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "anml/gradcheck.hpp"
#include "anml/ops.hpp"
#include "anml/tensor.hpp"

using namespace anml;

TEST(Ops, ElementwiseMultiplyIdentityAndAnnihilator) {
    auto a = TensorF::from_values({2}, {1.0f, 1.0f});
    auto b = TensorF::from_values({2}, {0.5f, 0.0f});
    auto c = mul(a, b);
    EXPECT_EQ(c.values()[0], 0.5f);
    EXPECT_EQ(c.values()[1], 0.0f);
}

TEST(Ops, SigmoidSymmetryPoint) {
    auto x = TensorF::scalar(0.0f);
    EXPECT_FLOAT_EQ(sigmoid(x).item(), 0.5f);
}

TEST(Ops, ConvAllOnesSummation) {
    // 3x3 all-ones input, 3x3 all-ones kernel, stride 1, no padding -> 9.
    auto x = TensorF::ones({1, 1, 3, 3});
    auto w = TensorF::ones({1, 1, 3, 3});
    auto y = conv2d(x, w, 1, 0);
    ASSERT_EQ(y.shape(), (std::vector<int64_t>{1, 1, 1, 1}));
    EXPECT_FLOAT_EQ(y.values()[0], 9.0f);
}

TEST(Ops, ConvAgainstDirectSummationOracle) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const int64_t N = 2, C = 3, H = 6, W = 5, O = 4, K = 3, stride = 2, pad = 1;
    std::vector<double> xv(N * C * H * W), wv(O * C * K * K);
    for (auto& v : xv) v = dist(rng);
    for (auto& v : wv) v = dist(rng);
    auto x = TensorD::from_values({N, C, H, W}, xv);
    auto w = TensorD::from_values({O, C, K, K}, wv);
    auto y = conv2d(x, w, stride, pad);

    const int64_t OH = y.shape()[2], OW = y.shape()[3];
    for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < O; ++o)
            for (int64_t oh = 0; oh < OH; ++oh)
                for (int64_t ow = 0; ow < OW; ++ow) {
                    double acc = 0;
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t i = 0; i < K; ++i)
                            for (int64_t j = 0; j < K; ++j) {
                                int64_t ih = oh * stride + i - pad;
                                int64_t iw = ow * stride + j - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += xv[((n * C + c) * H + ih) * W + iw] *
                                       wv[((o * C + c) * K + i) * K + j];
                            }
                    EXPECT_NEAR(y.values()[((n * O + o) * OH + oh) * OW + ow], acc, 1e-12);
                }
}

TEST(Ops, ShapeMismatchNamesOpAndShapes) {
    auto a = TensorF::ones({2, 3});
    auto b = TensorF::ones({3, 3});
    try {
        add(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("add"), std::string::npos);
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
        EXPECT_NE(msg.find("[3,3]"), std::string::npos);
    }
}

TEST(Backward, QuadraticGradient) {
    auto x = TensorF::scalar(3.0f, /*requires_grad=*/true);
    auto loss = mul(x, x);
    auto grads = backward(loss, {x});
    EXPECT_FLOAT_EQ(grads[0].item(), 6.0f);
}

TEST(Backward, SigmoidGradientAtZero) {
    auto w = TensorF::zeros({4}, /*requires_grad=*/true);
    auto loss = sum_all(sigmoid(w));
    auto grads = backward(loss, {w});
    for (float g : grads[0].values()) EXPECT_FLOAT_EQ(g, 0.25f);
}

TEST(Backward, DoubleBackwardCubic) {
    // g = d(x^3)/dx at x=2 is 12; d(g)/dx = 6x is also 12.
    auto x = TensorD::scalar(2.0, /*requires_grad=*/true);
    auto loss = mul(mul(x, x), x);
    auto grads = backward(loss, {x}, /*create_graph=*/true);
    EXPECT_NEAR(grads[0].item(), 12.0, 1e-12);
    auto grads2 = backward(grads[0], {x});
    EXPECT_NEAR(grads2[0].item(), 12.0, 1e-12);
}

TEST(Backward, NonScalarLossRejected) {
    auto x = TensorF::ones({3}, /*requires_grad=*/true);
    auto y = mul(x, x);
    EXPECT_THROW(backward(y, {x}), ShapeError);
}

TEST(Backward, UnreachableTensorIsErrorOrZeroByPolicy) {
    auto x = TensorF::scalar(1.0f, true);
    auto z = TensorF::scalar(2.0f, true);
    auto loss = mul(x, x);
    EXPECT_THROW(backward(loss, {z}), NumericError);
    auto grads = backward(loss, {z}, false, UnreachablePolicy::zero_with_warning);
    EXPECT_FLOAT_EQ(grads[0].item(), 0.0f);
}

TEST(Backward, GateZeroRoutesExactZeroGradient) {
    auto pre = TensorF::from_values({4}, {1.5f, -2.0f, 3.0f, 0.25f}, true);
    auto gate = TensorF::from_values({4}, {0.7f, 0.0f, 0.0f, 1.0f});
    auto loss = sum_all(mul(pre, gate));
    auto grads = backward(loss, {pre});
    EXPECT_EQ(grads[0].values()[1], 0.0f);
    EXPECT_EQ(grads[0].values()[2], 0.0f);
    EXPECT_FLOAT_EQ(grads[0].values()[0], 0.7f);
    EXPECT_FLOAT_EQ(grads[0].values()[3], 1.0f);
}

TEST(Backward, DeterministicRepeatedRuns) {
    auto run = [] {
        std::mt19937 rng(123);
        std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
        std::vector<float> xv(24);
        for (auto& v : xv) v = dist(rng);
        auto x = TensorF::from_values({2, 3, 2, 2}, xv, true);
        auto w = TensorF::from_values({2, 3, 2, 2}, xv, true);
        auto loss = sum_all(sigmoid(conv2d(x, w, 1, 1)));
        auto grads = backward(loss, {x, w});
        std::vector<float> out = grads[0].values();
        out.insert(out.end(), grads[1].values().begin(), grads[1].values().end());
        out.push_back(loss.item());
        return out;
    };
    auto a = run();
    auto b = run();
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]) << "index " << i;
}

TEST(Backward, DebugModeFlagsNonFinite) {
    DebugChecksGuard guard(true);
    auto x = TensorF::scalar(0.0f, true);
    EXPECT_THROW(log_op(x), NumericError);
}

TEST(FiniteDifference, QuadraticMatchesAnalytic) {
    auto x = TensorD::scalar(3.0);
    auto fd = finite_difference_grad<double>(
        [](const TensorD& t) { return mul(t, t).item(); }, x, 1e-4);
    EXPECT_NEAR(fd.item(), 6.0, 1e-6);
}

TEST(FiniteDifference, SigmoidSumAtZero) {
    auto x = TensorD::zeros({3});
    auto fd = finite_difference_grad<double>(
        [](const TensorD& t) { return sum_all(sigmoid(t)).item(); }, x, 1e-5);
    for (double g : fd.values()) EXPECT_NEAR(g, 0.25, 1e-8);
}

TEST(FiniteDifference, RandomThreeLayerNetMatchesBackward) {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    auto rand_tensor = [&](std::vector<int64_t> shape, bool rg) {
        std::vector<double> v(shape_numel(shape));
        for (auto& e : v) e = dist(rng);
        return TensorD::from_values(std::move(shape), std::move(v), rg);
    };
    auto x = rand_tensor({3, 5}, false);
    auto w1 = rand_tensor({4, 5}, true);
    auto b1 = rand_tensor({4}, true);
    auto w2 = rand_tensor({4, 4}, true);
    auto b2 = rand_tensor({4}, true);
    auto w3 = rand_tensor({2, 4}, true);
    auto b3 = rand_tensor({2}, true);
    std::vector<int64_t> labels{0, 1, 1};

    auto forward = [&](const TensorD& w1_, const TensorD& b1_, const TensorD& w2_,
                       const TensorD& b2_, const TensorD& w3_, const TensorD& b3_) {
        auto h1 = relu(affine(x, w1_, b1_));
        auto h2 = sigmoid(affine(h1, w2_, b2_));
        return softmax_cross_entropy(affine(h2, w3_, b3_), labels);
    };

    auto loss = forward(w1, b1, w2, b2, w3, b3);
    auto grads = backward(loss, {w1, b1, w2, b2, w3, b3});

    std::vector<TensorD> params{w1, b1, w2, b2, w3, b3};
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto fd = finite_difference_grad<double>(
            [&](const TensorD& p) {
                std::vector<TensorD> ps = params;
                ps[pi] = p;
                return forward(ps[0], ps[1], ps[2], ps[3], ps[4], ps[5]).item();
            },
            params[pi], 1e-5);
        EXPECT_LT(max_relative_error(grads[pi], fd), 1e-4) << "param " << pi;
    }
}

TEST(FiniteDifference, DoubleBackpropThroughInnerSgdStep) {
    // L_outer(w - beta * dL_inner/dw) checked against finite differences on w.
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> dist(-0.8, 0.8);
    std::vector<double> wv(6), xv(6);
    for (auto& v : wv) v = dist(rng);
    for (auto& v : xv) v = dist(rng);
    const double beta = 0.3;
    auto x = TensorD::from_values({6}, xv);

    auto episode = [&](const TensorD& w) {
        auto inner_loss = sum_all(sigmoid(mul(w, x)));
        auto g = backward(inner_loss, {w}, /*create_graph=*/true)[0];
        auto w1 = sub(w, scale(g, beta));
        return sum_all(mul(mul(w1, w1), x));
    };

    auto w = TensorD::from_values({6}, wv, true);
    auto outer = episode(w);
    auto meta_grad = backward(outer, {w})[0];

    auto fd = finite_difference_grad<double>(
        [&](const TensorD& p) {
            TensorD probe = p.detached_copy(true);
            return episode(probe).item();
        },
        w, 1e-5);
    EXPECT_LT(max_relative_error(meta_grad, fd), 1e-3);
}
