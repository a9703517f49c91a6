// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "palora/palora_layer.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace palora;
using palora::testing::Gen;

namespace {

std::vector<Matrix> random_targets(Gen& gen, std::size_t tasks, std::size_t rows, std::size_t cols) {
    std::vector<Matrix> out;
    for (std::size_t t = 0; t < tasks; ++t) out.push_back(gen.matrix(rows, cols));
    return out;
}

/// W + (alpha/r) sum_t lambda_t A_t B_t assembled entry by entry.
Matrix brute_compose(const PaLoRALayer& l, const std::vector<double>& lambda) {
    Matrix w = l.weight();
    for (std::size_t t = 0; t < l.num_tasks(); ++t) {
        const auto& ad = l.adapters()[t];
        for (std::size_t i = 0; i < w.rows(); ++i)
            for (std::size_t j = 0; j < w.cols(); ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < l.rank(); ++k) s += ad.a(i, k) * ad.b(k, j);
                w(i, j) += l.alpha() / static_cast<double>(l.rank()) * lambda[t] * s;
            }
    }
    return w;
}

Matrix dense_forward(const Matrix& w, const Matrix& bias, const Matrix& x) {
    auto y = palora::testing::naive_matmul(x, palora::testing::naive_transpose(w));
    for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += bias(0, c);
    return y;
}

}  // namespace

TEST(Init, AdaptersStartAtZeroSoEveryPreferenceGivesTheBaseLayer) {
    const auto layer = PaLoRALayer::init(5, 7, 3, 2, 4.0, 1);
    Gen gen(1);
    const auto x = gen.matrix(4, 7);
    const auto base = dense_forward(layer.weight(), layer.bias(), x);
    for (const auto& lambda : palora::testing::probe_preferences(3, gen)) {
        EXPECT_LT(palora::testing::max_rel_diff(layer.forward(lambda, x), base), 1e-14);
    }
    for (const auto& ad : layer.adapters()) EXPECT_EQ(ad.b, Matrix(2, 7));
}

TEST(Init, Shapes) {
    const auto layer = PaLoRALayer::init(4, 4, 2, 1, 1.0, 9);
    ASSERT_EQ(layer.adapters().size(), 2u);
    for (const auto& ad : layer.adapters()) {
        EXPECT_EQ(ad.a.rows(), 4u);
        EXPECT_EQ(ad.a.cols(), 1u);
        EXPECT_EQ(ad.b.rows(), 1u);
        EXPECT_EQ(ad.b.cols(), 4u);
    }
    EXPECT_EQ(layer.bias().rows(), 1u);
    EXPECT_EQ(layer.bias().cols(), 4u);
}

TEST(Init, SameSeedIsBitIdentical) {
    EXPECT_EQ(PaLoRALayer::init(6, 3, 2, 1, 1.0, 77), PaLoRALayer::init(6, 3, 2, 1, 1.0, 77));
    EXPECT_FALSE(PaLoRALayer::init(6, 3, 2, 1, 1.0, 77) == PaLoRALayer::init(6, 3, 2, 1, 1.0, 78));
}

TEST(Init, WeightScales) {
    // Kaiming fan-in: var(W) = 2/m; A entries have var 1/m.
    const auto layer = PaLoRALayer::init(200, 50, 1, 10, 1.0, 3);
    double w2 = 0.0, a2 = 0.0;
    for (double v : layer.weight().values()) w2 += v * v;
    for (double v : layer.adapters()[0].a.values()) a2 += v * v;
    EXPECT_NEAR(w2 / layer.weight().size(), 2.0 / 50.0, 0.004);
    EXPECT_NEAR(a2 / layer.adapters()[0].a.size(), 1.0 / 50.0, 0.004);
}

TEST(Init, InvalidDimensionsThrow) {
    EXPECT_THROW(PaLoRALayer::init(4, 4, 2, 0, 1.0, 0), std::invalid_argument);
    EXPECT_THROW(PaLoRALayer::init(4, 3, 2, 4, 1.0, 0), std::invalid_argument);
    EXPECT_THROW(PaLoRALayer::init(4, 4, 0, 1, 1.0, 0), std::invalid_argument);
    EXPECT_THROW(PaLoRALayer::init(0, 4, 1, 1, 1.0, 0), std::invalid_argument);
    EXPECT_THROW(PaLoRALayer::init(4, 4, 1, 1, -1.0, 0), std::invalid_argument);
}

TEST(Compose, ZeroPreferenceReturnsWExactly) {
    Gen gen(2);
    const auto layer = palora::testing::random_layer(gen, 5, 4, 3, 2, 3.0);
    const std::vector<double> zero(3, 0.0);
    EXPECT_EQ(layer.compose_effective_weight(zero), layer.weight());
}

TEST(Compose, RankOneOuterProduct) {
    const auto layer =
        PaLoRALayer::from_blocks(Matrix(2, 2), Matrix(1, 2), {{Matrix{{1}, {0}}, Matrix{{0, 1}}}}, 1, 1.0);
    const std::vector<double> one{1.0};
    EXPECT_EQ(layer.compose_effective_weight(one), (Matrix{{0, 1}, {0, 0}}));
}

TEST(Compose, MatchesBruteForceAssembly) {
    Gen gen(3);
    for (int trial = 0; trial < 30; ++trial) {
        const auto layer = palora::testing::random_layer(gen, gen.size(1, 8), gen.size(1, 8), 2, 1, gen.uniform(0.5, 5));
        const std::vector<double> lambda{0.3, 0.7};
        EXPECT_LT(palora::testing::max_rel_diff(layer.compose_effective_weight(lambda), brute_compose(layer, lambda)),
                  1e-14);
    }
}

TEST(Compose, LengthMismatchThrows) {
    const auto layer = PaLoRALayer::init(3, 3, 2, 1, 1.0, 0);
    const std::vector<double> three{0.2, 0.3, 0.5};
    EXPECT_THROW(layer.compose_effective_weight(three), ShapeError);
    EXPECT_THROW(layer.forward(three, Matrix(1, 3)), ShapeError);
}

TEST(Compose, AffineInPreference) {
    Gen gen(4);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t tasks = gen.size(1, 3);
        const auto layer = palora::testing::random_layer(gen, gen.size(1, 6), gen.size(1, 6), tasks, 1, 2.0);
        const auto l1 = gen.vec(tasks, -2, 2), l2 = gen.vec(tasks, -2, 2);
        const double a = gen.uniform(-3, 3), b = gen.uniform(-3, 3);
        std::vector<double> mix(tasks);
        for (std::size_t t = 0; t < tasks; ++t) mix[t] = a * l1[t] + b * l2[t];
        Matrix expected = a * layer.compose_effective_weight(l1) + b * layer.compose_effective_weight(l2);
        expected.axpy(-(a + b - 1.0), layer.weight());
        EXPECT_LT(relative_error(layer.compose_effective_weight(mix), expected), 1e-12);
    }
}

TEST(Forward, OneHotDependsOnlyOnThatTask) {
    Gen gen(5);
    auto layer = palora::testing::random_layer(gen, 4, 6, 3, 2, 2.0);
    const auto x = gen.matrix(5, 6);
    const std::vector<double> one_hot{0.0, 1.0, 0.0};
    const auto before = layer.forward(one_hot, x);
    layer.adapters()[0] = {gen.matrix(4, 2), gen.matrix(2, 6)};
    layer.adapters()[2] = {gen.matrix(4, 2), gen.matrix(2, 6)};
    EXPECT_EQ(layer.forward(one_hot, x), before);
}

TEST(Forward, ZeroAlphaGivesBaseOutput) {
    Gen gen(6);
    const auto layer = palora::testing::random_layer(gen, 4, 6, 2, 1, 0.0);
    const auto x = gen.matrix(3, 6);
    const std::vector<double> lambda{0.4, 0.6};
    EXPECT_LT(palora::testing::max_rel_diff(layer.forward(lambda, x), dense_forward(layer.weight(), layer.bias(), x)),
              1e-14);
}

TEST(Forward, FactoredEqualsComposed) {
    Gen gen(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = gen.size(1, 12), m = gen.size(1, 12), tasks = gen.size(1, 3);
        const std::size_t rank = gen.size(1, std::min<std::size_t>({n, m, 3}));
        const auto layer = palora::testing::random_layer(gen, n, m, tasks, rank, gen.uniform(0.1, 10));
        const auto x = gen.matrix(gen.size(1, 8), m);
        const auto lambda = gen.simplex_point(tasks);
        const auto composed = dense_forward(layer.compose_effective_weight(lambda), layer.bias(), x);
        EXPECT_LT(relative_error(layer.forward(lambda, x), composed), 1e-12);
    }
}

TEST(Forward, InputShapeMismatchThrows) {
    const auto layer = PaLoRALayer::init(3, 4, 1, 1, 1.0, 0);
    const std::vector<double> one{1.0};
    EXPECT_THROW(layer.forward(one, Matrix(2, 3)), ShapeError);
    EXPECT_THROW(layer.backward(one, Matrix(2, 4), Matrix(2, 2)), ShapeError);
}

TEST(Backward, ZeroPreferenceGivesZeroAdapterGradients) {
    Gen gen(8);
    const auto layer = palora::testing::random_layer(gen, 4, 5, 3, 2, 1.5);
    const auto x = gen.matrix(6, 5);
    const std::vector<double> lambda{0.6, 0.0, 0.4};
    const auto r = layer.backward(lambda, x, gen.matrix(6, 4));
    EXPECT_EQ(r.grads.a[1], Matrix(4, 2));
    EXPECT_EQ(r.grads.b[1], Matrix(2, 5));
    EXPECT_NE(r.grads.a[0], Matrix(4, 2));
}

TEST(Backward, FrozenBaseZeroesOnlyBaseGradients) {
    Gen gen(9);
    auto layer = palora::testing::random_layer(gen, 4, 5, 2, 1, 1.0);
    const auto x = gen.matrix(6, 5);
    const auto up = gen.matrix(6, 4);
    const std::vector<double> lambda{0.3, 0.7};
    const auto live = layer.backward(lambda, x, up);
    layer.set_base_frozen(true);
    const auto frozen = layer.backward(lambda, x, up);
    EXPECT_EQ(frozen.grads.weight, Matrix(4, 5));
    EXPECT_EQ(frozen.grads.bias, Matrix(1, 4));
    EXPECT_EQ(frozen.grads.a, live.grads.a);
    EXPECT_EQ(frozen.grads.b, live.grads.b);
    EXPECT_EQ(frozen.dx, live.dx);
}

TEST(Backward, FrozenAdaptersZeroOnlyAdapterGradients) {
    Gen gen(10);
    auto layer = palora::testing::random_layer(gen, 3, 4, 2, 1, 1.0);
    const auto x = gen.matrix(5, 4);
    const auto up = gen.matrix(5, 3);
    const std::vector<double> lambda{0.5, 0.5};
    const auto live = layer.backward(lambda, x, up);
    layer.set_adapters_frozen(true);
    const auto frozen = layer.backward(lambda, x, up);
    EXPECT_EQ(frozen.grads.weight, live.grads.weight);
    EXPECT_EQ(frozen.grads.a[0], Matrix(3, 1));
    EXPECT_EQ(frozen.dx, live.dx);
}

TEST(Backward, MatchesFiniteDifferencesOnRandomLayers) {
    Gen gen(11);
    int checked = 0;
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = gen.size(1, 12), m = gen.size(1, 12), tasks = gen.size(1, 3);
        const std::size_t rank = gen.size(1, std::min<std::size_t>({n, m, 3}));
        const auto layer = palora::testing::random_layer(gen, n, m, tasks, rank, gen.uniform(0.5, 4));
        const auto x = gen.matrix(gen.size(1, 6), m);
        const auto targets = random_targets(gen, tasks, x.rows(), n);
        for (const auto& lambda : palora::testing::probe_preferences(tasks, gen)) {
            const auto r = palora::testing::check_layer_gradients(layer, lambda, x, targets);
            EXPECT_LT(r.worst, 1e-4) << "block " << r.block << " n=" << n << " m=" << m << " T=" << tasks;
            ++checked;
        }
    }
    EXPECT_GE(checked, 20 * 4);
}

TEST(Backward, DoesNotModifyLayer) {
    Gen gen(12);
    const auto layer = palora::testing::random_layer(gen, 3, 3, 2, 1, 1.0);
    const auto copy = layer;
    const std::vector<double> lambda{0.5, 0.5};
    (void)layer.backward(lambda, gen.matrix(2, 3), gen.matrix(2, 3));
    EXPECT_EQ(layer, copy);
}

TEST(ParamCount, Examples) {
    const auto c = PaLoRALayer::init(10, 10, 2, 1, 1.0, 0).param_count();
    EXPECT_EQ(c.base, 100u);
    EXPECT_EQ(c.adapters, 40u);
    EXPECT_EQ(c.base + c.adapters, 140u);
    EXPECT_EQ(c.bias, 10u);
    EXPECT_EQ(PaLoRALayer::init(2, 2, 1, 1, 1.0, 0).param_count().adapters, 4u);
}

TEST(ParamCount, FormulaHoldsAndMatchesStoredEntries) {
    Gen gen(13);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = gen.size(1, 20), m = gen.size(1, 20), tasks = gen.size(1, 4);
        const std::size_t rank = gen.size(1, std::min(n, m));
        const auto layer = PaLoRALayer::init(n, m, tasks, rank, 1.0, trial);
        const auto c = layer.param_count();
        EXPECT_EQ(c.base + c.adapters, m * n + tasks * rank * (m + n));
        std::size_t stored = layer.weight().size();
        for (const auto& ad : layer.adapters()) stored += ad.a.size() + ad.b.size();
        EXPECT_EQ(c.base + c.adapters, stored);
        EXPECT_EQ(c.total(), stored + layer.bias().size());
    }
}

TEST(Merge, ZeroPreferenceIsBaseLayer) {
    Gen gen(14);
    const auto layer = palora::testing::random_layer(gen, 4, 3, 2, 1, 2.0);
    const std::vector<double> zero{0.0, 0.0};
    const auto merged = layer.merge(zero);
    EXPECT_EQ(merged.weight, layer.weight());
    EXPECT_EQ(merged.bias, layer.bias());
}

TEST(Merge, ForwardAgreesWithLayer) {
    Gen gen(15);
    for (int trial = 0; trial < 30; ++trial) {
        const auto layer = palora::testing::random_layer(gen, gen.size(1, 8), gen.size(1, 8), 2, 1, 2.0);
        const auto lambda = gen.vec(2, -1, 2);
        const auto x = gen.matrix(4, layer.in_features());
        const auto merged = layer.merge(lambda);
        EXPECT_LT(relative_error(merged.forward(x), layer.forward(lambda, x)), 1e-12);
        // Merging again yields the same snapshot.
        EXPECT_EQ(layer.merge(lambda), merged);
        const auto twice = PaLoRALayer::from_blocks(merged.weight, merged.bias,
                                                    {{Matrix(layer.out_features(), 1), Matrix(1, layer.in_features())},
                                                     {Matrix(layer.out_features(), 1), Matrix(1, layer.in_features())}},
                                                    1, 2.0);
        EXPECT_EQ(twice.merge(lambda).forward(x), merged.forward(x));
    }
}

TEST(FromBlocks, RejectsMismatchedShapes) {
    EXPECT_THROW(PaLoRALayer::from_blocks(Matrix(3, 4), Matrix(1, 4), {{Matrix(3, 1), Matrix(1, 4)}}, 1, 1.0),
                 ShapeError);
    EXPECT_THROW(PaLoRALayer::from_blocks(Matrix(3, 4), Matrix(1, 3), {{Matrix(3, 2), Matrix(1, 4)}}, 1, 1.0),
                 ShapeError);
}
