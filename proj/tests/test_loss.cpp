#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"

namespace piven {
namespace {

using V = std::vector<double>;

PIOutput make_output(V upper, V lower, V v) {
    PIOutput out{upper, lower, v, value_prediction(v, upper, lower)};
    return out;
}

TEST(KHard, ClosedInterval) {
    EXPECT_EQ(k_hard(V{0}, V{-1}, V{1}), V{1});
    EXPECT_EQ(k_hard(V{2}, V{-1}, V{1}), V{0});
    EXPECT_EQ(k_hard(V{1}, V{-1}, V{1}), V{1});
    EXPECT_EQ(k_hard(V{-1}, V{-1}, V{1}), V{1});
    EXPECT_THROW(k_hard(V{1, 2}, V{-1}, V{1}), ShapeError);
}

TEST(KSoft, Saturation) {
    const double centered = k_soft(V{0}, V{-1}, V{1}, 160)[0];
    EXPECT_NEAR(centered, 1.0, 1e-10);
    const double at_lower = k_soft(V{-1}, V{-1}, V{1}, 160)[0];
    EXPECT_NEAR(at_lower, 0.5, 1e-10);
    EXPECT_LT(k_soft(V{-2}, V{-1}, V{1}, 160)[0], 1e-60);
    EXPECT_THROW(k_soft(V{0}, V{-1}, V{1}, 0.0), ConfigError);
    EXPECT_THROW(k_soft(V{0, 1}, V{-1}, V{1}, 1.0), ShapeError);
}

TEST(KSoft, ConvergesToHardAwayFromBoundary) {
    Rng rng(1);
    for (double s : {10.0, 160.0, 1000.0}) {
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const double l = rng.uniform(-2, 0), u = rng.uniform(0, 2), y = rng.uniform(-3, 3);
            if (std::min(std::abs(y - l), std::abs(u - y)) < 0.05) continue;
            worst = std::max(worst, std::abs(k_soft(V{y}, V{l}, V{u}, s)[0] - k_hard(V{y}, V{l}, V{u})[0]));
        }
        // The bound is the logistic tail at the excluded margin.
        EXPECT_LE(worst, 2.0 * sigmoid(-s * 0.05)) << "s=" << s;
    }
}

TEST(MpiwCapt, DirectFormula) {
    EXPECT_DOUBLE_EQ(mpiw_capt(V{1, 3}, V{0, 1}, V{1, 1}), 1.5);
    EXPECT_DOUBLE_EQ(mpiw_capt(V{1, 3}, V{0, 1}, V{1, 0}), 1.0);
    EXPECT_EQ(mpiw_capt(V{1, 3}, V{0, 1}, V{0, 0}), 0.0);
}

TEST(LossPi, PenaltyFreeEqualsCapturedWidth) {
    LossConfig cfg;
    const auto out = make_output(V{10, 10, 10}, V{-10, -12, -10}, V{0.5, 0.5, 0.5});
    const V y{0, 1, -1};
    EXPECT_DOUBLE_EQ(loss_pi(out, y, cfg), mpiw_capt(out.upper, out.lower, k_hard(y, out.lower, out.upper)));
}

TEST(LossPi, WorkedExample) {
    // n = 100, alpha = 0.05, lambda = 15: 85 points well inside intervals of
    // width 2 and 15 far outside gives soft PICP 0.85 and captured width 2.
    LossConfig cfg;
    V upper(100, 1.0), lower(100, -1.0), y(100, 0.0);
    for (int i = 85; i < 100; ++i) y[i] = 50.0;
    const auto out = make_output(upper, lower, V(100, 0.5));
    EXPECT_NEAR(loss_pi(out, y, cfg), 3.5, 1e-12);

    // Same intervals, every value off by sqrt(5): 0.5 * 3.5 + 0.5 * 5.
    auto shifted = out;
    for (std::size_t i = 0; i < 100; ++i) shifted.value[i] = y[i] + std::sqrt(5.0);
    EXPECT_NEAR(loss_v(shifted, y, cfg), 5.0, 1e-12);
    EXPECT_NEAR(loss_piven(shifted, y, cfg), 4.25, 1e-12);
}

TEST(LossPi, LambdaScalesPenaltyOnly) {
    V upper(100, 1.0), lower(100, -1.0), y(100, 0.0);
    for (int i = 85; i < 100; ++i) y[i] = 50.0;
    const auto out = make_output(upper, lower, V(100, 0.5));
    LossConfig a, b;
    b.lambda = 2 * a.lambda;
    EXPECT_NEAR(loss_pi(out, y, b) - 2.0, 2 * (loss_pi(out, y, a) - 2.0), 1e-12);
}

TEST(LossPi, IncreasesInLambdaIffUndercovered) {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.below(30);
        V u(n), l(n), y(n);
        const double width = rng.uniform(0.1, 4.0);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.normal();
            l[i] = rng.normal() * 0.3 - width / 2;
            u[i] = l[i] + width;
        }
        const auto out = make_output(u, l, V(n, 0.5));
        LossConfig lo, hi;
        hi.lambda = 30.0;
        const double soft = mean_of(k_soft(y, l, u, lo.softness));
        if (std::abs(soft - (1.0 - lo.alpha)) < 1e-6) continue;
        if (soft < 1.0 - lo.alpha) {
            EXPECT_GT(loss_pi(out, y, hi), loss_pi(out, y, lo));
        } else {
            EXPECT_EQ(loss_pi(out, y, hi), loss_pi(out, y, lo));
        }
    }
}

TEST(ValuePrediction, ConvexCombination) {
    EXPECT_EQ(value_prediction(V{0.5}, V{4}, V{2})[0], 3.0);
    EXPECT_EQ(value_prediction(V{0.25}, V{2}, V{-2})[0], -1.0);
    EXPECT_NEAR(value_prediction(V{1.0 - 1e-12}, V{4}, V{2})[0], 4.0, 1e-11);
    EXPECT_EQ(value_prediction(V{0.3}, V{1.7}, V{1.7})[0], 1.7);
}

TEST(LossV, Examples) {
    LossConfig cfg;
    PIOutput out;
    out.value = V{1, 3};
    EXPECT_DOUBLE_EQ(loss_v(out, V{0, 0}, cfg), 5.0);
    out.value = V{0.5, -2};
    EXPECT_EQ(loss_v(out, V{0.5, -2}, cfg), 0.0);
    cfg.point_loss = PointLoss::absolute;
    out.value = V{1, -3};
    EXPECT_DOUBLE_EQ(loss_v(out, V{0, 0}, cfg), 2.0);
}

TEST(LossPiven, MixingEndpointsAndArithmetic) {
    Rng rng(3);
    V u(20), l(20), v(20), y(20);
    for (int i = 0; i < 20; ++i) {
        l[i] = rng.normal();
        u[i] = l[i] + rng.uniform(0, 2);
        v[i] = rng.uniform(0.01, 0.99);
        y[i] = rng.normal();
    }
    const auto out = make_output(u, l, v);
    LossConfig cfg;
    cfg.beta = 1.0;
    EXPECT_EQ(loss_piven(out, y, cfg), loss_pi(out, y, cfg));
    cfg.beta = 0.0;
    EXPECT_EQ(loss_piven(out, y, cfg), loss_v(out, y, cfg));
    // Affine in beta.
    const double pi = loss_pi(out, y, cfg), lv = loss_v(out, y, cfg);
    for (double b : {0.1, 0.5, 0.9}) {
        cfg.beta = b;
        EXPECT_NEAR(loss_piven(out, y, cfg), b * pi + (1 - b) * lv, 1e-12);
    }
}

TEST(LossQd, EqualsPivenAtBetaOne) {
    Rng rng(4);
    V u(10), l(10), v(10), y(10);
    for (int i = 0; i < 10; ++i) {
        l[i] = rng.normal();
        u[i] = l[i] + 1;
        v[i] = rng.uniform(0.1, 0.9);
        y[i] = rng.normal();
    }
    const auto out = make_output(u, l, v);
    LossConfig cfg;
    const double qd = loss_qd(out, y, cfg);
    cfg.beta = 1.0;
    EXPECT_EQ(qd, loss_piven(out, y, cfg));
}

TEST(LossPoo, ReducesToLossPiWhenHeadHitsTarget) {
    LossConfig cfg;
    PIOutput out{V{1, 2}, V{-1, 0}, V{0.5, 0.5}, V{0.3, 1.1}};
    EXPECT_EQ(loss_poo(out, V{0.3, 1.1}, cfg), loss_pi(out, V{0.3, 1.1}, cfg));
}

TEST(LossPoo, ValueTermDoesNotTouchBoundHeads) {
    // Two POO configurations differing only in the raw value head: the U/L
    // columns of the head gradient are identical.
    LossConfig cfg;
    cfg.variant = Variant::poo;
    Rng rng(5);
    Matrix heads(12, 3);
    V y(12);
    for (std::size_t i = 0; i < 12; ++i) {
        heads(i, 1) = rng.normal();
        heads(i, 0) = heads(i, 1) + rng.uniform(0.1, 2);
        heads(i, 2) = rng.normal();
        y[i] = rng.normal();
    }
    Matrix shifted = heads;
    for (std::size_t i = 0; i < 12; ++i) shifted(i, 2) += 3.0;
    const auto a = loss_gradient(heads, y, cfg).d_heads;
    const auto b = loss_gradient(shifted, y, cfg).d_heads;
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(a(i, 0), b(i, 0));
        EXPECT_EQ(a(i, 1), b(i, 1));
    }
    // And the finite-difference view of the same fact on the value term alone.
    const auto value_term = [&](const Matrix& h) {
        double s = 0.0;
        for (std::size_t i = 0; i < 12; ++i) s += (h(i, 2) - y[i]) * (h(i, 2) - y[i]);
        return s / 12.0;
    };
    Matrix probe = heads;
    auto flat = probe.flat();
    const auto g = central_difference(flat, [&] { return value_term(probe); }, 1e-5);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(g[i * 3 + 0], 0.0);
        EXPECT_EQ(g[i * 3 + 1], 0.0);
    }
}

TEST(LossPoo, DiffersFromPiven) {
    LossConfig cfg;
    Matrix heads(2, 3, V{1, -1, 0.7, 2, 0, -0.4});
    const V y{0.2, 0.9};
    cfg.variant = Variant::poo;
    const double poo = loss_value(heads, y, cfg);
    cfg.variant = Variant::piven;
    EXPECT_NE(poo, loss_value(heads, y, cfg));
}

TEST(LossMoi, PinsMidpoint) {
    LossConfig cfg;
    const auto half = make_output(V{3, 1}, V{1, -1}, V{0.5, 0.5});
    EXPECT_EQ(loss_moi(half, V{2, 0}, cfg), loss_piven(half, V{2, 0}, cfg));
    // Symmetric intervals around the target: no value loss.
    const auto skewed = make_output(V{3, 1}, V{1, -1}, V{0.9, 0.1});
    cfg.beta = 0.0;
    EXPECT_EQ(loss_moi(skewed, V{2, 0}, cfg), 0.0);
    Matrix heads(1, 3, V{4, 2, 1.3});
    EXPECT_EQ(interpret_heads(heads, Variant::moi).value[0], 3.0);
}

TEST(LossGaussNll, Examples) {
    EXPECT_EQ(loss_gauss_nll(V{1, 2}, V{1, 1}, V{1, 2}), 0.0);
    EXPECT_DOUBLE_EQ(loss_gauss_nll(V{0}, V{1}, V{2}), 2.0);
    EXPECT_DOUBLE_EQ(loss_gauss_nll(V{0}, V{1}, V{4}), 4 * loss_gauss_nll(V{0}, V{1}, V{2}));
    EXPECT_THROW(loss_gauss_nll(V{0}, V{0}, V{1}), InternalError);
}

TEST(LossGaussNll, VarianceLinkIsPositive) {
    Matrix heads(3, 2, V{0, -800, 1, 0, 2, 50});
    const auto g = interpret_gaussian(heads);
    for (double v : g.variance) EXPECT_GE(v, variance_floor);
    EXPECT_NEAR(g.variance[1], std::log(2.0) + variance_floor, 1e-15);
}

TEST(Losses, PermutationInvariantAndFinite) {
    Rng rng(6);
    for (Variant variant : {Variant::piven, Variant::qd, Variant::poo, Variant::moi, Variant::gauss_nll}) {
        LossConfig cfg;
        cfg.variant = variant;
        const std::size_t cols = head_count(variant);
        Matrix heads = testing::random_matrix(rng, 25, cols, 3.0);
        const auto y = testing::random_vector(rng, 25);
        const auto perm = rng.permutation(25);
        const double base = loss_value(heads, y, cfg);
        const double shuffled = loss_value(heads.select_rows(perm), select(y, perm), cfg);
        EXPECT_TRUE(std::isfinite(base));
        EXPECT_NEAR(base, shuffled, 1e-12 * std::max(1.0, std::abs(base))) << to_string(variant);
    }
}

TEST(LossConfigTest, Validation) {
    LossConfig c;
    EXPECT_NO_THROW(c.validate());
    const std::vector<void (*)(LossConfig&)> breakers{
        [](LossConfig& x) { x.alpha = 0.0; }, [](LossConfig& x) { x.alpha = 1.0; },
        [](LossConfig& x) { x.lambda = 0.0; }, [](LossConfig& x) { x.softness = -1.0; },
        [](LossConfig& x) { x.beta = 1.5; }};
    for (auto bad : breakers) {
        LossConfig x;
        bad(x);
        EXPECT_THROW(x.validate(), ConfigError);
    }
}

TEST(Variants, ParseAndPrint) {
    for (Variant v : {Variant::piven, Variant::qd, Variant::poo, Variant::moi, Variant::gauss_nll}) {
        EXPECT_EQ(parse_variant(to_string(v)), v);
    }
    EXPECT_EQ(parse_variant("de"), Variant::gauss_nll);
    EXPECT_THROW(parse_variant("nope"), ConfigError);
    EXPECT_EQ(parse_point_loss("mae"), PointLoss::absolute);
}

} // namespace
} // namespace piven
