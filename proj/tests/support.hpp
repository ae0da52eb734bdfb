#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "piven/piven.hpp"

namespace piven::testing {

/// Network with every parameter drawn uniformly from [-scale, scale].
inline FeedForwardModel random_model(Rng& rng, std::vector<std::size_t> sizes, double scale = 1.0) {
    FeedForwardModel model(std::move(sizes));
    for (auto block : parameter_blocks(model.layers())) {
        for (double& p : block) p = rng.uniform(-scale, scale);
    }
    return model;
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.flat()) x = sd * rng.normal();
    return m;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = sd * rng.normal();
    return v;
}

// Finite differences straddle a non-differentiable point when a step of h moves
// any of these quantities across zero.
struct KinkMargins {
    double relu = 1e-3;     // hidden pre-activation
    double capture = 1e-3;  // y - L and U - y (hard capture indicator)
    double coverage = 1e-2; // (1 - alpha) - soft PICP, the hinge in the penalty
    double residual = 1e-3; // value - y, for the absolute point loss
};

inline bool near_kink(const FeedForwardModel& model, const Matrix& x, std::span<const double> y,
                      const LossConfig& cfg, const KinkMargins& m = {}) {
    Matrix act = x;
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        act = detail::affine(act, layers[l]);
        if (l + 1 == layers.size()) break;
        for (double z : act.flat()) {
            if (std::abs(z) < m.relu) return true;
        }
        detail::relu_inplace(act);
    }
    if (cfg.variant == Variant::gauss_nll) return false;

    const auto out = interpret_heads(act, cfg.variant);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (std::abs(y[i] - out.lower[i]) < m.capture || std::abs(out.upper[i] - y[i]) < m.capture) return true;
    }
    const auto soft = k_soft(y, out.lower, out.upper, cfg.softness);
    if (std::abs((1.0 - cfg.alpha) - mean_of(soft)) < m.coverage) return true;
    if (cfg.point_loss == PointLoss::absolute) {
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double pred = cfg.variant == Variant::moi ? mix(0.5, out.upper[i], out.lower[i]) : out.value[i];
            if (std::abs(pred - y[i]) < m.residual) return true;
        }
    }
    return false;
}

/// Largest |a - b| / max(|a|, |b|, floor) over all parameters.
inline double max_relative_error(const GradientSet& a, const GradientSet& b, double floor) {
    const auto pa = parameter_blocks(a.layers);
    const auto pb = parameter_blocks(b.layers);
    double worst = 0.0;
    for (std::size_t k = 0; k < pa.size(); ++k) {
        for (std::size_t i = 0; i < pa[k].size(); ++i) {
            const double x = pa[k][i], z = pb[k][i];
            const double scale = std::max({std::abs(x), std::abs(z), floor});
            worst = std::max(worst, std::abs(x - z) / scale);
        }
    }
    return worst;
}

/// Compact config for fast end-to-end tests.
inline ExperimentConfig tiny_sine_config(std::size_t epochs = 60) {
    auto c = preset("sine");
    c.dataset.synthetic->n = 64;
    c.dataset.synthetic_test_n = 64;
    c.model.hidden = {8};
    c.optimizer.max_epochs = epochs;
    c.optimizer.batch_size = 32;
    c.ensemble_size = 2;
    c.threads = 1;
    return c;
}

} // namespace piven::testing
