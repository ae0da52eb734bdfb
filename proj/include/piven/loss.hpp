#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "piven/error.hpp"
#include "piven/matrix.hpp"

namespace piven {

enum class Variant { piven, qd, poo, moi, gauss_nll };

/// Regression objective used for the value-prediction term.
enum class PointLoss { squared, absolute };

inline std::string to_string(Variant v) {
    switch (v) {
    case Variant::piven: return "piven";
    case Variant::qd: return "qd";
    case Variant::poo: return "poo";
    case Variant::moi: return "moi";
    case Variant::gauss_nll: return "gauss_nll";
    }
    return "?";
}

inline Variant parse_variant(std::string_view name) {
    if (name == "piven") return Variant::piven;
    if (name == "qd") return Variant::qd;
    if (name == "poo") return Variant::poo;
    if (name == "moi") return Variant::moi;
    if (name == "gauss_nll" || name == "de") return Variant::gauss_nll;
    throw ConfigError("unknown loss variant '" + std::string(name) + "'");
}

inline std::string to_string(PointLoss p) { return p == PointLoss::squared ? "squared" : "absolute"; }

inline PointLoss parse_point_loss(std::string_view name) {
    if (name == "squared" || name == "mse") return PointLoss::squared;
    if (name == "absolute" || name == "mae") return PointLoss::absolute;
    throw ConfigError("unknown point loss '" + std::string(name) + "'");
}

/// Number of raw network outputs the variant consumes.
constexpr std::size_t head_count(Variant v) noexcept { return v == Variant::gauss_nll ? 2 : 3; }

struct LossConfig {
    double alpha = 0.05;     // miscoverage target; PIs aim for 1 - alpha coverage
    double lambda = 15.0;    // coverage penalty weight
    double softness = 160.0; // sharpness of the soft capture indicator
    double beta = 0.5;       // interval vs value-loss mixing weight
    Variant variant = Variant::piven;
    PointLoss point_loss = PointLoss::squared;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
        if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
        if (!(softness > 0.0)) throw ConfigError("softness s must be positive");
        if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0,1]");
    }
};

/// Guard for the captured-width denominator when nothing is captured.
inline constexpr double capture_epsilon = 1e-7;
/// Floor added to the softplus variance link of the Gaussian head.
inline constexpr double variance_floor = 1e-6;

/// Per-sample interval bounds, auxiliary weight and value prediction.
struct PIOutput {
    std::vector<double> upper;
    std::vector<double> lower;
    std::vector<double> v;
    std::vector<double> value;

    std::size_t size() const noexcept { return upper.size(); }
};

struct GaussianOutput {
    std::vector<double> mean;
    std::vector<double> variance;

    std::size_t size() const noexcept { return mean.size(); }
};

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Hard capture indicator; closed interval, so boundary points count as captured.
inline std::vector<double> k_hard(std::span<const double> y, std::span<const double> lower,
                                  std::span<const double> upper) {
    require_same_length(y.size(), lower.size(), "k_hard");
    require_same_length(y.size(), upper.size(), "k_hard");
    std::vector<double> k(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) k[i] = (lower[i] <= y[i] && y[i] <= upper[i]) ? 1.0 : 0.0;
    return k;
}

inline std::vector<double> k_soft(std::span<const double> y, std::span<const double> lower,
                                  std::span<const double> upper, double s) {
    if (!(s > 0.0)) throw ConfigError("k_soft: softness must be positive");
    require_same_length(y.size(), lower.size(), "k_soft");
    require_same_length(y.size(), upper.size(), "k_soft");
    std::vector<double> k(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        k[i] = sigmoid(s * (y[i] - lower[i])) * sigmoid(s * (upper[i] - y[i]));
    }
    return k;
}

/// Mean width over captured samples only; zero when nothing is captured.
inline double mpiw_capt(std::span<const double> upper, std::span<const double> lower,
                        std::span<const double> k) {
    require_same_length(upper.size(), lower.size(), "mpiw_capt");
    require_same_length(upper.size(), k.size(), "mpiw_capt");
    double width = 0.0;
    double captured = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        width += (upper[i] - lower[i]) * k[i];
        captured += k[i];
    }
    return width / std::max(captured, capture_epsilon);
}

inline double mean_of(std::span<const double> x) {
    double sum = 0.0;
    for (double v : x) sum += v;
    return sum / static_cast<double>(x.size());
}

/// Width on hard-captured points plus the quadratic coverage penalty on the soft PICP.
inline double loss_pi(const PIOutput& out, std::span<const double> y, const LossConfig& cfg) {
    const std::size_t n = y.size();
    if (n == 0) throw ShapeError("loss_pi: empty batch");
    require_same_length(out.size(), n, "loss_pi");
    const auto hard = k_hard(y, out.lower, out.upper);
    const auto soft = k_soft(y, out.lower, out.upper, cfg.softness);
    const double gap = std::max(0.0, (1.0 - cfg.alpha) - mean_of(soft));
    return mpiw_capt(out.upper, out.lower, hard) +
           std::sqrt(static_cast<double>(n)) * cfg.lambda * gap * gap;
}

/// v*u + (1-v)*l, clamped so rounding never pushes it outside the bounds.
inline double mix(double v, double u, double l) noexcept {
    const double x = v * u + (1.0 - v) * l;
    return std::clamp(x, std::min(u, l), std::max(u, l));
}

inline std::vector<double> value_prediction(std::span<const double> v, std::span<const double> upper,
                                            std::span<const double> lower) {
    require_same_length(v.size(), upper.size(), "value_prediction");
    require_same_length(v.size(), lower.size(), "value_prediction");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = mix(v[i], upper[i], lower[i]);
    return out;
}

inline double point_loss(double prediction, double target, PointLoss kind) noexcept {
    const double r = prediction - target;
    return kind == PointLoss::squared ? r * r : std::abs(r);
}

/// Derivative of point_loss with respect to the prediction.
inline double point_loss_derivative(double prediction, double target, PointLoss kind) noexcept {
    const double r = prediction - target;
    if (kind == PointLoss::squared) return 2.0 * r;
    return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
}

inline double loss_v(const PIOutput& out, std::span<const double> y, const LossConfig& cfg) {
    if (y.empty()) throw ShapeError("loss_v: empty batch");
    require_same_length(out.value.size(), y.size(), "loss_v");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += point_loss(out.value[i], y[i], cfg.point_loss);
    return sum / static_cast<double>(y.size());
}

inline double loss_piven(const PIOutput& out, std::span<const double> y, const LossConfig& cfg) {
    return cfg.beta * loss_pi(out, y, cfg) + (1.0 - cfg.beta) * loss_v(out, y, cfg);
}

inline double loss_qd(const PIOutput& out, std::span<const double> y, const LossConfig& cfg) {
    return loss_pi(out, y, cfg);
}

/// Interval loss plus a point loss on the decoupled value head; `out.value`
/// must hold the raw (unsquashed) auxiliary output, as produced by interpret_heads.
inline double loss_poo(const PIOutput& out, std::span<const double> y, const LossConfig& cfg) {
    return loss_pi(out, y, cfg) + loss_v(out, y, cfg);
}

/// PIVEN loss with the auxiliary weight pinned to the interval midpoint.
inline double loss_moi(const PIOutput& out, std::span<const double> y, const LossConfig& cfg) {
    PIOutput mid = out;
    std::fill(mid.v.begin(), mid.v.end(), 0.5);
    mid.value = value_prediction(mid.v, mid.upper, mid.lower);
    return loss_piven(mid, y, cfg);
}

inline double loss_gauss_nll(std::span<const double> mean, std::span<const double> variance,
                             std::span<const double> y) {
    if (y.empty()) throw ShapeError("loss_gauss_nll: empty batch");
    require_same_length(mean.size(), y.size(), "loss_gauss_nll");
    require_same_length(variance.size(), y.size(), "loss_gauss_nll");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(variance[i] > 0.0)) throw InternalError("loss_gauss_nll: non-positive variance");
        const double r = y[i] - mean[i];
        sum += 0.5 * std::log(variance[i]) + r * r / (2.0 * variance[i]);
    }
    return sum / static_cast<double>(y.size());
}

/// Maps raw interval heads (U, L, v-logit columns) to reported outputs.
/// PIVEN mixes the bounds by v; QD and MOI report the midpoint with v = 0.5;
/// POO reports the raw auxiliary output as its value.
inline PIOutput interpret_heads(const Matrix& heads, Variant variant) {
    if (variant == Variant::gauss_nll) throw ConfigError("interpret_heads: gaussian heads carry no interval");
    if (heads.cols() != 3) throw ShapeError("interpret_heads: expected 3 head columns");
    const std::size_t n = heads.rows();
    PIOutput out;
    out.upper.resize(n);
    out.lower.resize(n);
    out.v.resize(n);
    out.value.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = heads(i, 0);
        const double l = heads(i, 1);
        const double logit = heads(i, 2);
        out.upper[i] = u;
        out.lower[i] = l;
        switch (variant) {
        case Variant::piven:
            out.v[i] = sigmoid(logit);
            out.value[i] = mix(out.v[i], u, l);
            break;
        case Variant::qd:
        case Variant::moi:
            out.v[i] = 0.5;
            out.value[i] = mix(0.5, u, l);
            break;
        case Variant::poo:
            out.v[i] = sigmoid(logit);
            out.value[i] = logit;
            break;
        case Variant::gauss_nll: break;
        }
    }
    return out;
}

inline GaussianOutput interpret_gaussian(const Matrix& heads) {
    if (heads.cols() != 2) throw ShapeError("interpret_gaussian: expected 2 head columns");
    GaussianOutput out;
    out.mean.resize(heads.rows());
    out.variance.resize(heads.rows());
    for (std::size_t i = 0; i < heads.rows(); ++i) {
        out.mean[i] = heads(i, 0);
        out.variance[i] = softplus(heads(i, 1)) + variance_floor;
    }
    return out;
}

/// Dispatches to the variant's scalar loss on raw head activations.
inline double loss_value(const Matrix& heads, std::span<const double> y, const LossConfig& cfg) {
    switch (cfg.variant) {
    case Variant::piven: return loss_piven(interpret_heads(heads, cfg.variant), y, cfg);
    case Variant::qd: return loss_qd(interpret_heads(heads, cfg.variant), y, cfg);
    case Variant::poo: return loss_poo(interpret_heads(heads, cfg.variant), y, cfg);
    case Variant::moi: return loss_moi(interpret_heads(heads, Variant::piven), y, cfg);
    case Variant::gauss_nll: {
        const auto g = interpret_gaussian(heads);
        return loss_gauss_nll(g.mean, g.variance, y);
    }
    }
    throw InternalError("loss_value: unhandled variant");
}

struct HeadGradient {
    double loss = 0.0;
    Matrix d_heads; // dLoss / d(raw head activation), same shape as heads
};

namespace detail {

// Adds weight * dL_PI/d(U, L) into columns 0 and 1 of grad.
inline double accumulate_interval_grad(const Matrix& heads, std::span<const double> y,
                                       const LossConfig& cfg, double weight, Matrix& grad) {
    const std::size_t n = heads.rows();
    const double s = cfg.softness;
    std::vector<double> hard(n), lo_term(n), up_term(n);
    double captured = 0.0, width = 0.0, soft_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = heads(i, 0), l = heads(i, 1);
        hard[i] = (l <= y[i] && y[i] <= u) ? 1.0 : 0.0;
        lo_term[i] = s * (y[i] - l);
        up_term[i] = s * (u - y[i]);
        captured += hard[i];
        width += (u - l) * hard[i];
        soft_sum += sigmoid(lo_term[i]) * sigmoid(up_term[i]);
    }
    const double denom = std::max(captured, capture_epsilon);
    const double root_n = std::sqrt(static_cast<double>(n));
    const double gap = std::max(0.0, (1.0 - cfg.alpha) - soft_sum / static_cast<double>(n));
    const double loss = width / denom + root_n * cfg.lambda * gap * gap;

    // d penalty / d k_soft_i
    const double dk = -2.0 * root_n * cfg.lambda * gap / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double sl = sigmoid(lo_term[i]), sl_c = sigmoid(-lo_term[i]);
        const double su = sigmoid(up_term[i]), su_c = sigmoid(-up_term[i]);
        const double dk_du = s * sl * su * su_c;
        const double dk_dl = -s * sl * sl_c * su;
        grad(i, 0) += weight * (hard[i] / denom + dk * dk_du);
        grad(i, 1) += weight * (-hard[i] / denom + dk * dk_dl);
    }
    return loss;
}

} // namespace detail

/// Loss value and its gradient with respect to the raw head activations.
inline HeadGradient loss_gradient(const Matrix& heads, std::span<const double> y, const LossConfig& cfg) {
    const std::size_t n = heads.rows();
    if (n == 0) throw ShapeError("loss_gradient: empty batch");
    require_same_length(n, y.size(), "loss_gradient");
    if (heads.cols() != head_count(cfg.variant)) throw ShapeError("loss_gradient: head count does not match variant");

    HeadGradient g{0.0, Matrix(n, heads.cols())};
    const double inv_n = 1.0 / static_cast<double>(n);

    switch (cfg.variant) {
    case Variant::qd: g.loss = detail::accumulate_interval_grad(heads, y, cfg, 1.0, g.d_heads); break;
    case Variant::piven:
    case Variant::moi: {
        const bool pinned = cfg.variant == Variant::moi;
        const double pi = detail::accumulate_interval_grad(heads, y, cfg, cfg.beta, g.d_heads);
        double lv = 0.0;
        const double w = (1.0 - cfg.beta) * inv_n;
        for (std::size_t i = 0; i < n; ++i) {
            const double u = heads(i, 0), l = heads(i, 1);
            const double v = pinned ? 0.5 : sigmoid(heads(i, 2));
            const double pred = mix(v, u, l);
            lv += point_loss(pred, y[i], cfg.point_loss);
            const double d = w * point_loss_derivative(pred, y[i], cfg.point_loss);
            g.d_heads(i, 0) += d * v;
            g.d_heads(i, 1) += d * (1.0 - v);
            if (!pinned) g.d_heads(i, 2) += d * (u - l) * v * sigmoid(-heads(i, 2));
        }
        g.loss = cfg.beta * pi + (1.0 - cfg.beta) * lv * inv_n;
        break;
    }
    case Variant::poo: {
        const double pi = detail::accumulate_interval_grad(heads, y, cfg, 1.0, g.d_heads);
        double lv = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            lv += point_loss(heads(i, 2), y[i], cfg.point_loss);
            g.d_heads(i, 2) += inv_n * point_loss_derivative(heads(i, 2), y[i], cfg.point_loss);
        }
        g.loss = pi + lv * inv_n;
        break;
    }
    case Variant::gauss_nll: {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mu = heads(i, 0), raw = heads(i, 1);
            const double var = softplus(raw) + variance_floor;
            const double r = y[i] - mu;
            sum += 0.5 * std::log(var) + r * r / (2.0 * var);
            g.d_heads(i, 0) = -r / var * inv_n;
            const double d_var = 0.5 / var - r * r / (2.0 * var * var);
            g.d_heads(i, 1) = d_var * sigmoid(raw) * inv_n;
        }
        g.loss = sum * inv_n;
        break;
    }
    }
    return g;
}

} // namespace piven
