#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "piven/error.hpp"
#include "piven/loss.hpp"

namespace piven {

/// Standard normal quantile. Acklam's rational approximation followed by one
/// Halley step against erfc, which brings the error down to ~1e-15.
inline double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("inverse_normal_cdf: p must lie in (0,1)");
    static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                            1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                            6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                            -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                            3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x = 0.0;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

/// Two-sided z score for confidence level 1 - alpha.
inline double z_score(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("z_score: alpha must lie in (0,1)");
    return inverse_normal_cdf(1.0 - 0.5 * alpha);
}

struct EnsembleOutput {
    std::vector<double> upper;
    std::vector<double> lower;
    std::vector<double> value;
    std::vector<double> sigma_upper;
    std::vector<double> sigma_lower;

    std::size_t size() const noexcept { return upper.size(); }
};

namespace detail {

inline std::size_t common_size(std::span<const std::size_t> sizes, const char* what) {
    if (sizes.empty()) throw ConfigError(std::string(what) + ": need at least one member");
    for (auto s : sizes) {
        if (s != sizes.front()) throw ShapeError(std::string(what) + ": members disagree on sample count");
    }
    return sizes.front();
}

// Mean and sample standard deviation (divisor m - 1; zero for m = 1).
struct Moments {
    double mean;
    double sd;
};

// Deviations are taken from the first member, so identical members give an
// exact mean and a zero spread.
template <typename Get>
Moments member_moments(std::size_t m, Get&& get) {
    const double ref = get(0);
    double shift = 0.0;
    for (std::size_t j = 1; j < m; ++j) shift += get(j) - ref;
    shift /= static_cast<double>(m);
    const double mean = ref + shift;
    if (m == 1) return {mean, 0.0};
    double ss = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double d = (get(j) - ref) - shift;
        ss += d * d;
    }
    return {mean, std::sqrt(ss / static_cast<double>(m - 1))};
}

} // namespace detail

/// Widens the member-mean bounds by z * across-member spread of each bound;
/// the value is the mean of the member value predictions.
inline EnsembleOutput aggregate_pi(std::span<const PIOutput> members, double alpha) {
    std::vector<std::size_t> sizes;
    for (const auto& m : members) {
        require_same_length(m.upper.size(), m.lower.size(), "aggregate_pi");
        require_same_length(m.upper.size(), m.value.size(), "aggregate_pi");
        sizes.push_back(m.size());
    }
    const std::size_t n = detail::common_size(sizes, "aggregate_pi");
    const std::size_t m = members.size();
    const double z = z_score(alpha);

    EnsembleOutput out;
    out.upper.resize(n);
    out.lower.resize(n);
    out.value.resize(n);
    out.sigma_upper.resize(n);
    out.sigma_lower.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto up = detail::member_moments(m, [&](std::size_t j) { return members[j].upper[i]; });
        const auto lo = detail::member_moments(m, [&](std::size_t j) { return members[j].lower[i]; });
        const auto val = detail::member_moments(m, [&](std::size_t j) { return members[j].value[i]; });
        out.upper[i] = up.mean + z * up.sd;
        out.lower[i] = lo.mean - z * lo.sd;
        out.value[i] = val.mean;
        out.sigma_upper[i] = up.sd;
        out.sigma_lower[i] = lo.sd;
    }
    return out;
}

/// Moment-matched Gaussian mixture of the members, turned into mu +- z * sigma.
inline EnsembleOutput aggregate_gaussian(std::span<const GaussianOutput> members, double alpha) {
    std::vector<std::size_t> sizes;
    for (const auto& m : members) {
        require_same_length(m.mean.size(), m.variance.size(), "aggregate_gaussian");
        sizes.push_back(m.size());
    }
    const std::size_t n = detail::common_size(sizes, "aggregate_gaussian");
    const double m = static_cast<double>(members.size());
    const double z = z_score(alpha);

    EnsembleOutput out;
    out.upper.resize(n);
    out.lower.resize(n);
    out.value.resize(n);
    out.sigma_upper.resize(n);
    out.sigma_lower.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0, second = 0.0;
        for (const auto& member : members) {
            if (!(member.variance[i] > 0.0)) throw DataError("aggregate_gaussian: non-positive variance");
            mean += member.mean[i];
            second += member.variance[i] + member.mean[i] * member.mean[i];
        }
        mean /= m;
        const double var = std::max(second / m - mean * mean, 0.0);
        const double sd = std::sqrt(var);
        out.upper[i] = mean + z * sd;
        out.lower[i] = mean - z * sd;
        out.value[i] = mean;
        out.sigma_upper[i] = sd;
        out.sigma_lower[i] = sd;
    }
    return out;
}

} // namespace piven
