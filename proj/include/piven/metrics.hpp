#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "piven/error.hpp"
#include "piven/loss.hpp"

namespace piven {

struct MetricsRecord {
    double picp = 0.0;
    double mpiw = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    std::size_t n = 0;

    bool operator==(const MetricsRecord&) const = default;
};

namespace detail {
inline void require_nonempty(std::size_t n, const char* what) {
    if (n == 0) throw DataError(std::string(what) + ": empty input");
}
} // namespace detail

/// Fraction of targets inside their (closed) interval.
inline double picp(std::span<const double> y, std::span<const double> lower, std::span<const double> upper) {
    detail::require_nonempty(y.size(), "picp");
    const auto k = k_hard(y, lower, upper);
    return mean_of(k);
}

inline double mpiw(std::span<const double> lower, std::span<const double> upper) {
    detail::require_nonempty(lower.size(), "mpiw");
    require_same_length(lower.size(), upper.size(), "mpiw");
    double sum = 0.0;
    for (std::size_t i = 0; i < lower.size(); ++i) sum += upper[i] - lower[i];
    return sum / static_cast<double>(lower.size());
}

inline double rmse(std::span<const double> prediction, std::span<const double> y) {
    detail::require_nonempty(y.size(), "rmse");
    require_same_length(prediction.size(), y.size(), "rmse");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = prediction[i] - y[i];
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(y.size()));
}

inline double mae(std::span<const double> prediction, std::span<const double> y) {
    detail::require_nonempty(y.size(), "mae");
    require_same_length(prediction.size(), y.size(), "mae");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(prediction[i] - y[i]);
    return sum / static_cast<double>(y.size());
}

inline MetricsRecord evaluate_metrics(std::span<const double> y, std::span<const double> lower,
                                      std::span<const double> upper, std::span<const double> value) {
    return {picp(y, lower, upper), mpiw(lower, upper), rmse(value, y), mae(value, y), y.size()};
}

/// Mean and standard error of the mean; stderr is absent for a single observation.
struct MeanStderr {
    double mean = 0.0;
    std::optional<double> standard_error;

    bool operator==(const MeanStderr&) const = default;
};

inline MeanStderr mean_stderr(std::span<const double> values) {
    detail::require_nonempty(values.size(), "mean_stderr");
    const double m = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / m;
    if (values.size() == 1) return {mean, std::nullopt};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (m - 1.0)) / std::sqrt(m)};
}

struct AggregateMetrics {
    MeanStderr picp, mpiw, rmse, mae;
    std::size_t splits = 0;

    bool operator==(const AggregateMetrics&) const = default;
};

inline AggregateMetrics aggregate_splits(std::span<const MetricsRecord> records) {
    detail::require_nonempty(records.size(), "aggregate_splits");
    std::vector<double> picps, mpiws, rmses, maes;
    for (const auto& r : records) {
        picps.push_back(r.picp);
        mpiws.push_back(r.mpiw);
        rmses.push_back(r.rmse);
        maes.push_back(r.mae);
    }
    return {mean_stderr(picps), mean_stderr(mpiws), mean_stderr(rmses), mean_stderr(maes), records.size()};
}

} // namespace piven
