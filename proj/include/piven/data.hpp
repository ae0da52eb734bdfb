#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "piven/error.hpp"
#include "piven/matrix.hpp"
#include "piven/random.hpp"

namespace piven {

struct Dataset {
    Matrix features;
    std::vector<double> targets;
    std::vector<std::string> feature_names; // empty when the source had no header
    std::string target_name;
    std::string source_tag;

    std::size_t size() const noexcept { return targets.size(); }
    std::size_t dim() const noexcept { return features.cols(); }
};

inline Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
    return {data.features.select_rows(rows), select(data.targets, rows), data.feature_names, data.target_name,
            data.source_tag};
}

// ---------------------------------------------------------------------------
// Skew-normal noise

/// delta = a / sqrt(1 + a^2), the shape-to-correlation map of the skew-normal.
inline double skew_normal_delta(double skew_alpha) { return skew_alpha / std::sqrt(1.0 + skew_alpha * skew_alpha); }

/// One draw from the density 2 phi(x) Phi(a x), via |z0| mixed with an independent z1.
inline double sample_skew_normal(double skew_alpha, Rng& rng) {
    if (!std::isfinite(skew_alpha)) throw ConfigError("sample_skew_normal: skewness must be finite");
    const double delta = skew_normal_delta(skew_alpha);
    const double z0 = rng.normal();
    const double z1 = rng.normal();
    return delta * std::abs(z0) + std::sqrt(1.0 - delta * delta) * z1;
}

inline double skew_normal_mean(double skew_alpha) {
    return skew_normal_delta(skew_alpha) * std::sqrt(2.0 / std::numbers::pi);
}

inline double skew_normal_stddev(double skew_alpha) {
    const double m = skew_normal_mean(skew_alpha);
    return std::sqrt(1.0 - m * m);
}

// ---------------------------------------------------------------------------
// Synthetic generators

enum class Generator { sine, skew_normal };

inline std::string to_string(Generator g) { return g == Generator::sine ? "sine" : "skew_normal"; }

inline Generator parse_generator(std::string_view name) {
    if (name == "sine") return Generator::sine;
    if (name == "skew_normal" || name == "skewnormal") return Generator::skew_normal;
    throw ConfigError("unknown generator '" + std::string(name) + "'");
}

struct SyntheticSpec {
    Generator kind = Generator::sine;
    std::size_t n = 100;
    double x_low = -2.0;
    double x_high = 2.0;
    double noise_scale = 0.3;
    double skew_alpha = 100.0;
    std::uint64_t seed = 1;
};

/// x ~ U[x_low, x_high]; y = f(x) + noise_scale * xi, where xi is a skew-normal
/// draw standardized to zero mean and unit variance. f is 1.5 sin(x) for the
/// sine task and identically zero for the skew-normal task.
inline Dataset generate(const SyntheticSpec& spec) {
    if (spec.n == 0) throw ConfigError("generator: n must be at least 1");
    if (!(spec.x_low < spec.x_high)) throw ConfigError("generator: x_low must be below x_high");
    if (!(spec.noise_scale >= 0.0)) throw ConfigError("generator: noise scale must be non-negative");

    Rng rng(spec.seed);
    const double mu = skew_normal_mean(spec.skew_alpha);
    const double sd = skew_normal_stddev(spec.skew_alpha);
    Dataset data{Matrix(spec.n, 1), std::vector<double>(spec.n), {"x"}, "y", to_string(spec.kind)};
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double x = rng.uniform(spec.x_low, spec.x_high);
        const double xi = (sample_skew_normal(spec.skew_alpha, rng) - mu) / sd;
        const double mean = spec.kind == Generator::sine ? 1.5 * std::sin(x) : 0.0;
        data.features(i, 0) = x;
        data.targets[i] = spec.noise_scale == 0.0 ? mean : mean + spec.noise_scale * xi;
    }
    return data;
}

inline Dataset gen_sine(std::size_t n, double x_low, double x_high, double noise_scale, double skew_alpha,
                        std::uint64_t seed) {
    return generate({Generator::sine, n, x_low, x_high, noise_scale, skew_alpha, seed});
}

// ---------------------------------------------------------------------------
// Delimited text

/// Target column by zero-based index (negative counts from the end) or header name.
using ColumnRef = std::variant<std::ptrdiff_t, std::string>;

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::string_view unquote(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        s = s.substr(1, s.size() - 2);
    }
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
    std::vector<std::string_view> fields;
    if (delimiter == ' ') {
        std::size_t pos = 0;
        while (pos < line.size()) {
            pos = line.find_first_not_of(" \t", pos);
            if (pos == std::string_view::npos) break;
            const auto end = line.find_first_of(" \t", pos);
            fields.push_back(line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
            pos = end;
        }
        return fields;
    }
    std::size_t start = 0;
    while (true) {
        const auto end = line.find(delimiter, start);
        fields.push_back(unquote(line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start)));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return fields;
}

inline std::optional<double> parse_number(std::string_view s) {
    s = unquote(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

} // namespace detail

/// Reads numeric rows of equal arity. A first row that does not parse as
/// numbers is taken as the header. Blank lines are skipped.
inline Dataset load_delimited(const std::filesystem::path& path, const ColumnRef& target = std::ptrdiff_t{-1},
                              char delimiter = ',') {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset", path.string());

    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t arity = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_fields(line, delimiter);
        if (rows.empty() && header.empty()) {
            const bool numeric = std::all_of(fields.begin(), fields.end(),
                                             [](std::string_view f) { return detail::parse_number(f).has_value(); });
            if (!numeric) {
                for (auto f : fields) header.emplace_back(detail::unquote(f));
                arity = header.size();
                continue;
            }
        }
        if (arity == 0) arity = fields.size();
        if (fields.size() != arity) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(arity) +
                            " fields, found " + std::to_string(fields.size()));
        }
        std::vector<double> row(arity);
        for (std::size_t c = 0; c < arity; ++c) {
            const auto v = detail::parse_number(fields[c]);
            if (!v || !std::isfinite(*v)) {
                throw DataError(path.string() + ":" + std::to_string(line_no) + ": column " + std::to_string(c + 1) +
                                ": not a finite number '" + std::string(fields[c]) + "'");
            }
            row[c] = *v;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(path.string() + ": no data rows");
    if (arity < 2) throw DataError(path.string() + ": need at least one feature and one target column");

    std::size_t target_col = 0;
    if (const auto* idx = std::get_if<std::ptrdiff_t>(&target)) {
        const auto a = static_cast<std::ptrdiff_t>(arity);
        const std::ptrdiff_t resolved = *idx < 0 ? a + *idx : *idx;
        if (resolved < 0 || resolved >= a) {
            throw ConfigError("target column " + std::to_string(*idx) + " out of range for " + std::to_string(arity) +
                              " columns");
        }
        target_col = static_cast<std::size_t>(resolved);
    } else {
        const auto& name = std::get<std::string>(target);
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError("target column '" + name + "' not found in header of " + path.string());
        target_col = static_cast<std::size_t>(it - header.begin());
    }

    Dataset data{Matrix(rows.size(), arity - 1), std::vector<double>(rows.size()), {}, {}, path.filename().string()};
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::size_t out = 0;
        for (std::size_t c = 0; c < arity; ++c) {
            if (c == target_col) {
                data.targets[r] = rows[r][c];
            } else {
                data.features(r, out++) = rows[r][c];
            }
        }
    }
    if (!header.empty()) {
        for (std::size_t c = 0; c < arity; ++c) {
            if (c == target_col) {
                data.target_name = header[c];
            } else {
                data.feature_names.push_back(header[c]);
            }
        }
    }
    return data;
}

/// Writes features then the target as the last column, with a header line.
inline void write_delimited(const Dataset& data, const std::filesystem::path& path, char delimiter = ',') {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset", path.string());
    out.precision(17);
    for (std::size_t c = 0; c < data.dim(); ++c) {
        out << (c < data.feature_names.size() ? data.feature_names[c] : "x" + std::to_string(c)) << delimiter;
    }
    out << (data.target_name.empty() ? "y" : data.target_name) << '\n';
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (double v : data.features.row(r)) out << v << delimiter;
        out << data.targets[r] << '\n';
    }
    if (!out) throw IoError("write failed", path.string());
}

// ---------------------------------------------------------------------------
// Standardization

struct NormStats {
    std::vector<double> feature_mean;
    std::vector<double> feature_std;
    double target_mean = 0.0;
    double target_std = 1.0;
};

namespace detail {
inline std::pair<double, double> mean_std(std::span<const double> x) {
    double sum = 0.0;
    for (double v : x) sum += v;
    const double mean = sum / static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(x.size()));
    return {mean, sd > 0.0 ? sd : 1.0};
}
} // namespace detail

/// Per-column mean and population standard deviation; constant columns get std 1.
inline NormStats fit_normalize(const Dataset& train) {
    if (train.size() == 0) throw DataError("fit_normalize: empty training set");
    NormStats stats;
    std::vector<double> column(train.size());
    for (std::size_t c = 0; c < train.dim(); ++c) {
        for (std::size_t r = 0; r < train.size(); ++r) column[r] = train.features(r, c);
        const auto [m, s] = detail::mean_std(column);
        stats.feature_mean.push_back(m);
        stats.feature_std.push_back(s);
    }
    std::tie(stats.target_mean, stats.target_std) = detail::mean_std(train.targets);
    return stats;
}

inline Dataset apply_normalize(const Dataset& data, const NormStats& stats) {
    if (stats.feature_mean.size() != data.dim()) throw ShapeError("apply_normalize: stats do not match feature count");
    Dataset out = data;
    for (std::size_t r = 0; r < out.size(); ++r) {
        auto row = out.features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - stats.feature_mean[c]) / stats.feature_std[c];
        out.targets[r] = (out.targets[r] - stats.target_mean) / stats.target_std;
    }
    return out;
}

inline Dataset denormalize(const Dataset& data, const NormStats& stats) {
    if (stats.feature_mean.size() != data.dim()) throw ShapeError("denormalize: stats do not match feature count");
    Dataset out = data;
    for (std::size_t r = 0; r < out.size(); ++r) {
        auto row = out.features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = row[c] * stats.feature_std[c] + stats.feature_mean[c];
        out.targets[r] = out.targets[r] * stats.target_std + stats.target_mean;
    }
    return out;
}

/// Maps normalized target-scale values (targets, bounds, predictions) back to original units.
inline std::vector<double> denormalize_targets(std::span<const double> values, const NormStats& stats) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * stats.target_std + stats.target_mean;
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
    std::uint64_t split_index = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded shuffle; the first ceil((1 - f) n) shuffled rows train, the rest test.
inline SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
    if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) throw ConfigError("split: test fraction must lie in (0,1)");
    if (n < 2) throw DataError("split: need at least two rows");
    Rng rng(derive_seed(spec.seed, spec.split_index));
    auto perm = rng.permutation(n);
    auto n_train = static_cast<std::size_t>(std::ceil((1.0 - spec.test_fraction) * static_cast<double>(n) - 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    return {std::vector<std::size_t>(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train)),
            std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end())};
}

inline std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec) {
    const auto idx = split_indices(data.size(), spec);
    return {subset(data, idx.train), subset(data, idx.test)};
}

} // namespace piven
