#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "piven/config.hpp"
#include "piven/error.hpp"
#include "piven/experiment.hpp"
#include "piven/metrics.hpp"

// Report layout (format_version 1), written into one directory:
//   report.json           nested record: config echo, per-split rows, aggregates
//   <metric>.csv          split,normalized,original for picp/mpiw/rmse/mae
//   predictions.csv       split,y,lower,upper,value in original units
// Sweeps write sweep.json plus one <method>_<x>.csv series per method, where x is
// alpha for alpha sweeps and beta/lambda for hyperparameter sweeps.

namespace piven {

inline constexpr int report_format_version = 1;

namespace detail {

inline nlohmann::json to_json(const MetricsRecord& m) {
    return {{"picp", m.picp}, {"mpiw", m.mpiw}, {"rmse", m.rmse}, {"mae", m.mae}, {"n", m.n}};
}

inline MetricsRecord metrics_from_json(const nlohmann::json& j) {
    return {j.at("picp").get<double>(), j.at("mpiw").get<double>(), j.at("rmse").get<double>(),
            j.at("mae").get<double>(), j.at("n").get<std::size_t>()};
}

inline nlohmann::json to_json(const MeanStderr& m) {
    nlohmann::json j{{"mean", m.mean}};
    j["stderr"] = m.standard_error ? nlohmann::json(*m.standard_error) : nlohmann::json(nullptr);
    return j;
}

inline MeanStderr mean_stderr_from_json(const nlohmann::json& j) {
    MeanStderr m{j.at("mean").get<double>(), std::nullopt};
    if (!j.at("stderr").is_null()) m.standard_error = j.at("stderr").get<double>();
    return m;
}

inline nlohmann::json to_json(const std::optional<AggregateMetrics>& a) {
    if (!a) return nullptr;
    return {{"picp", to_json(a->picp)}, {"mpiw", to_json(a->mpiw)}, {"rmse", to_json(a->rmse)},
            {"mae", to_json(a->mae)}, {"splits", a->splits}};
}

inline std::optional<AggregateMetrics> aggregate_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return AggregateMetrics{mean_stderr_from_json(j.at("picp")), mean_stderr_from_json(j.at("mpiw")),
                            mean_stderr_from_json(j.at("rmse")), mean_stderr_from_json(j.at("mae")),
                            j.at("splits").get<std::size_t>()};
}

inline nlohmann::json to_json(const SplitResult& s) {
    nlohmann::json j{{"index", s.index},
                     {"normalized", to_json(s.normalized)},
                     {"original", to_json(s.original)},
                     {"member_epochs", s.member_epochs},
                     {"loss_curve", s.loss_curve},
                     {"seconds", s.seconds}};
    j["error"] = s.error ? nlohmann::json(*s.error) : nlohmann::json(nullptr);
    j["predictions"] = {{"y", s.predictions.y},
                        {"lower", s.predictions.lower},
                        {"upper", s.predictions.upper},
                        {"value", s.predictions.value}};
    return j;
}

inline SplitResult split_from_json(const nlohmann::json& j) {
    SplitResult s;
    s.index = j.at("index").get<std::size_t>();
    s.normalized = metrics_from_json(j.at("normalized"));
    s.original = metrics_from_json(j.at("original"));
    s.member_epochs = j.at("member_epochs").get<std::vector<std::size_t>>();
    s.loss_curve = j.at("loss_curve").get<std::vector<double>>();
    s.seconds = j.at("seconds").get<double>();
    if (!j.at("error").is_null()) s.error = j.at("error").get<std::string>();
    const auto& p = j.at("predictions");
    s.predictions = {p.at("y").get<std::vector<double>>(), p.at("lower").get<std::vector<double>>(),
                     p.at("upper").get<std::vector<double>>(), p.at("value").get<std::vector<double>>()};
    return s;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing", path.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

inline void close_output(std::ofstream& out, const std::filesystem::path& path) {
    out.close();
    if (!out) throw IoError("write failed", path.string());
}

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + ec.message(), dir.string());
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
    close_output(out, path);
}

} // namespace detail

inline nlohmann::json to_json(const RunReport& r) {
    nlohmann::json splits = nlohmann::json::array();
    for (const auto& s : r.splits) splits.push_back(detail::to_json(s));
    return {{"format_version", r.format_version},
            {"kind", "run"},
            {"uncertainty", "standard error of the mean across splits"},
            {"units", {{"normalized", "targets standardized on the training portion"},
                       {"original", "targets in dataset units"}}},
            {"config", r.config},
            {"splits", splits},
            {"aggregate", {{"normalized", detail::to_json(r.normalized)}, {"original", detail::to_json(r.original)}}},
            {"partial", r.partial},
            {"wall_seconds", r.wall_seconds}};
}

inline RunReport run_report_from_json(const nlohmann::json& j) {
    try {
        RunReport r;
        r.format_version = j.at("format_version").get<int>();
        if (r.format_version != report_format_version) {
            throw DataError("unsupported report format version " + std::to_string(r.format_version));
        }
        r.config = j.at("config");
        for (const auto& s : j.at("splits")) r.splits.push_back(detail::split_from_json(s));
        r.normalized = detail::aggregate_from_json(j.at("aggregate").at("normalized"));
        r.original = detail::aggregate_from_json(j.at("aggregate").at("original"));
        r.partial = j.at("partial").get<bool>();
        r.wall_seconds = j.at("wall_seconds").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed run report: ") + e.what());
    }
}

inline nlohmann::json to_json(const SweepReport& s) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : s.cells) {
        cells.push_back({{"method", c.method},
                         {"alpha", c.alpha},
                         {"beta", c.beta},
                         {"lambda", c.lambda},
                         {"normalized", detail::to_json(c.normalized)},
                         {"original", detail::to_json(c.original)},
                         {"partial", c.partial}});
    }
    nlohmann::json j{{"format_version", s.format_version}, {"kind", s.kind},     {"config", s.config},
                     {"cells", cells},                     {"wall_seconds", s.wall_seconds}};
    if (s.kind == "alpha") {
        nlohmann::json imp = nlohmann::json::array();
        for (auto [a, v] : mpiw_improvement(s)) imp.push_back({{"alpha", a}, {"mpiw_improvement", v}});
        j["mpiw_improvement"] = imp;
    }
    return j;
}

inline SweepReport sweep_report_from_json(const nlohmann::json& j) {
    try {
        SweepReport s;
        s.format_version = j.at("format_version").get<int>();
        if (s.format_version != report_format_version) {
            throw DataError("unsupported report format version " + std::to_string(s.format_version));
        }
        s.kind = j.at("kind").get<std::string>();
        s.config = j.at("config");
        for (const auto& c : j.at("cells")) {
            s.cells.push_back({c.at("method").get<std::string>(), c.at("alpha").get<double>(),
                               c.at("beta").get<double>(), c.at("lambda").get<double>(),
                               detail::aggregate_from_json(c.at("normalized")),
                               detail::aggregate_from_json(c.at("original")), c.at("partial").get<bool>()});
        }
        s.wall_seconds = j.at("wall_seconds").get<double>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed sweep report: ") + e.what());
    }
}

/// Writes the run report directory; returns the paths written.
inline std::vector<std::filesystem::path> emit_report(const RunReport& r, const std::filesystem::path& dir) {
    detail::ensure_directory(dir);
    std::vector<std::filesystem::path> written;
    const auto json_path = dir / "report.json";
    detail::write_json(to_json(r), json_path);
    written.push_back(json_path);

    const std::pair<const char*, double MetricsRecord::*> columns[] = {
        {"picp", &MetricsRecord::picp}, {"mpiw", &MetricsRecord::mpiw},
        {"rmse", &MetricsRecord::rmse}, {"mae", &MetricsRecord::mae}};
    for (const auto& [name, field] : columns) {
        const auto path = dir / (std::string(name) + ".csv");
        auto out = detail::open_output(path);
        out << "split,normalized,original\n";
        for (const auto& s : r.splits) {
            if (s.error) continue;
            out << s.index << ',' << s.normalized.*field << ',' << s.original.*field << '\n';
        }
        detail::close_output(out, path);
        written.push_back(path);
    }

    bool any_predictions = false;
    for (const auto& s : r.splits) any_predictions = any_predictions || !s.predictions.y.empty();
    if (any_predictions) {
        const auto path = dir / "predictions.csv";
        auto out = detail::open_output(path);
        out << "split,y,lower,upper,value\n";
        for (const auto& s : r.splits) {
            const auto& p = s.predictions;
            for (std::size_t i = 0; i < p.y.size(); ++i) {
                out << s.index << ',' << p.y[i] << ',' << p.lower[i] << ',' << p.upper[i] << ',' << p.value[i] << '\n';
            }
        }
        detail::close_output(out, path);
        written.push_back(path);
    }
    return written;
}

/// Writes sweep.json plus one plot-ready series file per method.
inline std::vector<std::filesystem::path> emit_report(const SweepReport& s, const std::filesystem::path& dir) {
    detail::ensure_directory(dir);
    std::vector<std::filesystem::path> written;
    const auto json_path = dir / "sweep.json";
    detail::write_json(to_json(s), json_path);
    written.push_back(json_path);

    std::vector<std::string> methods;
    for (const auto& c : s.cells) {
        if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
    }
    const bool alpha = s.kind == "alpha";
    for (const auto& m : methods) {
        const auto path = dir / (m + (alpha ? "_alpha.csv" : "_beta_lambda.csv"));
        auto out = detail::open_output(path);
        out << (alpha ? "alpha" : "beta,lambda") << ",picp,mpiw,rmse,mae,mpiw_stderr,rmse_stderr\n";
        for (const auto& c : s.cells) {
            if (c.method != m || !c.normalized) continue;
            if (alpha) {
                out << c.alpha;
            } else {
                out << c.beta << ',' << c.lambda;
            }
            const auto se = [](const MeanStderr& v) { return v.standard_error.value_or(0.0); };
            out << ',' << c.normalized->picp.mean << ',' << c.normalized->mpiw.mean << ',' << c.original->rmse.mean
                << ',' << c.original->mae.mean << ',' << se(c.normalized->mpiw) << ',' << se(c.original->rmse) << '\n';
        }
        detail::close_output(out, path);
        written.push_back(path);
    }
    return written;
}

inline RunReport read_run_report(const std::filesystem::path& path) { return run_report_from_json(read_json_file(path)); }

inline SweepReport read_sweep_report(const std::filesystem::path& path) {
    return sweep_report_from_json(read_json_file(path));
}

} // namespace piven
