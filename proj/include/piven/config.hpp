#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "piven/data.hpp"
#include "piven/error.hpp"
#include "piven/loss.hpp"
#include "piven/nn.hpp"

namespace piven {

struct DatasetSpec {
    std::string name;                     // catalog name or free label
    std::optional<SyntheticSpec> synthetic; // set for generated data
    std::size_t synthetic_test_n = 1000;  // held-out draws per realization
    std::filesystem::path path;           // delimited file for tabular data
    ColumnRef target = std::ptrdiff_t{-1};
    char delimiter = ',';
};

struct ModelSpec {
    std::vector<std::size_t> hidden{50};
    HeadBias head_bias{};
    std::uint64_t seed = 1;
};

struct OptimizerSpec {
    double learning_rate = 0.02;
    double decay = 0.995;
    std::size_t batch_size = 100;
    std::size_t max_epochs = 1000;
    std::size_t patience = 50;
    double validation_fraction = 0.1; // 0 disables early stopping
};

struct SplitPlan {
    std::size_t count = 20;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DatasetSpec dataset;
    ModelSpec model;
    LossConfig loss;
    OptimizerSpec optimizer;
    std::size_t ensemble_size = 5;
    SplitPlan splits;
    std::filesystem::path output_dir = "results";
    bool persist_predictions = true;
    unsigned threads = 0; // 0 = hardware concurrency

    void validate() const {
        loss.validate();
        if (!dataset.synthetic && dataset.path.empty()) throw ConfigError("dataset: need a generator or a file path");
        if (dataset.synthetic) {
            const auto& s = *dataset.synthetic;
            if (s.n == 0) throw ConfigError("dataset: n must be positive");
            if (!(s.x_low < s.x_high)) throw ConfigError("dataset: x_low must be below x_high");
            if (dataset.synthetic_test_n == 0) throw ConfigError("dataset: test_n must be positive");
        }
        for (auto h : model.hidden) {
            if (h == 0) throw ConfigError("model: hidden sizes must be positive");
        }
        if (!(optimizer.learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be positive");
        if (!(optimizer.decay > 0.0 && optimizer.decay <= 1.0)) throw ConfigError("optimizer: decay must lie in (0,1]");
        if (optimizer.batch_size == 0) throw ConfigError("optimizer: batch size must be positive");
        if (optimizer.max_epochs == 0) throw ConfigError("optimizer: max_epochs must be positive");
        if (!(optimizer.validation_fraction >= 0.0 && optimizer.validation_fraction < 1.0)) {
            throw ConfigError("optimizer: validation fraction must lie in [0,1)");
        }
        if (ensemble_size == 0) throw ConfigError("ensemble size must be at least 1");
        if (splits.count == 0) throw ConfigError("splits: count must be at least 1");
        if (!(splits.test_fraction > 0.0 && splits.test_fraction < 1.0)) {
            throw ConfigError("splits: test fraction must lie in (0,1)");
        }
    }
};

// ---------------------------------------------------------------------------
// JSON mapping. Unknown keys are rejected so typos surface as config errors.

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

} // namespace detail

inline nlohmann::json to_json(const LossConfig& c) {
    return {{"alpha", c.alpha},     {"lambda", c.lambda},           {"softness", c.softness},
            {"beta", c.beta},       {"variant", to_string(c.variant)}, {"point_loss", to_string(c.point_loss)}};
}

inline void merge(LossConfig& c, const nlohmann::json& j) {
    detail::reject_unknown(j, {"alpha", "lambda", "softness", "beta", "variant", "point_loss"}, "loss");
    detail::read_if(j, "alpha", c.alpha);
    detail::read_if(j, "lambda", c.lambda);
    detail::read_if(j, "softness", c.softness);
    detail::read_if(j, "beta", c.beta);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("point_loss")) c.point_loss = parse_point_loss(j.at("point_loss").get<std::string>());
}

inline nlohmann::json to_json(const SyntheticSpec& s) {
    return {{"generator", to_string(s.kind)}, {"n", s.n},
            {"x_low", s.x_low},               {"x_high", s.x_high},
            {"noise_scale", s.noise_scale},   {"skew_alpha", s.skew_alpha},
            {"seed", s.seed}};
}

inline nlohmann::json to_json(const DatasetSpec& d) {
    nlohmann::json j{{"name", d.name}};
    if (d.synthetic) {
        j["synthetic"] = to_json(*d.synthetic);
        j["test_n"] = d.synthetic_test_n;
    } else {
        j["path"] = d.path.string();
        if (const auto* idx = std::get_if<std::ptrdiff_t>(&d.target)) {
            j["target"] = *idx;
        } else {
            j["target"] = std::get<std::string>(d.target);
        }
        j["delimiter"] = std::string(1, d.delimiter);
    }
    return j;
}

inline void merge(DatasetSpec& d, const nlohmann::json& j) {
    detail::reject_unknown(j, {"name", "synthetic", "test_n", "path", "target", "delimiter"}, "dataset");
    detail::read_if(j, "name", d.name);
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        detail::reject_unknown(s, {"generator", "n", "x_low", "x_high", "noise_scale", "skew_alpha", "seed"},
                               "dataset.synthetic");
        SyntheticSpec spec = d.synthetic.value_or(SyntheticSpec{});
        if (s.contains("generator")) spec.kind = parse_generator(s.at("generator").get<std::string>());
        detail::read_if(s, "n", spec.n);
        detail::read_if(s, "x_low", spec.x_low);
        detail::read_if(s, "x_high", spec.x_high);
        detail::read_if(s, "noise_scale", spec.noise_scale);
        detail::read_if(s, "skew_alpha", spec.skew_alpha);
        detail::read_if(s, "seed", spec.seed);
        d.synthetic = spec;
        d.path.clear();
    }
    detail::read_if(j, "test_n", d.synthetic_test_n);
    if (j.contains("path")) {
        d.path = j.at("path").get<std::string>();
        d.synthetic.reset();
    }
    if (j.contains("target")) {
        const auto& t = j.at("target");
        if (t.is_number_integer()) {
            d.target = t.get<std::ptrdiff_t>();
        } else if (t.is_string()) {
            d.target = t.get<std::string>();
        } else {
            throw ConfigError("dataset.target must be an integer index or a column name");
        }
    }
    if (j.contains("delimiter")) {
        const auto s = j.at("delimiter").get<std::string>();
        if (s.size() != 1) throw ConfigError("dataset.delimiter must be a single character");
        d.delimiter = s[0];
    }
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    return {
        {"format_version", 1},
        {"name", c.name},
        {"dataset", to_json(c.dataset)},
        {"model",
         {{"hidden", c.model.hidden},
          {"head_bias", {c.model.head_bias.upper, c.model.head_bias.lower}},
          {"seed", c.model.seed}}},
        {"loss", to_json(c.loss)},
        {"optimizer",
         {{"learning_rate", c.optimizer.learning_rate},
          {"decay", c.optimizer.decay},
          {"batch_size", c.optimizer.batch_size},
          {"max_epochs", c.optimizer.max_epochs},
          {"patience", c.optimizer.patience},
          {"validation_fraction", c.optimizer.validation_fraction}}},
        {"ensemble_size", c.ensemble_size},
        {"splits", {{"count", c.splits.count}, {"test_fraction", c.splits.test_fraction}, {"seed", c.splits.seed}}},
        {"output_dir", c.output_dir.string()},
        {"persist_predictions", c.persist_predictions},
        {"threads", c.threads},
    };
}

/// Overlays the keys present in `j` onto `c`.
inline void merge(ExperimentConfig& c, const nlohmann::json& j) {
    detail::reject_unknown(j,
                           {"format_version", "name", "preset", "dataset", "model", "loss", "optimizer",
                            "ensemble_size", "splits", "output_dir", "persist_predictions", "threads"},
                           "config");
    if (j.contains("format_version") && j.at("format_version") != 1) {
        throw ConfigError("unsupported config format_version");
    }
    detail::read_if(j, "name", c.name);
    if (j.contains("dataset")) merge(c.dataset, j.at("dataset"));
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown(m, {"hidden", "head_bias", "seed"}, "model");
        detail::read_if(m, "hidden", c.model.hidden);
        detail::read_if(m, "seed", c.model.seed);
        if (m.contains("head_bias")) {
            const auto hb = m.at("head_bias").get<std::vector<double>>();
            if (hb.size() != 2) throw ConfigError("model.head_bias must be [upper, lower]");
            c.model.head_bias = {hb[0], hb[1]};
        }
    }
    if (j.contains("loss")) merge(c.loss, j.at("loss"));
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        detail::reject_unknown(
            o, {"learning_rate", "decay", "batch_size", "max_epochs", "patience", "validation_fraction"}, "optimizer");
        detail::read_if(o, "learning_rate", c.optimizer.learning_rate);
        detail::read_if(o, "decay", c.optimizer.decay);
        detail::read_if(o, "batch_size", c.optimizer.batch_size);
        detail::read_if(o, "max_epochs", c.optimizer.max_epochs);
        detail::read_if(o, "patience", c.optimizer.patience);
        detail::read_if(o, "validation_fraction", c.optimizer.validation_fraction);
    }
    detail::read_if(j, "ensemble_size", c.ensemble_size);
    if (j.contains("splits")) {
        const auto& s = j.at("splits");
        detail::reject_unknown(s, {"count", "test_fraction", "seed"}, "splits");
        detail::read_if(s, "count", c.splits.count);
        detail::read_if(s, "test_fraction", c.splits.test_fraction);
        detail::read_if(s, "seed", c.splits.seed);
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    detail::read_if(j, "persist_predictions", c.persist_predictions);
    detail::read_if(j, "threads", c.threads);
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    merge(c, j);
    return c;
}

// ---------------------------------------------------------------------------
// Bundled presets

/// Benchmark names with tabular files under <data_dir>/uci/<name>.csv.
inline const std::vector<std::string>& uci_dataset_names() {
    static const std::vector<std::string> names{"boston", "concrete", "energy", "kin8nm", "naval",
                                                "power",  "protein",  "wine",   "yacht",  "msd"};
    return names;
}

/// Default configuration for a named dataset: shared defaults plus the
/// per-dataset coverage weights, widths, batch sizes and split counts.
inline ExperimentConfig preset(const std::string& name, const std::filesystem::path& data_dir = "data") {
    ExperimentConfig c;
    c.name = name;
    c.dataset.name = name;
    if (name == "sine" || name == "skew_normal") {
        SyntheticSpec s;
        s.kind = parse_generator(name);
        c.dataset.synthetic = s;
        c.model.hidden = {100};
        c.optimizer.validation_fraction = 0.0;
        c.optimizer.max_epochs = 2000;
        c.optimizer.learning_rate = 0.01;
        c.optimizer.decay = 0.999;
        c.splits.count = 1;
        return c;
    }
    bool known = false;
    for (const auto& n : uci_dataset_names()) known = known || n == name;
    if (!known) throw ConfigError("unknown preset '" + name + "'");
    c.dataset.path = data_dir / "uci" / (name + ".csv");
    // Fixed-length training: validation early stopping on ~50 held-out rows
    // stops while member intervals still disagree, and the ensemble spread
    // then roughly doubles the aggregate width.
    c.optimizer.validation_fraction = 0.0;
    c.optimizer.max_epochs = 1000;
    if (name == "naval") c.loss.lambda = 4.0;
    if (name == "protein") c.loss.lambda = 40.0;
    if (name == "wine") c.loss.lambda = 30.0;
    if (name == "yacht") c.loss.lambda = 3.0;
    if (name == "protein" || name == "msd") c.model.hidden = {100};
    if (name == "msd") c.optimizer.batch_size = 1000;
    if (name == "protein") c.splits.count = 5;
    if (name == "msd") c.splits.count = 1;
    return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open", path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Resolves a config file: an optional "preset" key seeds the defaults, then
/// the remaining keys override them.
inline ExperimentConfig load_config(const std::filesystem::path& path, const std::filesystem::path& data_dir = "data") {
    const auto j = read_json_file(path);
    ExperimentConfig c = j.contains("preset") ? preset(j.at("preset").get<std::string>(), data_dir) : ExperimentConfig{};
    merge(c, j);
    return c;
}

} // namespace piven
