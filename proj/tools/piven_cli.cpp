// piven: train, benchmark and sweep interval-plus-value regressors.
//
// Resolution order for every setting: built-in defaults, then --preset, then
// --config (JSON), then individual flags. PIVEN_OUTPUT_DIR supplies the output
// directory when neither the config nor --output does.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "piven/piven.hpp"

namespace {

using nlohmann::json;

// Flag values that override the config when given.
struct Overrides {
    std::string preset;
    std::string config_path;
    std::string data_dir = "data";
    std::string output;
    std::string name;

    std::string dataset_path;
    std::string target;
    std::string generator;
    std::optional<std::size_t> n, test_n;
    std::optional<double> noise_scale, skew_alpha;
    std::optional<std::uint64_t> data_seed;

    std::vector<std::size_t> hidden;
    std::vector<double> head_bias;
    std::optional<std::uint64_t> seed;

    std::string variant, point_loss;
    std::optional<double> alpha, beta, lambda, softness;

    std::optional<double> lr, decay, valid_frac;
    std::optional<std::size_t> batch, epochs, patience;

    std::optional<std::size_t> ensemble, splits;
    std::optional<double> test_frac;
    std::optional<std::uint64_t> split_seed;
    std::optional<unsigned> threads;
    bool no_predictions = false;
};

void add_config_flags(CLI::App& app, Overrides& o) {
    app.add_option("--preset", o.preset, "Bundled defaults: sine, skew_normal or a benchmark name");
    app.add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--data-dir", o.data_dir, "Directory holding uci/<name>.csv")->capture_default_str();
    app.add_option("-o,--output", o.output, "Output directory");
    app.add_option("--name", o.name, "Experiment name");

    app.add_option("--data", o.dataset_path, "Delimited data file (target defaults to the last column)");
    app.add_option("--target", o.target, "Target column: index (negative counts from the end) or header name");
    app.add_option("--generator", o.generator, "Synthetic generator: sine or skew_normal");
    app.add_option("--n", o.n, "Synthetic training points");
    app.add_option("--test-n", o.test_n, "Synthetic held-out points");
    app.add_option("--noise-scale", o.noise_scale, "Synthetic noise scale");
    app.add_option("--skew", o.skew_alpha, "Skew-normal shape parameter");
    app.add_option("--data-seed", o.data_seed, "Synthetic data seed");

    app.add_option("--hidden", o.hidden, "Hidden layer widths")->delimiter(',');
    app.add_option("--head-bias", o.head_bias, "Initial upper,lower head biases")->delimiter(',')->expected(2);
    app.add_option("--seed", o.seed, "Model seed; member m uses seed + m");

    app.add_option("--variant", o.variant, "piven, qd, poo, moi or gauss_nll (alias de)");
    app.add_option("--point-loss", o.point_loss, "squared or absolute");
    app.add_option("--alpha", o.alpha, "Miscoverage level");
    app.add_option("--beta", o.beta, "Interval/value loss balance");
    app.add_option("--lambda", o.lambda, "Coverage penalty weight");
    app.add_option("--softness", o.softness, "Sigmoid sharpness of the soft capture indicator");

    app.add_option("--lr", o.lr, "Adam learning rate");
    app.add_option("--decay", o.decay, "Learning-rate decay per epoch");
    app.add_option("--batch", o.batch, "Mini-batch size");
    app.add_option("--epochs", o.epochs, "Maximum epochs");
    app.add_option("--patience", o.patience, "Early-stopping patience in epochs");
    app.add_option("--valid-frac", o.valid_frac, "Validation fraction of the training portion (0 disables)");

    app.add_option("-M,--ensemble", o.ensemble, "Ensemble size");
    app.add_option("--splits", o.splits, "Number of random splits");
    app.add_option("--test-frac", o.test_frac, "Test fraction per split");
    app.add_option("--split-seed", o.split_seed, "Base seed for splits");
    app.add_option("-j,--threads", o.threads, "Worker threads (0 = all cores)");
    app.add_flag("--no-predictions", o.no_predictions, "Skip per-sample prediction output");
}

template <typename T>
void put(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

json overlay(const Overrides& o) {
    json j = json::object();
    if (!o.name.empty()) j["name"] = o.name;

    json d = json::object();
    if (!o.dataset_path.empty()) d["path"] = o.dataset_path;
    if (!o.target.empty()) {
        char* end = nullptr;
        const long long idx = std::strtoll(o.target.c_str(), &end, 10);
        if (end && *end == '\0') {
            d["target"] = idx;
        } else {
            d["target"] = o.target;
        }
    }
    json s = json::object();
    if (!o.generator.empty()) s["generator"] = o.generator;
    put(s, "n", o.n);
    put(s, "noise_scale", o.noise_scale);
    put(s, "skew_alpha", o.skew_alpha);
    put(s, "seed", o.data_seed);
    if (!s.empty()) d["synthetic"] = s;
    put(d, "test_n", o.test_n);
    if (!d.empty()) j["dataset"] = d;

    json m = json::object();
    if (!o.hidden.empty()) m["hidden"] = o.hidden;
    if (!o.head_bias.empty()) m["head_bias"] = o.head_bias;
    put(m, "seed", o.seed);
    if (!m.empty()) j["model"] = m;

    json l = json::object();
    if (!o.variant.empty()) l["variant"] = o.variant;
    if (!o.point_loss.empty()) l["point_loss"] = o.point_loss;
    put(l, "alpha", o.alpha);
    put(l, "beta", o.beta);
    put(l, "lambda", o.lambda);
    put(l, "softness", o.softness);
    if (!l.empty()) j["loss"] = l;

    json opt = json::object();
    put(opt, "learning_rate", o.lr);
    put(opt, "decay", o.decay);
    put(opt, "batch_size", o.batch);
    put(opt, "max_epochs", o.epochs);
    put(opt, "patience", o.patience);
    put(opt, "validation_fraction", o.valid_frac);
    if (!opt.empty()) j["optimizer"] = opt;

    put(j, "ensemble_size", o.ensemble);
    json sp = json::object();
    put(sp, "count", o.splits);
    put(sp, "test_fraction", o.test_frac);
    put(sp, "seed", o.split_seed);
    if (!sp.empty()) j["splits"] = sp;
    put(j, "threads", o.threads);
    if (o.no_predictions) j["persist_predictions"] = false;
    if (!o.output.empty()) j["output_dir"] = o.output;
    return j;
}

piven::ExperimentConfig resolve(const Overrides& o) {
    piven::ExperimentConfig c;
    json file = json::object();
    if (!o.config_path.empty()) file = piven::read_json_file(o.config_path);
    std::string preset = o.preset;
    if (preset.empty() && file.contains("preset")) preset = file.at("preset").get<std::string>();
    if (!preset.empty()) c = piven::preset(preset, o.data_dir);
    const bool output_in_file = file.contains("output_dir");
    piven::merge(c, file);
    if (!output_in_file && o.output.empty()) {
        if (const char* env = std::getenv("PIVEN_OUTPUT_DIR"); env && *env) c.output_dir = env;
    }
    piven::merge(c, overlay(o));
    c.validate();
    return c;
}

void print_aggregate(const char* label, const std::optional<piven::AggregateMetrics>& a) {
    if (!a) {
        std::printf("%-10s (no successful splits)\n", label);
        return;
    }
    const auto pm = [](const piven::MeanStderr& m) {
        char buf[64];
        if (m.standard_error) {
            std::snprintf(buf, sizeof buf, "%.4f +- %.4f", m.mean, *m.standard_error);
        } else {
            std::snprintf(buf, sizeof buf, "%.4f", m.mean);
        }
        return std::string(buf);
    };
    std::printf("%-10s PICP %s  MPIW %s  RMSE %s  MAE %s  (%zu splits)\n", label, pm(a->picp).c_str(),
                pm(a->mpiw).c_str(), pm(a->rmse).c_str(), pm(a->mae).c_str(), a->splits);
}

void print_run(const piven::RunReport& r) {
    for (const auto& s : r.splits) {
        if (s.error) std::printf("split %zu failed: %s\n", s.index, s.error->c_str());
    }
    print_aggregate("normalized", r.normalized);
    print_aggregate("original", r.original);
    if (r.partial) std::printf("report is partial\n");
}

void print_sweep(const piven::SweepReport& s) {
    std::printf("%-10s %7s %7s %7s %8s %8s %8s\n", "method", "alpha", "beta", "lambda", "PICP", "MPIW", "RMSE");
    for (const auto& c : s.cells) {
        if (!c.normalized) {
            std::printf("%-10s %7.3f %7.3f %7.2f   failed\n", c.method.c_str(), c.alpha, c.beta, c.lambda);
            continue;
        }
        std::printf("%-10s %7.3f %7.3f %7.2f %8.4f %8.4f %8.4f\n", c.method.c_str(), c.alpha, c.beta, c.lambda,
                    c.normalized->picp.mean, c.normalized->mpiw.mean, c.original->rmse.mean);
    }
    if (s.kind == "alpha") {
        for (auto [a, v] : piven::mpiw_improvement(s)) std::printf("alpha %.2f  MPIW improvement %.1f%%\n", a, 100 * v);
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Prediction intervals with a value prediction: training and benchmarking"};
    app.require_subcommand(1);

    Overrides o;
    auto* train = app.add_subcommand("train", "Train one ensemble on the first split and report held-out metrics");
    auto* bench = app.add_subcommand("bench", "Run the full split plan");
    auto* sweep_alpha = app.add_subcommand("sweep-alpha", "Compare piven and qd across miscoverage levels");
    auto* sweep_hparam = app.add_subcommand("sweep-hparam", "Grid over beta and lambda");
    for (auto* sub : {train, bench, sweep_alpha, sweep_hparam}) add_config_flags(*sub, o);

    std::vector<double> alphas{0.05, 0.10, 0.15, 0.20, 0.25, 0.30};
    sweep_alpha->add_option("--alphas", alphas, "Alpha grid")->delimiter(',')->capture_default_str();
    std::vector<double> betas{0.1, 0.5, 0.99}, lambdas{1, 4, 15, 40};
    sweep_hparam->add_option("--betas", betas, "Beta grid")->delimiter(',')->capture_default_str();
    sweep_hparam->add_option("--lambdas", lambdas, "Lambda grid")->delimiter(',')->capture_default_str();
    bool print_config = false;
    for (auto* sub : {train, bench, sweep_alpha, sweep_hparam}) {
        sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
    }

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
    piven::SyntheticSpec gen_spec;
    std::string gen_kind = "sine", gen_out;
    gen->add_option("--generator", gen_kind, "sine or skew_normal")->capture_default_str();
    gen->add_option("--n", gen_spec.n, "Points")->capture_default_str();
    gen->add_option("--x-low", gen_spec.x_low)->capture_default_str();
    gen->add_option("--x-high", gen_spec.x_high)->capture_default_str();
    gen->add_option("--noise-scale", gen_spec.noise_scale)->capture_default_str();
    gen->add_option("--skew", gen_spec.skew_alpha, "Skew-normal shape parameter")->capture_default_str();
    gen->add_option("--seed", gen_spec.seed)->capture_default_str();
    gen->add_option("-o,--out", gen_out, "Output CSV")->required();

    auto* rep = app.add_subcommand("report", "Summarize a report.json or sweep.json, optionally re-emitting tables");
    std::string rep_in, rep_out;
    rep->add_option("input", rep_in, "report.json or sweep.json")->required();
    rep->add_option("-o,--output", rep_out, "Directory for regenerated tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : piven::exit_code(piven::ErrorCategory::config);
    }

    if (gen->parsed()) {
        gen_spec.kind = piven::parse_generator(gen_kind);
        const auto data = piven::generate(gen_spec);
        piven::write_delimited(data, gen_out);
        std::printf("wrote %zu rows to %s\n", data.size(), gen_out.c_str());
        return 0;
    }

    if (rep->parsed()) {
        const auto j = piven::read_json_file(rep_in);
        const auto kind = j.value("kind", std::string("run"));
        if (kind == "run") {
            const auto r = piven::run_report_from_json(j);
            print_run(r);
            if (!rep_out.empty()) piven::emit_report(r, rep_out);
        } else {
            const auto s = piven::sweep_report_from_json(j);
            print_sweep(s);
            if (!rep_out.empty()) piven::emit_report(s, rep_out);
        }
        return 0;
    }

    auto config = resolve(o);
    if (train->parsed()) config.splits.count = 1;
    if (print_config) {
        std::cout << piven::to_json(config).dump(2) << '\n';
        return 0;
    }

    if (train->parsed() || bench->parsed()) {
        const auto report = piven::run_benchmark(config);
        print_run(report);
        for (const auto& p : piven::emit_report(report, config.output_dir)) std::printf("wrote %s\n", p.c_str());
        if (!report.normalized) {
            throw piven::DivergenceError("every split failed: " + report.splits.front().error.value_or(""), 0);
        }
        return 0;
    }
    const auto sweep = sweep_alpha->parsed() ? piven::run_alpha_sweep(config, alphas)
                                             : piven::run_hyperparam_sweep(config, betas, lambdas);
    print_sweep(sweep);
    for (const auto& p : piven::emit_report(sweep, config.output_dir)) std::printf("wrote %s\n", p.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const piven::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return piven::exit_code(e.category());
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return piven::exit_code(piven::ErrorCategory::config);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return piven::exit_code(piven::ErrorCategory::internal);
    }
}
