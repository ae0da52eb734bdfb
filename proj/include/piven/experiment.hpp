#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "piven/config.hpp"
#include "piven/data.hpp"
#include "piven/ensemble.hpp"
#include "piven/error.hpp"
#include "piven/loss.hpp"
#include "piven/metrics.hpp"
#include "piven/nn.hpp"
#include "piven/random.hpp"

namespace piven {

struct TrainingHistory {
    std::vector<double> train_loss; // mean mini-batch loss per epoch
    std::vector<double> valid_loss; // empty without a validation set
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0; // 1-based epoch whose parameters were kept
    bool early_stopped = false;

    bool operator==(const TrainingHistory&) const = default;
};

struct TrainedModel {
    FeedForwardModel model;
    TrainingHistory history;
};

inline std::vector<std::size_t> layer_sizes_for(const ExperimentConfig& config, std::size_t input_dim) {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), config.model.hidden.begin(), config.model.hidden.end());
    sizes.push_back(head_count(config.loss.variant));
    return sizes;
}

/// Mini-batch Adam on normalized data. Batches are reshuffled every epoch.
/// With a non-empty validation set, training stops once the validation loss
/// has failed to improve for more than `patience` consecutive epochs and the
/// best-validation parameters are returned; otherwise the final parameters are.
inline TrainedModel train_single(const ExperimentConfig& config, const Dataset& train, const Dataset& valid,
                                 std::uint64_t seed) {
    if (train.size() == 0) throw DataError("train_single: empty training set");
    const auto sizes = layer_sizes_for(config, train.dim());
    TrainedModel result{init_model(std::span<const std::size_t>(sizes), seed, config.model.head_bias,
                                   layout_for(config.loss.variant)),
                        {}};
    auto& model = result.model;
    auto& history = result.history;
    const auto& opt = config.optimizer;
    AdamState adam(model, {opt.learning_rate, opt.decay});
    Rng shuffle_rng(derive_seed(seed, 0x5348u));

    const bool use_valid = valid.size() > 0;
    double best = std::numeric_limits<double>::infinity();
    FeedForwardModel best_model = model;
    std::size_t stale = 0;
    std::vector<std::size_t> order(train.size());
    std::size_t batch_counter = 0;

    for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(order.size(), start + opt.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, end - start);
            const Matrix x = train.features.select_rows(rows);
            const auto y = select(train.targets, rows);
            auto step = backward(model, x, y, config.loss, batch_counter++);
            adam_step(adam, model, step.gradients);
            loss_sum += step.loss;
            ++batches;
        }
        adam.end_epoch();
        history.train_loss.push_back(loss_sum / static_cast<double>(batches));
        history.epochs_run = epoch;

        if (!use_valid) continue;
        const double vl = evaluate_loss(model, valid.features, valid.targets, config.loss);
        if (!std::isfinite(vl)) throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch), batch_counter);
        history.valid_loss.push_back(vl);
        if (vl < best) {
            best = vl;
            best_model = model;
            history.best_epoch = epoch;
            stale = 0;
        } else if (++stale > opt.patience) {
            history.early_stopped = true;
            break;
        }
    }
    if (use_valid) {
        model = std::move(best_model);
    } else {
        history.best_epoch = history.epochs_run;
    }
    return result;
}

/// Runs `tasks` indices through `fn` on up to `threads` workers. Results must be
/// written by index, so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t tasks, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, tasks));
    if (threads <= 1) {
        for (std::size_t i = 0; i < tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < tasks; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    workers.clear();
    if (failure) std::rethrow_exception(failure);
}

/// Member seed = base model seed + member index.
inline std::uint64_t member_seed(const ExperimentConfig& config, std::size_t member) {
    return config.model.seed + member;
}

inline std::vector<TrainedModel> train_ensemble(const ExperimentConfig& config, const Dataset& train,
                                                const Dataset& valid) {
    if (config.ensemble_size == 0) throw ConfigError("train_ensemble: ensemble size must be at least 1");
    std::vector<TrainedModel> members(config.ensemble_size);
    parallel_for(config.ensemble_size, config.threads, [&](std::size_t m) {
        try {
            members[m] = train_single(config, train, valid, member_seed(config, m));
        } catch (const DivergenceError& e) {
            throw DivergenceError("ensemble member " + std::to_string(m) + ": " + e.what(), e.batch_index());
        }
    });
    return members;
}

/// Aggregated ensemble prediction on normalized features, in normalized target units.
inline EnsembleOutput predict_ensemble(const std::vector<TrainedModel>& members, const Matrix& features,
                                       const LossConfig& loss) {
    if (loss.variant == Variant::gauss_nll) {
        std::vector<GaussianOutput> outs;
        for (const auto& m : members) outs.push_back(predict_gaussian(m.model, features));
        return aggregate_gaussian(outs, loss.alpha);
    }
    std::vector<PIOutput> outs;
    for (const auto& m : members) outs.push_back(predict(m.model, features, loss.variant));
    return aggregate_pi(outs, loss.alpha);
}

// ---------------------------------------------------------------------------
// Benchmark

/// Per-sample test predictions in original target units.
struct Predictions {
    std::vector<double> y;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<double> value;

    bool operator==(const Predictions&) const = default;
};

struct SplitResult {
    std::size_t index = 0;
    MetricsRecord normalized;
    MetricsRecord original;
    std::vector<std::size_t> member_epochs;
    std::vector<double> loss_curve; // member 0 training loss, sampled
    double seconds = 0.0;
    std::optional<std::string> error;
    Predictions predictions;

    bool operator==(const SplitResult&) const = default;
};

struct RunReport {
    int format_version = 1;
    nlohmann::json config;
    std::vector<SplitResult> splits;
    std::optional<AggregateMetrics> normalized; // absent when every split failed
    std::optional<AggregateMetrics> original;
    bool partial = false;
    double wall_seconds = 0.0;

    bool operator==(const RunReport&) const = default;
};

/// One realization of an experiment: normalized train/valid/test sets plus the
/// statistics that map them back to original units.
struct PreparedSplit {
    Dataset train;
    Dataset valid;
    Dataset test;
    NormStats stats;
};

inline Dataset load_dataset(const DatasetSpec& spec) {
    if (spec.synthetic) return generate(*spec.synthetic);
    return load_delimited(spec.path, spec.target, spec.delimiter);
}

/// Tabular data: seeded 90/10 split, then a seeded validation carve-out of the
/// training portion. Synthetic data: a fresh training draw and a separate
/// held-out draw per split index. Statistics are fit on training rows only.
inline PreparedSplit prepare_split(const ExperimentConfig& config, const Dataset& full, std::size_t split_index) {
    Dataset train_full, test;
    if (config.dataset.synthetic) {
        SyntheticSpec train_spec = *config.dataset.synthetic;
        train_spec.seed = train_spec.seed + split_index;
        train_full = generate(train_spec);
        SyntheticSpec test_spec = train_spec;
        test_spec.n = config.dataset.synthetic_test_n;
        test_spec.seed = derive_seed(train_spec.seed, 0x7E57u);
        test = generate(test_spec);
    } else {
        std::tie(train_full, test) = split(full, {config.splits.test_fraction, config.splits.seed, split_index});
    }

    Dataset train = train_full, valid;
    const double vf = config.optimizer.validation_fraction;
    if (vf > 0.0 && train_full.size() >= 4) {
        auto idx = split_indices(train_full.size(), {vf, derive_seed(config.splits.seed, 0xA11Du), split_index});
        train = subset(train_full, idx.train);
        valid = subset(train_full, idx.test);
    }
    const NormStats stats = fit_normalize(train_full);
    PreparedSplit out{apply_normalize(train, stats), {}, apply_normalize(test, stats), stats};
    if (valid.size() > 0) out.valid = apply_normalize(valid, stats);
    return out;
}

inline std::vector<double> sample_curve(const std::vector<double>& curve, std::size_t max_points = 50) {
    if (curve.size() <= max_points) return curve;
    std::vector<double> out;
    const double step = static_cast<double>(curve.size() - 1) / static_cast<double>(max_points - 1);
    for (std::size_t i = 0; i < max_points; ++i) {
        out.push_back(curve[static_cast<std::size_t>(std::round(static_cast<double>(i) * step))]);
    }
    return out;
}

/// Trains and evaluates one split; metrics are computed in both unit systems.
inline SplitResult run_split(const ExperimentConfig& config, const Dataset& full, std::size_t split_index) {
    const auto start = std::chrono::steady_clock::now();
    SplitResult r;
    r.index = split_index;
    const auto prepared = prepare_split(config, full, split_index);
    ExperimentConfig member_config = config;
    member_config.threads = 1;
    const auto members = train_ensemble(member_config, prepared.train, prepared.valid);
    for (const auto& m : members) r.member_epochs.push_back(m.history.epochs_run);
    r.loss_curve = sample_curve(members.front().history.train_loss);

    const auto out = predict_ensemble(members, prepared.test.features, config.loss);
    const auto& y = prepared.test.targets;
    r.normalized = evaluate_metrics(y, out.lower, out.upper, out.value);
    r.predictions = {denormalize_targets(y, prepared.stats), denormalize_targets(out.lower, prepared.stats),
                     denormalize_targets(out.upper, prepared.stats), denormalize_targets(out.value, prepared.stats)};
    const auto& p = r.predictions;
    r.original = evaluate_metrics(p.y, p.lower, p.upper, p.value);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

inline void recompute_aggregates(RunReport& report) {
    std::vector<MetricsRecord> norm, orig;
    report.partial = false;
    for (const auto& s : report.splits) {
        if (s.error) {
            report.partial = true;
            continue;
        }
        norm.push_back(s.normalized);
        orig.push_back(s.original);
    }
    report.normalized.reset();
    report.original.reset();
    if (!norm.empty()) {
        report.normalized = aggregate_splits(norm);
        report.original = aggregate_splits(orig);
    }
}

/// Runs every split of the plan. Splits run concurrently when threads allow;
/// a failing split is recorded and the report marked partial.
inline RunReport run_benchmark(const ExperimentConfig& config) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const Dataset full = config.dataset.synthetic ? Dataset{} : load_dataset(config.dataset);

    RunReport report;
    report.config = to_json(config);
    report.splits.resize(config.splits.count);
    parallel_for(config.splits.count, config.threads, [&](std::size_t s) {
        try {
            report.splits[s] = run_split(config, full, s);
        } catch (const Error& e) {
            report.splits[s].index = s;
            report.splits[s].error = e.what();
        }
    });
    if (!config.persist_predictions) {
        for (auto& s : report.splits) s.predictions = {};
    }
    recompute_aggregates(report);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepCell {
    std::string method;
    double alpha = 0.0;
    double beta = 0.0;
    double lambda = 0.0;
    std::optional<AggregateMetrics> normalized;
    std::optional<AggregateMetrics> original;
    bool partial = false;

    bool operator==(const SweepCell&) const = default;
};

struct SweepReport {
    int format_version = 1;
    std::string kind; // "alpha" or "hparam"
    nlohmann::json config;
    std::vector<SweepCell> cells;
    double wall_seconds = 0.0;

    bool operator==(const SweepReport&) const = default;
};

inline SweepCell summarize(const RunReport& r, const LossConfig& loss) {
    return {to_string(loss.variant), loss.alpha, loss.beta, loss.lambda, r.normalized, r.original, r.partial};
}

/// Trains PIVEN and QD at every alpha.
inline SweepReport run_alpha_sweep(const ExperimentConfig& config, const std::vector<double>& alphas) {
    if (alphas.empty()) throw ConfigError("alpha sweep: empty grid");
    for (double a : alphas) {
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha sweep: every alpha must lie in (0,1)");
    }
    const auto start = std::chrono::steady_clock::now();
    SweepReport sweep;
    sweep.kind = "alpha";
    sweep.config = to_json(config);
    for (double a : alphas) {
        for (Variant v : {Variant::piven, Variant::qd}) {
            ExperimentConfig c = config;
            c.loss.alpha = a;
            c.loss.variant = v;
            c.persist_predictions = false;
            sweep.cells.push_back(summarize(run_benchmark(c), c.loss));
        }
    }
    sweep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sweep;
}

/// Normalized-MPIW improvement of PIVEN over QD, (QD - PIVEN) / QD, per alpha in sweep order.
inline std::vector<std::pair<double, double>> mpiw_improvement(const SweepReport& sweep) {
    std::vector<std::pair<double, double>> out;
    for (const auto& p : sweep.cells) {
        if (p.method != "piven" || !p.normalized) continue;
        for (const auto& q : sweep.cells) {
            if (q.method == "qd" && q.alpha == p.alpha && q.normalized) {
                const double qd = q.normalized->mpiw.mean;
                out.emplace_back(p.alpha, (qd - p.normalized->mpiw.mean) / qd);
            }
        }
    }
    return out;
}

/// Every (beta, lambda) combination with the configured variant.
inline SweepReport run_hyperparam_sweep(const ExperimentConfig& config, const std::vector<double>& betas,
                                        const std::vector<double>& lambdas) {
    if (betas.empty() || lambdas.empty()) throw ConfigError("hyperparameter sweep: grids must be non-empty");
    const auto start = std::chrono::steady_clock::now();
    SweepReport sweep;
    sweep.kind = "hparam";
    sweep.config = to_json(config);
    for (double b : betas) {
        for (double l : lambdas) {
            ExperimentConfig c = config;
            c.loss.beta = b;
            c.loss.lambda = l;
            c.persist_predictions = false;
            c.validate();
            sweep.cells.push_back(summarize(run_benchmark(c), c.loss));
        }
    }
    sweep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sweep;
}

} // namespace piven
