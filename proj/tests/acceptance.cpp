// Acceptance runner. Prints one PASS/FAIL line per criterion.
//   --fast  criteria 1-5 and 8-10 (minutes)
//   --uci   criteria 6-7 on the benchmark files under data/uci (about an hour)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "support.hpp"

namespace {

using namespace piven;
using piven::testing::KinkMargins;

// Tolerances and budgets.
constexpr double grad_h = 1e-5;
constexpr double grad_max_rel_error = 1e-4;
constexpr double grad_scale_floor = 1e-4; // below this, roundoff in the difference quotient dominates
constexpr double grad_runtime_s = 60.0;
constexpr std::size_t grad_instances = 100;
constexpr std::size_t containment_passes = 10000;
constexpr std::size_t metric_instances = 1000;
constexpr double ensemble_identity_rel = 1e-12;
constexpr double z_expected = 1.95996;
constexpr double z_tol = 1e-5;
constexpr double sine_min_picp = 0.90;
constexpr int sine_seeds = 10;
constexpr int sine_min_wins = 8;
constexpr double sine_runtime_s = 300.0;
constexpr int sweep_seeds = 5;
constexpr double lambda_picp_slack = 0.02;
constexpr std::size_t skew_draws = 1000000;
constexpr double skew_tol = 0.01;
constexpr double uci_picp_tol = 0.04;
constexpr double uci_mpiw_rel = 0.20;
constexpr double uci_rmse_rel = 0.25;
constexpr double alpha_rmse_spread = 0.30;

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("criterion %2d: %s  %s  [%s] (%.1fs)\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// 1 ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(20240601);
    double worst = 0.0;
    std::string worst_variant;
    std::size_t rejected = 0;
    for (Variant variant : {Variant::piven, Variant::qd, Variant::poo, Variant::moi, Variant::gauss_nll}) {
        LossConfig cfg;
        cfg.variant = variant;
        std::size_t accepted = 0;
        while (accepted < grad_instances) {
            const std::size_t in = 1 + rng.below(4), hidden = 1 + rng.below(8);
            const std::size_t out = head_count(variant);
            auto model = piven::testing::random_model(rng, {in, hidden, out});
            const auto x = piven::testing::random_matrix(rng, 16, in);
            const auto y = piven::testing::random_vector(rng, 16, 1.5);
            if (piven::testing::near_kink(model, x, y, cfg, KinkMargins{})) {
                ++rejected;
                continue;
            }
            const auto analytic = backward(model, x, y, cfg).gradients;
            const auto numeric = finite_diff_grad(model, x, y, cfg, grad_h, Stencil::five_point);
            const double err = piven::testing::max_relative_error(analytic, numeric, grad_scale_floor);
            if (err > worst) {
                worst = err;
                worst_variant = to_string(variant);
            }
            ++accepted;
        }
    }
    const double secs = seconds_since(start);
    return {worst <= grad_max_rel_error && secs < grad_runtime_s,
            fmt("max rel err %.2e (%s) over %zu nets x 5 losses, %zu kink-adjacent draws resampled, %.1fs", worst,
                worst_variant.c_str(), grad_instances, rejected, secs)};
}

// 2 ---------------------------------------------------------------------------

Outcome containment() {
    Rng rng(7);
    std::size_t violations = 0, checked = 0;
    const double scales[] = {0.01, 1.0, 10.0, 1000.0};
    for (std::size_t pass = 0; pass < containment_passes; ++pass) {
        const std::size_t in = 1 + rng.below(5), hidden = 1 + rng.below(16);
        const double scale = scales[rng.below(4)];
        const auto model = piven::testing::random_model(rng, {in, hidden, 3}, scale);
        const auto x = piven::testing::random_matrix(rng, 8, in, scales[rng.below(4)]);
        const auto out = forward(model, x);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double lo = std::min(out.lower[i], out.upper[i]), hi = std::max(out.lower[i], out.upper[i]);
            if (!(lo <= out.value[i] && out.value[i] <= hi)) ++violations;
            ++checked;
        }
    }
    return {violations == 0, fmt("%zu violations in %zu predictions", violations, checked)};
}

// 3 ---------------------------------------------------------------------------

Outcome metric_oracles() {
    Rng rng(11);
    std::size_t mismatches = 0;
    for (std::size_t t = 0; t < metric_instances; ++t) {
        const std::size_t n = 1 + rng.below(64);
        std::vector<double> y(n), lo(n), up(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = rng.normal(), b = rng.normal();
            lo[i] = std::min(a, b);
            up[i] = std::max(a, b);
            if (rng.below(8) == 0) std::swap(lo[i], up[i]); // crossed bounds
            const auto pick = rng.below(10);
            y[i] = pick == 0 ? lo[i] : pick == 1 ? up[i] : rng.normal();
        }
        std::size_t inside = 0;
        double width = 0.0, captured_width = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            width += up[i] - lo[i];
            if (lo[i] <= y[i] && y[i] <= up[i]) {
                ++inside;
                captured_width += up[i] - lo[i];
            }
        }
        const double picp_ref = static_cast<double>(inside) / static_cast<double>(n);
        const double mpiw_ref = width / static_cast<double>(n);
        const double capt_ref = inside == 0 ? 0.0 : captured_width / static_cast<double>(inside);
        const auto k = k_hard(y, lo, up);
        if (picp(y, lo, up) != picp_ref) ++mismatches;
        if (mpiw(lo, up) != mpiw_ref) ++mismatches;
        if (mpiw_capt(up, lo, k) != capt_ref) ++mismatches;
    }
    return {mismatches == 0, fmt("%zu mismatches over %zu instances x 3 metrics (bitwise)", mismatches, metric_instances)};
}

// 4 ---------------------------------------------------------------------------

// Phi^-1(p) by bisection on erfc in extended precision.
long double quantile_oracle(long double p) {
    long double a = 0.0L, b = 10.0L;
    for (int i = 0; i < 200; ++i) {
        const long double mid = 0.5L * (a + b);
        const long double cdf = 0.5L * std::erfc(-mid / std::sqrt(2.0L));
        (cdf < p ? a : b) = mid;
    }
    return 0.5L * (a + b);
}

Outcome ensemble_identities() {
    Rng rng(3);
    double worst = 0.0;
    double worst_sigma = 0.0;
    for (std::size_t m = 1; m <= 8; ++m) {
        const auto model = piven::testing::random_model(rng, {3, 6, 3});
        const auto x = piven::testing::random_matrix(rng, 32, 3);
        const auto member = forward(model, x);
        const std::vector<PIOutput> members(m, member);
        const auto agg = aggregate_pi(members, 0.05);
        for (std::size_t i = 0; i < member.size(); ++i) {
            const auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
            worst = std::max({worst, rel(agg.upper[i], member.upper[i]), rel(agg.lower[i], member.lower[i]),
                              rel(agg.value[i], member.value[i])});
            worst_sigma = std::max({worst_sigma, agg.sigma_upper[i], agg.sigma_lower[i]});
        }
    }
    const double z = z_score(0.05);
    const double oracle = static_cast<double>(quantile_oracle(0.975L));
    const bool ok = worst <= ensemble_identity_rel && worst_sigma == 0.0 && std::abs(z - z_expected) <= z_tol &&
                    std::abs(z - oracle) <= z_tol;
    return {ok, fmt("identical members: max rel dev %.1e, max sigma %.1e; z(0.05) = %.12f, oracle %.12f", worst,
                    worst_sigma, z, oracle)};
}

// 5 ---------------------------------------------------------------------------

ExperimentConfig sine_config(int seed) {
    auto c = preset("sine");
    c.model.seed = static_cast<std::uint64_t>(seed);
    c.dataset.synthetic->seed = static_cast<std::uint64_t>(seed);
    c.persist_predictions = false;
    return c;
}

Outcome synthetic_sine() {
    const auto start = std::chrono::steady_clock::now();
    int wins = 0;
    double picp_sum = 0.0, picp_min = 1.0, rmse_piven = 0.0, rmse_mid = 0.0;
    for (int seed = 1; seed <= sine_seeds; ++seed) {
        auto c = sine_config(seed);
        const auto piven_run = run_benchmark(c);
        c.loss.variant = Variant::moi;
        const auto mid_run = run_benchmark(c);
        const double p = piven_run.normalized->picp.mean;
        const double r1 = piven_run.original->rmse.mean, r2 = mid_run.original->rmse.mean;
        picp_sum += p;
        picp_min = std::min(picp_min, p);
        rmse_piven += r1 / sine_seeds;
        rmse_mid += r2 / sine_seeds;
        if (r1 < r2) ++wins;
    }
    const double picp_mean = picp_sum / sine_seeds;
    const double secs = seconds_since(start);
    return {picp_mean >= sine_min_picp && wins >= sine_min_wins && secs < sine_runtime_s,
            fmt("PICP mean %.3f (min %.3f); RMSE piven %.4f vs midpoint %.4f, wins %d/%d; %.0fs", picp_mean, picp_min,
                rmse_piven, rmse_mid, wins, sine_seeds, secs)};
}

// 8, 9 ------------------------------------------------------------------------

struct CellMeans {
    double picp = 0.0, mpiw = 0.0, rmse = 0.0;
};

// Mean over seeds of each (beta, lambda) cell of a hyperparameter sweep.
std::vector<CellMeans> sweep_means(const std::vector<double>& betas, const std::vector<double>& lambdas) {
    std::vector<CellMeans> means(betas.size() * lambdas.size());
    for (int seed = 1; seed <= sweep_seeds; ++seed) {
        const auto sweep = run_hyperparam_sweep(sine_config(seed), betas, lambdas);
        for (std::size_t k = 0; k < sweep.cells.size(); ++k) {
            const auto& cell = sweep.cells[k];
            if (!cell.normalized) throw DivergenceError("sweep cell failed", 0);
            means[k].picp += cell.normalized->picp.mean / sweep_seeds;
            means[k].mpiw += cell.normalized->mpiw.mean / sweep_seeds;
            means[k].rmse += cell.original->rmse.mean / sweep_seeds;
        }
    }
    return means;
}

Outcome beta_sweep() {
    const auto m = sweep_means({0.1, 0.99}, {15.0});
    const bool narrower = m[1].mpiw < m[0].mpiw;
    const bool less_accurate = m[1].rmse > m[0].rmse;
    return {narrower && less_accurate,
            fmt("MPIW beta=0.99 %.4f vs beta=0.1 %.4f (%s); RMSE %.4f vs %.4f (%s)", m[1].mpiw, m[0].mpiw,
                narrower ? "ok" : "not narrower", m[1].rmse, m[0].rmse, less_accurate ? "ok" : "not less accurate")};
}

Outcome lambda_sweep() {
    const std::vector<double> lambdas{1.0, 4.0, 15.0, 40.0};
    const auto m = sweep_means({0.5}, lambdas);
    bool ok = true;
    std::string series;
    for (std::size_t k = 0; k < m.size(); ++k) {
        if (k > 0 && m[k].picp < m[k - 1].picp - lambda_picp_slack) ok = false;
        series += fmt("%s%g:%.3f", k ? " " : "", lambdas[k], m[k].picp);
    }
    return {ok, "PICP by lambda " + series};
}

// 10 --------------------------------------------------------------------------

Outcome skew_normal_moments() {
    bool ok = true;
    std::string detail;
    for (double a : {0.0, 5.0, 100.0}) {
        Rng rng(derive_seed(99, static_cast<std::uint64_t>(a)));
        double s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::vector<double> xs(skew_draws);
        for (double& x : xs) {
            x = sample_skew_normal(a, rng);
            s1 += x;
        }
        const double mean = s1 / skew_draws;
        for (double x : xs) {
            const double d = x - mean;
            s2 += d * d;
            s3 += d * d * d;
        }
        const double var = s2 / skew_draws;
        const double skew = (s3 / skew_draws) / std::pow(var, 1.5);

        const double delta = a / std::sqrt(1.0 + a * a);
        const double mu = delta * std::sqrt(2.0 / std::numbers::pi);
        const double gamma = (4.0 - std::numbers::pi) / 2.0 * std::pow(mu, 3) / std::pow(1.0 - mu * mu, 1.5);
        ok = ok && std::abs(mean - mu) <= skew_tol && std::abs(skew - gamma) <= skew_tol;
        detail += fmt("%salpha=%g mean %.4f/%.4f skew %.4f/%.4f", detail.empty() ? "" : "; ", a, mean, mu, skew, gamma);
    }
    return {ok, detail};
}

// 6, 7 ------------------------------------------------------------------------

struct UciTarget {
    const char* name;
    double picp, mpiw, rmse;
};

Outcome uci_tables(const std::filesystem::path& data_dir) {
    const UciTarget targets[] = {{"boston", 0.93, 1.09, 3.13},
                                 {"concrete", 0.93, 1.02, 5.43},
                                 {"energy", 0.97, 0.42, 1.65},
                                 {"wine", 0.91, 2.22, 0.63},
                                 {"yacht", 0.95, 0.17, 0.98}};
    bool ok = true;
    std::string detail;
    for (const auto& t : targets) {
        auto c = preset(t.name, data_dir);
        c.persist_predictions = false;
        std::string line;
        if (!std::filesystem::exists(c.dataset.path)) {
            ok = false;
            line = fmt("%s: missing %s", t.name, c.dataset.path.c_str());
        } else {
            const auto r = run_benchmark(c);
            if (!r.normalized || r.partial) {
                ok = false;
                line = fmt("%s: run failed or partial", t.name);
            } else {
                const double p = r.normalized->picp.mean, w = r.normalized->mpiw.mean, e = r.original->rmse.mean;
                const bool pass = std::abs(p - t.picp) <= uci_picp_tol && std::abs(w - t.mpiw) <= uci_mpiw_rel * t.mpiw &&
                                  std::abs(e - t.rmse) <= uci_rmse_rel * t.rmse;
                ok = ok && pass;
                line = fmt("%s %s: PICP %.3f/%.2f MPIW %.3f/%.2f RMSE %.3f/%.2f, %.0fs", t.name, pass ? "ok" : "off",
                           p, t.picp, w, t.mpiw, e, t.rmse, r.wall_seconds);
            }
        }
        std::printf("    %s\n", line.c_str());
        std::fflush(stdout);
        detail += (detail.empty() ? "" : "; ") + line;
    }
    return {ok, detail};
}

Outcome yacht_alpha_sweep(const std::filesystem::path& data_dir) {
    auto c = preset("yacht", data_dir);
    if (!std::filesystem::exists(c.dataset.path)) return {false, "missing " + c.dataset.path.string()};
    c.persist_predictions = false;
    const std::vector<double> alphas{0.05, 0.10, 0.15, 0.20, 0.25, 0.30};
    const auto sweep = run_alpha_sweep(c, alphas);
    const auto imp = mpiw_improvement(sweep);
    if (imp.size() != alphas.size()) return {false, "sweep incomplete"};
    double mean_imp = 0.0;
    for (auto [a, v] : imp) mean_imp += v / static_cast<double>(imp.size());
    const auto rmse_range = [&](const std::string& method) {
        double lo = 1e300, hi = 0.0;
        for (const auto& cell : sweep.cells) {
            if (cell.method != method) continue;
            lo = std::min(lo, cell.original->rmse.mean);
            hi = std::max(hi, cell.original->rmse.mean);
        }
        return std::pair{lo, hi};
    };
    const auto [plo, phi] = rmse_range("piven");
    double qd_first = 0.0, qd_last = 0.0;
    for (const auto& cell : sweep.cells) {
        if (cell.method != "qd") continue;
        if (cell.alpha == alphas.front()) qd_first = cell.original->rmse.mean;
        if (cell.alpha == alphas.back()) qd_last = cell.original->rmse.mean;
    }
    const bool ok = mean_imp > 0.0 && imp.back().second > imp.front().second &&
                    (phi - plo) / plo < alpha_rmse_spread && qd_last > qd_first;
    return {ok, fmt("mean MPIW improvement %.1f%%, %.1f%% at 0.05 -> %.1f%% at 0.30; piven RMSE spread %.1f%%; "
                    "qd RMSE %.3f -> %.3f",
                    100 * mean_imp, 100 * imp.front().second, 100 * imp.back().second, 100 * (phi - plo) / plo,
                    qd_first, qd_last)};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    bool fast = false, uci = false;
    std::vector<int> only;
    std::string data_dir = std::string(PIVEN_SOURCE_DIR) + "/data";
    app.add_flag("--fast", fast, "Criteria 1-5 and 8-10");
    app.add_flag("--uci", uci, "Criteria 6-7");
    app.add_option("--only", only, "Run only these criteria")->delimiter(',');
    app.add_option("--data-dir", data_dir)->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    if (!fast && !uci && only.empty()) fast = uci = true;

    const auto wanted = [&](int id) {
        if (!only.empty()) return std::find(only.begin(), only.end(), id) != only.end();
        const bool is_uci = id == 6 || id == 7;
        return is_uci ? uci : fast;
    };

    if (wanted(1)) report(1, "gradient fidelity", gradient_fidelity);
    if (wanted(2)) report(2, "containment invariant", containment);
    if (wanted(3)) report(3, "metric oracles", metric_oracles);
    if (wanted(4)) report(4, "ensemble identities", ensemble_identities);
    if (wanted(5)) report(5, "synthetic sine", synthetic_sine);
    if (wanted(6)) report(6, "benchmark tables", [&] { return uci_tables(data_dir); });
    if (wanted(7)) report(7, "alpha sweep", [&] { return yacht_alpha_sweep(data_dir); });
    if (wanted(8)) report(8, "beta sweep", beta_sweep);
    if (wanted(9)) report(9, "lambda sweep", lambda_sweep);
    if (wanted(10)) report(10, "skew-normal sampler", skew_normal_moments);
    return failures == 0 ? 0 : 1;
}
