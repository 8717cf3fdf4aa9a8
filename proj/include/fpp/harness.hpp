#pragma once

// Subcommand implementations shared by the CLI and the test suite.  Every
// artifact is a CSV (or JSON) file stamped with the config hash and seed, so
// reruns with the same configuration are byte-identical.

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <thread>

#include "fpp/config.hpp"
#include "fpp/csv.hpp"
#include "fpp/drift_audit.hpp"
#include "fpp/portfolio.hpp"
#include "fpp/power_exact.hpp"
#include "fpp/svg.hpp"

namespace fpp {

struct HarnessContext {
    RunConfig cfg;
    std::shared_ptr<MarketModel> model;
    std::shared_ptr<ValueSurface> surface;

    int threads() const {
        if (cfg.threads > 0) return cfg.threads;
        const unsigned hc = std::thread::hardware_concurrency();
        return hc > 0 ? static_cast<int>(hc) : 1;
    }
};

inline HarnessContext make_context(const RunConfig& cfg) {
    HarnessContext ctx;
    ctx.cfg = cfg;
    ctx.model = std::make_shared<MarketModel>(cfg.build_model());
    validate_config_model(cfg, *ctx.model);
    ctx.surface = std::make_shared<ValueSurface>(ctx.model);
    return ctx;
}

namespace detail {

inline void stamp(CsvWriter& w, const RunConfig& cfg, const std::string& subcommand) {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(cfg.hash()));
    w.comment("subcommand", subcommand);
    w.comment("config_hash", std::string(hash));
    w.comment("seed", std::to_string(cfg.seed));
    w.comment("preset", cfg.preset);
}

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

inline CirPowerConfig benchmark_config(const RunConfig& cfg) {
    if (cfg.cir_model) return *cfg.cir_model;
    if (cfg.ou_model)
        throw ValidationError(
            "convergence studies need a closed-form benchmark; use a cir-power family model");
    return preset_cir_config(cfg.preset);
}

}  // namespace detail

// Surface evaluation over the configured grid.
inline std::string run_eval(const HarnessContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    CsvWriter w;
    detail::stamp(w, cfg, "eval");
    w.comment("delta", cfg.eval_delta);
    w.comment("epsilon", cfg.eval_epsilon);
    if (ctx.model->v0.derivatives_are_fd())
        w.comment("warning", "datum derivatives are finite differences; orders 3+ are noisy");
    w.header({"t", "x", "y1", "y2", "v0", "v10", "v01", "combined", "v0_x", "v0_xx", "v0_xxx",
              "v0_xxxx", "v0_y1", "v0_xy1"});
    for (double t : cfg.grid_t) {
        for (double x : cfg.grid_x) {
            for (double y1 : cfg.grid_y1) {
                for (double y2 : cfg.grid_y2) {
                    const ExpansionResult r =
                        ctx.surface->approx_value(t, x, y1, y2, cfg.eval_delta, cfg.eval_epsilon);
                    const DerivativeStack s = ctx.surface->v0_eval(t, x, y1);
                    const auto [vy, vxy] = ctx.surface->v0_cross_derivatives(t, x, y1);
                    w.row({t, x, y1, y2, r.v0, r.v10, r.v01, r.combined, s.d1, s.d2, s.d3, s.d4,
                           vy, vxy});
                }
            }
        }
    }
    const std::string path = detail::out_path(cfg, "eval.csv");
    w.write(path);
    return path;
}

// Convergence studies against the closed-form benchmark.
inline std::string run_converge(const HarnessContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const CirPowerConfig bench = detail::benchmark_config(cfg);
    CsvWriter w;
    detail::stamp(w, cfg, "converge");
    w.comment("mode", cfg.converge_mode);
    w.comment("study_t", cfg.study.t);
    w.comment("study_x", cfg.study.x);
    w.comment("study_y", cfg.study.y);

    if (cfg.converge_mode == "slow") {
        if (bench.dep != LambdaDependence::SlowOnly)
            throw ValidationError("converge_mode=slow needs a slow-only benchmark model");
        const StudyResult st = error_study(slow_benchmark_params(bench), *ctx.surface,
                                           cfg.grid_delta, cfg.study.t, cfg.study.x, cfg.study.y);
        w.comment("slope_one_term", st.slope_one);
        w.comment("slope_two_term", st.slope_two);
        w.comment("points_dropped", static_cast<double>(st.n_dropped));
        w.header({"delta", "err_one_term", "err_two_term", "dropped"});
        for (const auto& r : st.rows)
            w.row({r.param, r.err_one, r.err_two, r.dropped ? 1.0 : 0.0});
        std::cout << "two-term slope " << st.slope_two << ", one-term slope " << st.slope_one
                  << "\n";
    } else if (cfg.converge_mode == "fast") {
        if (bench.dep != LambdaDependence::FastOnly)
            throw ValidationError("converge_mode=fast needs a fast-only benchmark model");
        const StudyResult st =
            fast_reparam_study(fast_benchmark_params(bench), *ctx.surface, cfg.grid_epsilon,
                               cfg.study.t, cfg.study.x, cfg.study.y);
        w.comment("slope_one_term", st.slope_one);
        w.comment("slope_two_term", st.slope_two);
        w.header({"epsilon", "err_one_term", "err_two_term", "dropped"});
        for (const auto& r : st.rows)
            w.row({r.param, r.err_one, r.err_two, r.dropped ? 1.0 : 0.0});
        std::cout << "two-term slope " << st.slope_two << ", one-term slope " << st.slope_one
                  << "\n";
    } else {
        // separable two-scale benchmark: slow leg from this config, fast leg
        // from the fast preset
        if (bench.dep != LambdaDependence::SlowOnly)
            throw ValidationError("converge_mode=multi needs a slow-only benchmark model");
        const CirPowerConfig fast_cfg = preset_cir_power_fast();
        auto fast_model = std::make_shared<MarketModel>(build_cir_power_model(fast_cfg));
        ValueSurface fast_surface(fast_model);
        const auto rows = multiscale_study(slow_benchmark_params(bench), *ctx.surface,
                                           fast_benchmark_params(fast_cfg), fast_surface,
                                           cfg.grid_delta, cfg.grid_epsilon, cfg.study.t,
                                           cfg.study.x, cfg.study.y);
        w.comment("fast_leg", "cir-power-fast");
        w.header({"delta", "epsilon", "err_slow", "err_fast", "combined", "ratio", "has_oracle"});
        double rmin = 1e300, rmax = 0.0;
        for (const auto& r : rows) {
            w.row({r.delta, r.epsilon, r.err_slow, r.err_fast, r.combined, r.ratio,
                   r.has_oracle ? 1.0 : 0.0});
            rmin = std::min(rmin, r.ratio);
            rmax = std::max(rmax, r.ratio);
        }
        w.comment("ratio_spread", rmax / rmin);
        std::cout << "combined error ratio spread " << (rmax / rmin) << "\n";
    }
    const std::string path = detail::out_path(cfg, "converge.csv");
    w.write(path);
    return path;
}

// First-order feedback portfolio at the study point.
inline std::string run_portfolio(const HarnessContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const double t = cfg.study.t, x = cfg.study.x;
    const double y1 = cfg.study.y, y2 = ctx.model->y2_ref;
    const PortfolioVector p =
        pi_approx(*ctx.surface, t, x, y1, y2, cfg.eval_delta, cfg.eval_epsilon);
    CsvWriter w;
    detail::stamp(w, cfg, "portfolio");
    w.comment("t", t);
    w.comment("x", x);
    w.comment("y1", y1);
    w.comment("y2", y2);
    w.comment("delta", cfg.eval_delta);
    w.comment("epsilon", cfg.eval_epsilon);
    w.header({"asset", "weight", "myopic", "slow_hedge", "fast_hedge", "fraction_of_wealth"});
    for (int i = 0; i < p.weights.size(); ++i) {
        w.row({static_cast<double>(i), p.weights(i), p.myopic(i), p.slow_hedge(i),
               p.fast_hedge(i), p.weights(i) / x});
        std::cout << "asset " << i << ": weight " << p.weights(i) << " (myopic " << p.myopic(i)
                  << ", slow hedge " << p.slow_hedge(i) << ", fast hedge " << p.fast_hedge(i)
                  << ")\n";
    }
    const std::string path = detail::out_path(cfg, "portfolio.csv");
    w.write(path);
    return path;
}

// Drift scan of the exact benchmarks along exact and first-order rules.
inline std::string run_drift(const HarnessContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const CirPowerConfig bench = detail::benchmark_config(ctx.cfg);
    if (bench.dep != LambdaDependence::SlowOnly)
        throw ValidationError("drift scan needs a slow-only benchmark model");
    const CirPowerConfig fast_cfg = preset_cir_power_fast();
    auto fast_model = std::make_shared<MarketModel>(build_cir_power_model(fast_cfg));
    auto fast_surface = std::make_shared<ValueSurface>(fast_model);
    const PowerModelParams pf = fast_benchmark_params(fast_cfg);

    std::vector<GridState> grid;
    for (double t : cfg.grid_t)
        if (t > 0.0)
            for (double x : cfg.grid_x)
                for (double y : cfg.grid_y1) grid.push_back({t, x, y, ctx.model->y2_ref});

    CsvWriter w;
    detail::stamp(w, cfg, "drift");
    w.header({"delta", "epsilon", "sup_theta_exact_rel", "sup_theta_slow", "sup_theta_fast",
              "sup_theta_combined", "ratio"});
    double exact_worst = 0.0;
    for (const auto& [delta, epsilon] : cfg.drift_pairs) {
        PowerModelParams ps = slow_benchmark_params(bench, std::max(delta, 1e-300));
        const PowerSurface exact = make_power_surface(ps);
        auto model = ctx.model;
        auto surface = ctx.surface;

        GeneratorInput g_exact;
        g_exact.model = model.get();
        g_exact.surface = AuditSurface::from_power_slow(exact);
        g_exact.delta = ps.delta;
        g_exact.portfolio = [model, exact, ps](double t, double x, double y1, double y2) {
            const Eigen::VectorXd lam = model->lambda(y1, y2);
            const double vx = exact.vx(t, x, y1), vxx = exact.vxx(t, x, y1),
                         vxy = exact.vxy(t, x, y1);
            const Eigen::VectorXd e =
                ((lam * vx + std::sqrt(ps.delta) * model->slow.kappa(y1) * vxy * model->rho_s) /
                 (-vxx))
                    .eval();
            return (sigma_pinv(model->sigma(y1, y2)).transpose() * e).eval();
        };
        const ThetaScanRow exact_row = theta_scan_row(g_exact, grid);
        exact_worst = std::max(exact_worst, exact_row.sup_rel_theta);

        GeneratorInput g_slow = g_exact;
        g_slow.portfolio = [surface, delta](double t, double x, double y1, double) {
            return pi_approx_slow(*surface, t, x, y1, delta).weights;
        };
        const ThetaScanRow slow_row = theta_scan_row(g_slow, grid);

        double fast_sup = 0.0;
        if (epsilon > 0.0) {
            const FastBranchSolution fb = fast_branch_solution(pf, epsilon);
            GeneratorInput g_fast;
            g_fast.model = fast_model.get();
            g_fast.surface = AuditSurface::from_fast_branch(fb);
            g_fast.epsilon = epsilon;
            g_fast.portfolio = [fast_surface, epsilon](double t, double x, double, double y2) {
                return pi_approx_fast(*fast_surface, t, x, y2, epsilon).weights;
            };
            std::vector<GridState> fgrid;
            for (const GridState& st : grid) fgrid.push_back({st.t, st.x, 1.0, st.y1});
            fast_sup = theta_scan_row(g_fast, fgrid).sup_abs_theta;
        }
        const double combined = slow_row.sup_abs_theta + fast_sup;
        const double ratio = (delta + epsilon) > 0.0 ? combined / (delta + epsilon) : 0.0;
        w.row({delta, epsilon, exact_row.sup_rel_theta, slow_row.sup_abs_theta, fast_sup,
               combined, ratio});
        std::cout << "delta " << delta << " epsilon " << epsilon << ": sup|Theta| " << combined
                  << ", ratio " << ratio << "\n";
    }
    w.comment("sup_theta_exact_rel_overall", exact_worst);
    const std::string path = detail::out_path(cfg, "drift.csv");
    w.write(path);
    return path;
}

// Allocation-free exposure rule of the exact benchmark optimizer, for the
// simulation hot loop: e = (x/g) sqrt(y1) (Lambda + sqrt(delta) beta rho_s
// q A1(t)), independent of sigma because sigma^T (sigma^T)^+ is the identity.
inline std::function<double(double, double, double, double, double*)>
make_power_exposure_kernel(const CirPowerConfig& bench, const PowerModelParams& ps,
                           const PowerSurface& exact) {
    std::vector<double> lv(ps.Lambda.data(), ps.Lambda.data() + ps.Lambda.size());
    std::vector<double> rv(ps.rho.data(), ps.rho.data() + ps.rho.size());
    const double gamma = bench.gamma_ra;
    const double sqd = std::sqrt(ps.delta);
    const double sbeta = bench.slow_beta;
    const double qv = exact.q;
    const RiccatiSolution sol = exact.sol;
    return [lv, rv, gamma, sqd, sbeta, qv, sol](double t, double x, double y1, double,
                                                double* e) {
        const double sy = std::sqrt(std::max(y1, 0.0));
        const double a1 = qv * sol.A1(t);
        const double xg = x / gamma;
        double edl = 0.0;
        for (std::size_t r = 0; r < lv.size(); ++r) {
            e[r] = xg * sy * (lv[r] + sqd * sbeta * rv[r] * a1);
            edl += e[r] * lv[r] * sy;
        }
        return edl;
    };
}

// Monte Carlo martingale audit under the exact optimizer of the benchmark.
inline std::string run_simulate(const HarnessContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const CirPowerConfig bench = detail::benchmark_config(ctx.cfg);
    if (bench.dep != LambdaDependence::SlowOnly)
        throw ValidationError("simulate needs a slow-only benchmark model");
    PowerModelParams ps = slow_benchmark_params(bench, cfg.simulate.delta);
    const PowerSurface exact = make_power_surface(ps);
    auto model = ctx.model;
    const PortfolioFn pi = [model, exact, ps](double t, double x, double y1, double y2) {
        const Eigen::VectorXd lam = model->lambda(y1, y2);
        const double vx = exact.vx(t, x, y1), vxx = exact.vxx(t, x, y1),
                     vxy = exact.vxy(t, x, y1);
        const Eigen::VectorXd e =
            ((lam * vx + std::sqrt(ps.delta) * model->slow.kappa(y1) * vxy * model->rho_s) /
             (-vxx))
                .eval();
        return (sigma_pinv(model->sigma(y1, y2)).transpose() * e).eval();
    };
    const AuditSurface::Fn value_fn = [exact](double t, double x, double y1, double) {
        return exact.value(t, x, y1);
    };
    SimOptions opt;
    opt.threads = ctx.threads();
    opt.antithetic = cfg.simulate.antithetic;
    opt.slow_floor = 1e-10;
    opt.exposure = make_power_exposure_kernel(bench, ps, exact);
    std::vector<double> dump;
    if (cfg.simulate.dump_paths) opt.path_dump = &dump;
    const McReport rep = simulate_paths(*model, pi, value_fn, cfg.simulate.x0, cfg.simulate.y10,
                                        cfg.simulate.y20, cfg.simulate.horizon, cfg.simulate.dt,
                                        cfg.simulate.n_paths, cfg.seed, cfg.simulate.delta,
                                        cfg.simulate.epsilon, opt);
    CsvWriter w;
    detail::stamp(w, cfg, "simulate");
    w.header({"n_paths", "dt", "horizon", "mean_deviation", "std_error", "n_excluded"});
    w.row({static_cast<double>(rep.n_paths), rep.dt, cfg.simulate.horizon, rep.mean_deviation,
           rep.std_error, static_cast<double>(rep.n_excluded)});
    const std::string path = detail::out_path(cfg, "simulate.csv");
    w.write(path);
    if (cfg.simulate.dump_paths) {
        CsvWriter wd;
        detail::stamp(wd, cfg, "simulate-paths");
        wd.comment("warning", "one row per path; large");
        wd.header({"path", "terminal_value"});
        for (std::size_t i = 0; i < dump.size(); ++i)
            wd.row({static_cast<double>(i), dump[i]});
        wd.write(detail::out_path(cfg, "simulate_paths.csv"));
    }
    std::cout << "mean deviation " << rep.mean_deviation << " (se " << rep.std_error
              << ", paths " << rep.n_paths << ", excluded " << rep.n_excluded << ")\n";
    return path;
}

// Corrector derivative table with generator plug-back residuals.
inline std::string run_poisson(const HarnessContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const MarketModel& m = *ctx.model;
    CsvWriter w;
    detail::stamp(w, cfg, "poisson");
    w.comment("trunc_lo", m.invariant().lo());
    w.comment("trunc_hi", m.invariant().hi());
    w.header({"y1", "y2", "phi_prime", "phi", "plugback_residual"});
    for (double y1 : cfg.grid_y1) {
        const PhiSolver phi(m, y1);
        const double lb2 = phi.lambda_bar_squared();
        for (double y2 : cfg.grid_y2) {
            const double h = 1e-4 * (1.0 + std::abs(y2));
            const double pp = (phi.prime(y2 + h) - phi.prime(y2 - h)) / (2.0 * h);
            const double a = m.fast.vol(y2);
            const double resid = 0.5 * a * a * pp + m.fast.drift(y2) * phi.prime(y2) +
                                 (m.lambda(y1, y2).squaredNorm() - lb2);
            w.row({y1, y2, phi.prime(y2), phi.value(y2), resid});
        }
    }
    const std::string path = detail::out_path(cfg, "poisson.csv");
    w.write(path);
    return path;
}

// Line chart from a previously emitted CSV.
inline std::string run_plot(const RunConfig& cfg, const std::string& csv_path,
                            const std::string& x_col, const std::string& y_col, bool log_log) {
    const CsvTable t = read_csv(csv_path);
    const int xi = t.column_index(x_col);
    const int yi = t.column_index(y_col);
    SvgSeries s;
    s.name = y_col;
    for (const auto& r : t.rows) s.points.emplace_back(r[xi], r[yi]);
    const std::string path = detail::out_path(cfg, "plot.svg");
    write_line_chart(path, csv_path, x_col, y_col, {s}, log_log, log_log);
    return path;
}

}  // namespace fpp
