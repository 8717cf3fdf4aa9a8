#pragma once

// Drift audit of a value surface along a feedback portfolio.
//
// Ito drift of V(t, X^pi, Y_slow, Y_fast) with exposure e = sigma^T pi:
//   Theta = V_t + e.lambda V_x + 1/2 |e|^2 V_xx
//         + delta b V_y1 + (delta kappa^2 / 2) V_y1y1
//         + (gamma/eps) V_y2 + (alpha^2 / 2 eps) V_y2y2
//         + sqrt(delta) kappa (e.rho_s) V_xy1
//         + (alpha/sqrt(eps)) (e.rho_f) V_xy2
//         + sqrt(delta/eps) kappa alpha rho_sf V_y1y2.
// For the exact benchmark along its exact optimizer this vanishes; along the
// first-order feedback rule it is the bounded-variation leak the scan
// measures.  Monte Carlo paths check the martingale property directly.

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "fpp/errors.hpp"
#include "fpp/expansion.hpp"
#include "fpp/portfolio.hpp"
#include "fpp/power_exact.hpp"
#include "fpp/rng.hpp"

namespace fpp {

template <class F>
inline void parallel_for(std::size_t n, int threads, const F& body) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t chunk = std::max<std::size_t>(1, n / (8 * threads));
    for (int k = 0; k < threads; ++k) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t begin = next.fetch_add(chunk);
                if (begin >= n) return;
                const std::size_t end = std::min(n, begin + chunk);
                for (std::size_t i = begin; i < end; ++i) body(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

// Value surface with partial derivatives in all state directions.
struct AuditSurface {
    using Fn = std::function<double(double, double, double, double)>;
    Fn v, vt, vx, vxx, vy1, vy1y1, vy2, vy2y2, vxy1, vxy2, vy1y2;
    double fd_step_x = 0.0;  // nonzero when partials come from finite differences

    static AuditSurface from_power_slow(const PowerSurface& s) {
        AuditSurface a;
        auto zero = [](double, double, double, double) { return 0.0; };
        a.v = [s](double t, double x, double y1, double) { return s.value(t, x, y1); };
        a.vt = [s](double t, double x, double y1, double) { return s.vt(t, x, y1); };
        a.vx = [s](double t, double x, double y1, double) { return s.vx(t, x, y1); };
        a.vxx = [s](double t, double x, double y1, double) { return s.vxx(t, x, y1); };
        a.vy1 = [s](double t, double x, double y1, double) { return s.vy(t, x, y1); };
        a.vy1y1 = [s](double t, double x, double y1, double) { return s.vyy(t, x, y1); };
        a.vxy1 = [s](double t, double x, double y1, double) { return s.vxy(t, x, y1); };
        a.vy2 = zero;
        a.vy2y2 = zero;
        a.vxy2 = zero;
        a.vy1y2 = zero;
        return a;
    }

    static AuditSurface from_fast_branch(const FastBranchSolution& s) {
        AuditSurface a;
        auto zero = [](double, double, double, double) { return 0.0; };
        a.v = [s](double t, double x, double, double y2) { return s.value(t, x, y2); };
        a.vt = [s](double t, double x, double, double y2) { return s.vt(t, x, y2); };
        a.vx = [s](double t, double x, double, double y2) { return s.vx(t, x, y2); };
        a.vxx = [s](double t, double x, double, double y2) { return s.vxx(t, x, y2); };
        a.vy2 = [s](double t, double x, double, double y2) { return s.vy(t, x, y2); };
        a.vy2y2 = [s](double t, double x, double, double y2) { return s.vyy(t, x, y2); };
        a.vxy2 = [s](double t, double x, double, double y2) { return s.vxy(t, x, y2); };
        a.vy1 = zero;
        a.vy1y1 = zero;
        a.vxy1 = zero;
        a.vy1y2 = zero;
        return a;
    }

    // central finite differences around a plain value handle
    static AuditSurface from_value(const Fn& f, double hx = 1e-4, double ht = 1e-4,
                                   double hy = 1e-4) {
        AuditSurface a;
        a.fd_step_x = hx;
        a.v = f;
        a.vt = [f, ht](double t, double x, double y1, double y2) {
            return (f(t + ht, x, y1, y2) - f(t - ht, x, y1, y2)) / (2 * ht);
        };
        a.vx = [f, hx](double t, double x, double y1, double y2) {
            return (f(t, x + hx, y1, y2) - f(t, x - hx, y1, y2)) / (2 * hx);
        };
        a.vxx = [f, hx](double t, double x, double y1, double y2) {
            return (f(t, x + hx, y1, y2) - 2 * f(t, x, y1, y2) + f(t, x - hx, y1, y2)) /
                   (hx * hx);
        };
        a.vy1 = [f, hy](double t, double x, double y1, double y2) {
            return (f(t, x, y1 + hy, y2) - f(t, x, y1 - hy, y2)) / (2 * hy);
        };
        a.vy1y1 = [f, hy](double t, double x, double y1, double y2) {
            return (f(t, x, y1 + hy, y2) - 2 * f(t, x, y1, y2) + f(t, x, y1 - hy, y2)) /
                   (hy * hy);
        };
        a.vy2 = [f, hy](double t, double x, double y1, double y2) {
            return (f(t, x, y1, y2 + hy) - f(t, x, y1, y2 - hy)) / (2 * hy);
        };
        a.vy2y2 = [f, hy](double t, double x, double y1, double y2) {
            return (f(t, x, y1, y2 + hy) - 2 * f(t, x, y1, y2) + f(t, x, y1, y2 - hy)) /
                   (hy * hy);
        };
        a.vxy1 = [f, hx, hy](double t, double x, double y1, double y2) {
            return (f(t, x + hx, y1 + hy, y2) - f(t, x + hx, y1 - hy, y2) -
                    f(t, x - hx, y1 + hy, y2) + f(t, x - hx, y1 - hy, y2)) /
                   (4 * hx * hy);
        };
        a.vxy2 = [f, hx, hy](double t, double x, double y1, double y2) {
            return (f(t, x + hx, y1, y2 + hy) - f(t, x + hx, y1, y2 - hy) -
                    f(t, x - hx, y1, y2 + hy) + f(t, x - hx, y1, y2 - hy)) /
                   (4 * hx * hy);
        };
        a.vy1y2 = [f, hy](double t, double x, double y1, double y2) {
            return (f(t, x, y1 + hy, y2 + hy) - f(t, x, y1 + hy, y2 - hy) -
                    f(t, x, y1 - hy, y2 + hy) + f(t, x, y1 - hy, y2 - hy)) /
                   (4 * hy * hy);
        };
        return a;
    }
};

using PortfolioFn = std::function<Eigen::VectorXd(double, double, double, double)>;

struct GeneratorInput {
    const MarketModel* model = nullptr;
    AuditSurface surface;
    PortfolioFn portfolio;
    double delta = 0.0;
    double epsilon = 0.0;
};

struct ThetaValue {
    double theta = 0.0;
    double scale = 0.0;  // sum of absolute contributions, for relative checks
    double relative() const { return scale > 0.0 ? std::abs(theta) / scale : 0.0; }
};

inline ThetaValue generator_theta(const GeneratorInput& g, double t, double x, double y1,
                                  double y2) {
    const MarketModel& m = *g.model;
    const AuditSurface& s = g.surface;
    const Eigen::VectorXd pi = g.portfolio(t, x, y1, y2);
    const Eigen::VectorXd e = m.sigma(y1, y2).transpose() * pi;
    const Eigen::VectorXd lam = m.lambda(y1, y2);
    const double kappa = m.slow.kappa(y1);
    const double alpha = m.fast.vol(y2);

    const double vy2 = s.vy2(t, x, y1, y2);
    const double vy2y2 = s.vy2y2(t, x, y1, y2);
    const double vxy2 = s.vxy2(t, x, y1, y2);
    const double vy1y2 = s.vy1y2(t, x, y1, y2);
    const bool fast_active = (vy2 != 0.0 || vy2y2 != 0.0 || vxy2 != 0.0 || vy1y2 != 0.0);
    if (fast_active && !(g.epsilon > 0.0))
        throw NumericError("surface depends on the fast state but epsilon is zero");

    double terms[10] = {0};
    terms[0] = s.vt(t, x, y1, y2);
    terms[1] = e.dot(lam) * s.vx(t, x, y1, y2);
    terms[2] = 0.5 * e.squaredNorm() * s.vxx(t, x, y1, y2);
    if (g.delta > 0.0) {
        terms[3] = g.delta * m.slow.b(y1) * s.vy1(t, x, y1, y2);
        terms[4] = 0.5 * g.delta * kappa * kappa * s.vy1y1(t, x, y1, y2);
        terms[5] = std::sqrt(g.delta) * kappa * e.dot(m.rho_s) * s.vxy1(t, x, y1, y2);
    }
    if (fast_active) {
        terms[6] = m.fast.drift(y2) / g.epsilon * vy2;
        terms[7] = 0.5 * alpha * alpha / g.epsilon * vy2y2;
        terms[8] = alpha / std::sqrt(g.epsilon) * e.dot(m.rho_f) * vxy2;
        if (g.delta > 0.0)
            terms[9] = std::sqrt(g.delta / g.epsilon) * kappa * alpha * m.rho_sf * vy1y2;
    }
    ThetaValue out;
    for (double v : terms) {
        out.theta += v;
        out.scale += std::abs(v);
    }
    return out;
}

struct GridState {
    double t, x, y1, y2;
};

struct ThetaScanRow {
    double delta = 0.0;
    double epsilon = 0.0;
    double sup_abs_theta = 0.0;
    double sup_rel_theta = 0.0;
    double ratio = 0.0;  // sup_abs / (delta + epsilon)
};

inline ThetaScanRow theta_scan_row(const GeneratorInput& g, const std::vector<GridState>& grid) {
    if (grid.empty()) throw Error("theta scan needs a nonempty grid");
    ThetaScanRow row;
    row.delta = g.delta;
    row.epsilon = g.epsilon;
    for (const GridState& st : grid) {
        const ThetaValue tv = generator_theta(g, st.t, st.x, st.y1, st.y2);
        row.sup_abs_theta = std::max(row.sup_abs_theta, std::abs(tv.theta));
        row.sup_rel_theta = std::max(row.sup_rel_theta, tv.relative());
    }
    const double denom = g.delta + g.epsilon;
    row.ratio = denom > 0.0 ? row.sup_abs_theta / denom : 0.0;
    return row;
}

struct McReport {
    double mean_deviation = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::size_t n_excluded = 0;
};

struct SimOptions {
    int threads = 1;
    bool antithetic = false;
    double state_cap = 1e8;
    double slow_floor = -std::numeric_limits<double>::infinity();
    double fast_floor = -std::numeric_limits<double>::infinity();
    std::vector<double>* path_dump = nullptr;  // terminal values per path
    // Optional allocation-free feedback kernel for the hot loop: writes the
    // exposure sigma^T pi into e[0..d) and returns e . lambda.  When absent
    // the generic portfolio/sigma/lambda handles are used.
    std::function<double(double t, double x, double y1, double y2, double* e)> exposure;
};

// Euler-Maruyama simulation of (X, Y_slow, Y_fast) under a feedback rule with
// correlated increments; reports the sample deviation of terminal_value along
// paths from its time-zero value.  Square-root states use full truncation at
// the floor.  Path substreams keep results identical for any thread count.
inline McReport simulate_paths(const MarketModel& model, const PortfolioFn& portfolio,
                               const AuditSurface::Fn& terminal_value, double x0, double y10,
                               double y20, double horizon, double dt, std::size_t n_paths,
                               std::uint64_t seed, double delta, double epsilon,
                               const SimOptions& opt = {}) {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw ValidationError("dt and horizon must be positive");
    if (epsilon > 0.0 && dt > epsilon / 10.0)
        throw ValidationError("dt must not exceed epsilon/10 to resolve the fast factor");
    const Eigen::MatrixXd R = model.correlation_matrix();
    Eigen::LLT<Eigen::MatrixXd> llt(R);
    Eigen::MatrixXd L;
    if (llt.info() == Eigen::Success) {
        L = llt.matrixL();
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw InvalidModelError("correlation matrix of (W, B1, B2) is not PSD");
        L = es.eigenvectors() *
            es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    const int d = model.d_factors;
    const std::size_t n_steps = static_cast<std::size_t>(std::llround(horizon / dt));
    const double sq_dt = std::sqrt(dt);
    const double sq_delta = std::sqrt(delta);
    const double sq_eps_inv = epsilon > 0.0 ? 1.0 / std::sqrt(epsilon) : 0.0;

    std::vector<double> terminal(n_paths, 0.0);
    std::vector<std::uint8_t> excluded(n_paths, 0);

    // factor draws beyond the assets are skipped for frozen factors
    const int nz = epsilon > 0.0 ? d + 2 : (delta > 0.0 ? d + 1 : d);

    auto run_path = [&](std::size_t i) {
        const int reps = opt.antithetic ? 2 : 1;
        double acc = 0.0;
        // antithetic pairs replay the same substream with flipped increments
        std::vector<double> z(nz);
        std::vector<double> e_buf(d);
        for (int rep = 0; rep < reps; ++rep) {
            PathRng path_rng(seed, i);
            const double flip = (rep == 0) ? 1.0 : -1.0;
            double x = x0, y1 = y10, y2 = y20;
            double tcur = 0.0;
            bool dead = false;
            for (std::size_t k = 0; k < n_steps; ++k) {
                for (int j = 0; j < nz; ++j) z[j] = flip * path_rng.normal();
                const double y1e = std::max(y1, opt.slow_floor);
                const double y2e = std::max(y2, opt.fast_floor);

                double edotlam;
                if (opt.exposure) {
                    edotlam = opt.exposure(tcur, x, y1e, y2e, e_buf.data());
                } else {
                    const Eigen::VectorXd pi = portfolio(tcur, x, y1e, y2e);
                    const Eigen::VectorXd e = model.sigma(y1e, y2e).transpose() * pi;
                    edotlam = e.dot(model.lambda(y1e, y2e));
                    for (int r = 0; r < d; ++r) e_buf[r] = e(r);
                }
                double edW = 0.0;
                for (int r = 0; r < d; ++r) {
                    double w = 0.0;
                    for (int j = 0; j <= r; ++j) w += L(r, j) * z[j];
                    edW += e_buf[r] * w;
                }
                x += edotlam * dt + edW * sq_dt;
                if (delta > 0.0) {
                    double dB1 = 0.0;
                    for (int j = 0; j <= d; ++j) dB1 += L(d, j) * z[j];
                    y1 = std::max(y1 + delta * model.slow.b(y1e) * dt +
                                      sq_delta * model.slow.kappa(y1e) * dB1 * sq_dt,
                                  opt.slow_floor);
                }
                if (epsilon > 0.0) {
                    double dB2 = 0.0;
                    for (int j = 0; j <= d + 1; ++j) dB2 += L(d + 1, j) * z[j];
                    y2 = std::max(y2 + model.fast.drift(y2e) / epsilon * dt +
                                      sq_eps_inv * model.fast.vol(y2e) * dB2 * sq_dt,
                                  opt.fast_floor);
                }
                tcur += dt;
                if (!(std::abs(x) < opt.state_cap) || !(std::abs(y1) < opt.state_cap) ||
                    !(std::abs(y2) < opt.state_cap)) {
                    dead = true;
                    break;
                }
            }
            if (dead) {
                excluded[i] = 1;
                return;
            }
            acc += terminal_value(horizon, x, y1, y2);
        }
        terminal[i] = acc / reps;
    };

    parallel_for(n_paths, opt.threads, run_path);

    // order-independent aggregation: fixed index order with compensation
    const double v00 = terminal_value(0.0, x0, y10, y20);
    McReport rep;
    rep.n_paths = n_paths;
    rep.dt = dt;
    rep.seed = seed;
    double sum = 0.0, comp = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        if (excluded[i]) {
            ++rep.n_excluded;
            continue;
        }
        const double term = terminal[i] - v00;
        const double yk = term - comp;
        const double tk = sum + yk;
        comp = (tk - sum) - yk;
        sum = tk;
        ++kept;
    }
    if (kept == 0) throw NumericError("all paths were excluded");
    rep.mean_deviation = sum / kept;
    double var = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        if (excluded[i]) continue;
        const double dev = (terminal[i] - v00) - rep.mean_deviation;
        var += dev * dev;
    }
    var /= (kept > 1 ? kept - 1 : 1);
    rep.std_error = std::sqrt(var / kept);
    if (opt.path_dump) *opt.path_dump = terminal;
    return rep;
}

}  // namespace fpp
