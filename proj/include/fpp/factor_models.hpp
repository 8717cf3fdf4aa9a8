#pragma once

// Market and factor specification plus every averaged quantity the expansion
// needs: the invariant density of the fast factor, the averaged market price
// of risk lambda_bar(y1), the Poisson-corrector derivative phi_y2, and the
// correction constants C10(y1), C01(y1).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "fpp/errors.hpp"
#include "fpp/quadrature.hpp"
#include "fpp/widder.hpp"

namespace fpp {

struct FastFactor {
    std::function<double(double)> drift;  // gamma(y2)
    std::function<double(double)> vol;    // alpha(y2), strictly positive inside the domain
    double domain_lo = -std::numeric_limits<double>::infinity();
    double domain_hi = std::numeric_limits<double>::infinity();
    // finite quadrature hints; the builder expands or shrinks them to where the
    // invariant density falls below the relative floor
    double trunc_lo = -5.0;
    double trunc_hi = 5.0;
};

struct SlowFactor {
    std::function<double(double)> b;
    std::function<double(double)> kappa;  // strictly positive on the sampled domain
};

namespace detail {

// Barycentric interpolation on Chebyshev points of the second kind.
struct ChebPanel {
    double a = 0.0, b = 0.0;
    std::vector<double> values;  // at nodes x_j = cos(j pi / N), j = 0..N

    double eval(double y) const {
        const int n = static_cast<int>(values.size()) - 1;
        const double u = 2.0 * (y - a) / (b - a) - 1.0;
        double num = 0.0, den = 0.0;
        for (int j = 0; j <= n; ++j) {
            const double xj = std::cos(j * M_PI / n);
            double wj = (j % 2 == 0) ? 1.0 : -1.0;
            if (j == 0 || j == n) wj *= 0.5;
            const double diff = u - xj;
            if (std::abs(diff) < 1e-14) return values[j];
            const double q = wj / diff;
            num += q * values[j];
            den += q;
        }
        return num / den;
    }
};

}  // namespace detail

// Truncated, normalized stationary law of the fast factor:
//   m(y) proportional to exp(int 2 gamma / alpha^2) / alpha^2(y).
class InvariantDensity {
  public:
    double lo() const { return lo_; }
    double hi() const { return hi_; }

    double density(double y) const {
        y = std::clamp(y, lo_, hi_);
        return std::exp(log_unnormalized(y) - log_shift_) / norm_;
    }

    double mass() const {
        double s = 0.0;
        for (double w : weights_) s += w;
        return s;
    }

    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }  // include m(node)

    // integral of f against the normalized density
    template <class F>
    double integrate(const F& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * f(nodes_[i]);
        return s;
    }

    // int_lo^y f(z) m(z) dz
    template <class F>
    double partial_integral(double y, const F& f) const {
        y = std::clamp(y, lo_, hi_);
        double s = 0.0;
        std::size_t i = 0;
        const std::size_t per = nodes_per_panel_;
        for (std::size_t p = 0; p < panel_edges_.size() - 1; ++p) {
            if (panel_edges_[p + 1] <= y) {
                for (std::size_t k = 0; k < per; ++k, ++i) s += weights_[i] * f(nodes_[i]);
                continue;
            }
            // partial panel
            const double a = panel_edges_[p];
            if (y > a) {
                const double c = 0.5 * (a + y), h = 0.5 * (y - a);
                for (std::size_t k = 0; k < gl_x_.size(); ++k) {
                    const double z = c + h * gl_x_[k];
                    s += h * gl_w_[k] * density(z) * f(z);
                }
            }
            break;
        }
        return s;
    }

    static InvariantDensity build(const FastFactor& f, double rel_floor = 1e-12) {
        InvariantDensity d;
        d.factor_ = f;
        if (!(f.trunc_lo < f.trunc_hi))
            throw InvalidModelError("fast factor truncation hints must satisfy lo < hi");
        double lo = std::max(f.trunc_lo, f.domain_lo);
        double hi = std::min(f.trunc_hi, f.domain_hi);
        const double ref = 0.5 * (lo + hi);

        auto exponent_integrand = [&f](double y) {
            const double a = f.vol(y);
            if (!(a > 0.0)) throw InvalidModelError("fast factor volatility must be positive");
            return 2.0 * f.drift(y) / (a * a);
        };
        auto log_un = [&](double y) {
            const double phi = integrate_adaptive(exponent_integrand, ref, y, 1e-12, 1e-12);
            return phi - 2.0 * std::log(f.vol(y));
        };

        // locate the peak on a coarse scan, then push the edges out until the
        // density is below rel_floor of the peak (or the state domain ends)
        const int scan_n = 129;
        double peak = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < scan_n; ++i)
            peak = std::max(peak, log_un(lo + (hi - lo) * i / (scan_n - 1.0)));
        const double floor_log = peak + std::log(rel_floor);

        auto expand = [&](double& edge, double direction) {
            int count = 0;
            while (log_un(edge) > floor_log) {
                const double width = hi - lo;
                double next = edge + direction * 0.75 * width;
                next = std::clamp(next, f.domain_lo, f.domain_hi);
                if (next == edge) return;  // pinned at the state boundary
                edge = next;
                const double l = log_un(edge);
                if (l > peak) peak = l;
                if (++count > 60)
                    throw InvalidModelError(
                        "fast factor speed density does not decay; invariant law not integrable");
            }
        };
        expand(lo, -1.0);
        expand(hi, +1.0);
        // shrink back to the floor crossing
        auto shrink = [&](double& edge, double inner) {
            double a = edge, b = inner;
            if (log_un(a) > floor_log) return;
            for (int i = 0; i < 50; ++i) {
                const double m = 0.5 * (a + b);
                (log_un(m) <= floor_log ? a : b) = m;
            }
            edge = a;
        };
        shrink(lo, ref);
        shrink(hi, ref);

        d.lo_ = lo;
        d.hi_ = hi;
        d.log_shift_ = peak;

        // piecewise-Chebyshev table of the exponent, then composite GL nodes
        int panels = 24;
        gauss_legendre(32, d.gl_x_, d.gl_w_);
        d.nodes_per_panel_ = d.gl_x_.size();
        double prev_mass = -1.0;
        for (;;) {
            d.build_tables(panels, exponent_integrand);
            const double mass = d.raw_mass();
            if (prev_mass > 0.0 && std::abs(mass - prev_mass) <= 1e-11 * mass) break;
            if (panels >= 96) break;
            prev_mass = mass;
            panels *= 2;
        }
        d.norm_ = d.raw_mass();
        for (auto& w : d.weights_) w /= d.norm_;
        return d;
    }

  private:
    double log_unnormalized(double y) const {
        for (const auto& p : cheb_) {
            if (y <= p.b || &p == &cheb_.back()) {
                return p.eval(std::clamp(y, p.a, p.b)) - 2.0 * std::log(factor_.vol(y));
            }
        }
        throw Error("invariant density table is empty");
    }

    void build_tables(int panels, const std::function<double(double)>& exponent_integrand) {
        cheb_.clear();
        panel_edges_.clear();
        nodes_.clear();
        weights_.clear();
        const int deg = 20;
        double phi_accum = 0.0;
        for (int p = 0; p < panels; ++p) {
            detail::ChebPanel cp;
            cp.a = lo_ + (hi_ - lo_) * p / panels;
            cp.b = lo_ + (hi_ - lo_) * (p + 1) / panels;
            panel_edges_.push_back(cp.a);
            // Chebyshev nodes descending in u correspond to descending y;
            // integrate between consecutive nodes, accumulating from the left.
            std::vector<double> ys(deg + 1);
            for (int j = 0; j <= deg; ++j)
                ys[j] = cp.a + 0.5 * (cp.b - cp.a) * (1.0 + std::cos((deg - j) * M_PI / deg));
            std::vector<double> phis(deg + 1);
            double run = phi_accum;
            double prev = cp.a;
            for (int j = 0; j <= deg; ++j) {
                run += integrate_adaptive(exponent_integrand, prev, ys[j], 1e-12, 1e-12);
                phis[j] = run;
                prev = ys[j];
            }
            phi_accum += integrate_adaptive(exponent_integrand, cp.a, cp.b, 1e-12, 1e-12);
            cp.values.resize(deg + 1);
            for (int j = 0; j <= deg; ++j) cp.values[j] = phis[deg - j];  // node j at cos(j pi/N)
            cheb_.push_back(std::move(cp));
        }
        panel_edges_.push_back(hi_);
        // composite GL nodes with unnormalized density weights
        for (std::size_t p = 0; p + 1 < panel_edges_.size(); ++p) {
            const double a = panel_edges_[p], b = panel_edges_[p + 1];
            const double c = 0.5 * (a + b), h = 0.5 * (b - a);
            for (std::size_t k = 0; k < gl_x_.size(); ++k) {
                const double y = c + h * gl_x_[k];
                nodes_.push_back(y);
                weights_.push_back(h * gl_w_[k] *
                                   std::exp(log_unnormalized(y) - log_shift_));
            }
        }
    }

    double raw_mass() const {
        double s = 0.0;
        for (double w : weights_) s += w;
        return s;
    }

    FastFactor factor_;
    double lo_ = 0.0, hi_ = 0.0;
    double log_shift_ = 0.0;
    double norm_ = 1.0;
    std::vector<detail::ChebPanel> cheb_;
    std::vector<double> panel_edges_;
    std::vector<double> nodes_, weights_;
    std::vector<double> gl_x_, gl_w_;
    std::size_t nodes_per_panel_ = 0;
};

struct MarketModel {
    int n_assets = 1;
    int d_factors = 1;
    std::function<Eigen::VectorXd(double, double)> lambda;       // (y1, y2) -> R^d
    std::function<Eigen::VectorXd(double, double)> dlambda_dy1;  // optional analytic
    std::function<Eigen::MatrixXd(double, double)> sigma;        // (y1, y2) -> n x d
    Eigen::VectorXd rho_s;  // d
    Eigen::VectorXd rho_f;  // d
    double rho_sf = 0.0;
    SlowFactor slow;
    FastFactor fast;
    WidderMeasure widder;
    InitialUtility v0;
    double y1_ref = 1.0;
    double y2_ref = 1.0;
    std::shared_ptr<const InvariantDensity> mu;

    const InvariantDensity& invariant() const {
        if (!mu) throw InvalidModelError("invariant density has not been built");
        return *mu;
    }

    Eigen::VectorXd dlambda(double y1, double y2) const {
        if (dlambda_dy1) return dlambda_dy1(y1, y2);
        const double h = 1e-4 * (1.0 + std::abs(y1));
        return ((lambda(y1 + h, y2) - lambda(y1 - h, y2)) / (2.0 * h)).eval();
    }

    // correlation matrix of (W_1..W_d, B_slow, B_fast)
    Eigen::MatrixXd correlation_matrix() const {
        const int d = d_factors;
        Eigen::MatrixXd r = Eigen::MatrixXd::Identity(d + 2, d + 2);
        r.block(0, d, d, 1) = rho_s;
        r.block(d, 0, 1, d) = rho_s.transpose();
        r.block(0, d + 1, d, 1) = rho_f;
        r.block(d + 1, 0, 1, d) = rho_f.transpose();
        r(d, d + 1) = rho_sf;
        r(d + 1, d) = rho_sf;
        return r;
    }
};

inline void build_invariant(MarketModel& model) {
    model.mu = std::make_shared<InvariantDensity>(InvariantDensity::build(model.fast));
}

// Load-time structural checks: correlation PSD, volatility rank, density mass.
inline void validate_model(const MarketModel& model,
                           const std::vector<double>& y1_samples,
                           const std::vector<double>& y2_samples) {
    const Eigen::MatrixXd r = model.correlation_matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw InvalidModelError("assembled correlation matrix of (W, B1, B2) is not PSD");
    for (double y1 : y1_samples) {
        for (double y2 : y2_samples) {
            const Eigen::MatrixXd s = model.sigma(y1, y2);
            if (s.rows() != model.n_assets || s.cols() != model.d_factors)
                throw InvalidModelError("sigma handle returned the wrong shape");
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
            const auto& sv = svd.singularValues();
            if (sv(sv.size() - 1) <= 1e-10 * sv(0))
                throw InvalidModelError("sigma is rank deficient at a sampled state");
            if (!(model.slow.kappa(y1) > 0.0))
                throw InvalidModelError("slow factor volatility must be positive");
        }
    }
    const double mass = model.invariant().mass();
    if (std::abs(mass - 1.0) > 1e-8)
        throw InvalidModelError("invariant density does not normalize to unit mass");
}

inline double lambda_bar_sq(const MarketModel& model, double y1) {
    return model.invariant().integrate(
        [&](double y2) { return model.lambda(y1, y2).squaredNorm(); });
}

inline double lambda_bar(const MarketModel& model, double y1) {
    const double v = lambda_bar_sq(model, y1);
    return v > 0.0 ? std::sqrt(v) : 0.0;
}

// d lambda_bar / d y1 via differentiation under the integral.
inline double lambda_bar_prime(const MarketModel& model, double y1) {
    const double lb = lambda_bar(model, y1);
    const double num = model.invariant().integrate(
        [&](double y2) { return model.lambda(y1, y2).dot(model.dlambda(y1, y2)); });
    if (lb == 0.0) {
        const double dmag = model.invariant().integrate(
            [&](double y2) { return model.dlambda(y1, y2).squaredNorm(); });
        if (dmag < 1e-20) return 0.0;
        throw InvalidModelError(
            "division by zero: lambda_bar vanishes while lambda still varies in y1");
    }
    return num / lb;
}

namespace detail {

inline double phi_prime_cached(const MarketModel& model, double y1, double lb2, double y2) {
    const InvariantDensity& mu = model.invariant();
    auto source = [&](double z) { return model.lambda(y1, z).squaredNorm() - lb2; };
    y2 = std::clamp(y2, mu.lo(), mu.hi());
    const double a = model.fast.vol(y2);
    const double m = mu.density(y2);
    return -2.0 / (a * a * m) * mu.partial_integral(y2, source);
}

}  // namespace detail

// phi_y2 from the Sturm-Liouville reduction of the corrector equation
//   (alpha^2/2) phi'' + gamma phi' = -(|lambda|^2 - lambda_bar^2):
//   phi'(y2) = -2/(alpha^2 m) int_lo^{y2} (|lambda|^2 - lambda_bar^2) m dz.
inline double phi_prime(const MarketModel& model, double y1, double y2) {
    const InvariantDensity& mu = model.invariant();
    const double lb2 = lambda_bar_sq(model, y1);
    const double centering =
        mu.integrate([&](double z) { return model.lambda(y1, z).squaredNorm() - lb2; });
    if (std::abs(centering) > 1e-8 * (1.0 + lb2))
        throw InvalidModelError("Poisson source is not centered; lambda_bar inconsistent with mu");
    return detail::phi_prime_cached(model, y1, lb2, y2);
}

// Anchored corrector with zero mean under mu, matching the stationary
// expectation representation.  The mean uses the interchange
//   E[phi_raw] = int phi'(z) (1 - CDF(z)) dz.
class PhiSolver {
  public:
    PhiSolver(const MarketModel& model, double y1)
        : model_(&model), y1_(y1), lb2_(lambda_bar_sq(model, y1)) {
        const InvariantDensity& mu = model.invariant();
        mean_ = integrate_adaptive(
            [&](double z) {
                const double tail = 1.0 - mu.partial_integral(z, [](double) { return 1.0; });
                return prime(z) * tail;
            },
            mu.lo(), mu.hi(), 1e-10, 1e-10);
    }

    double prime(double y2) const { return detail::phi_prime_cached(*model_, y1_, lb2_, y2); }

    double value(double y2) const {
        const InvariantDensity& mu = model_->invariant();
        y2 = std::clamp(y2, mu.lo(), mu.hi());
        const double raw = integrate_adaptive([&](double z) { return prime(z); }, mu.lo(), y2,
                                              1e-10, 1e-10);
        return raw - mean_;
    }

    double lambda_bar_squared() const { return lb2_; }

  private:
    const MarketModel* model_;
    double y1_;
    double lb2_;
    double mean_ = 0.0;
};

struct AveragedCoefficients {
    double lambda_bar = 0.0;
    double lambda_bar_prime = 0.0;
    double c10 = 0.0;
    double c01 = 0.0;
};

// True when |lambda(y1,.)|^2 does not vary across the quadrature nodes; the
// corrector and its coupling constant are then structurally zero.
inline bool lambda_is_y2_independent(const MarketModel& model, double y1) {
    const auto& nodes = model.invariant().nodes();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double y2 : nodes) {
        const double v = model.lambda(y1, y2).squaredNorm();
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi - lo <= 1e-14 * (1.0 + std::abs(hi));
}

inline AveragedCoefficients averaged_coefficients(const MarketModel& model, double y1) {
    AveragedCoefficients out;
    out.lambda_bar = lambda_bar(model, y1);
    out.lambda_bar_prime = lambda_bar_prime(model, y1);
    const InvariantDensity& mu = model.invariant();
    if (!model.rho_s.isZero(0.0)) {
        Eigen::VectorXd mean_lambda = Eigen::VectorXd::Zero(model.d_factors);
        const auto& nodes = mu.nodes();
        const auto& w = mu.weights();
        for (std::size_t i = 0; i < nodes.size(); ++i)
            mean_lambda += w[i] * model.lambda(y1, nodes[i]);
        out.c10 = model.rho_s.dot(mean_lambda) * model.slow.kappa(y1);
    }
    if (!model.rho_f.isZero(0.0) && !lambda_is_y2_independent(model, y1)) {
        const double lb2 = out.lambda_bar * out.lambda_bar;
        out.c01 = mu.integrate([&](double y2) {
            return model.rho_f.dot(model.lambda(y1, y2)) *
                   detail::phi_prime_cached(model, y1, lb2, y2) * model.fast.vol(y2);
        });
    }
    return out;
}

}  // namespace fpp
