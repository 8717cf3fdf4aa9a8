#pragma once

// Closed-form power benchmark.  With risk aversion g (gamma_ra), market price
// of risk Lambda sqrt(y) and a square-root factor
//   dY = delta (m - Y) dt + sqrt(delta) beta sqrt(Y) dB,
// the value function
//   V(t,x,y) = g^g x^{1-g}/(1-g) exp(q (A1(t) y + A2(t)))
// solves the one-factor equation exactly when A1, A2 solve
//   A1' = -( (delta beta^2/2) A1^2 + (sqrt(delta) G beta L.rho - delta) A1
//            + (G/2q) |L|^2 ),            A1(0) = 0,
//   A2' = -delta m A1,                    A2(0) = 0,
// with G = (1-g)/g and q = 1/(1 + G |rho|^2).  Both signs follow from
// substituting the exponential-affine ansatz; the solution through the
// quadratic's roots a- < a+ is
//   A1(t) = a- (e^{-Dt} - 1)/(e^{-Dt} - r),  r = a-/a+,  D = sqrt(disc),
// which converges to a+ when a- <= 0 and blows up at t* = log(a+/a-)/D when
// both roots are positive.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fpp/errors.hpp"
#include "fpp/expansion.hpp"

namespace fpp {

struct PowerModelParams {
    double gamma_ra = 2.0;
    Eigen::VectorXd Lambda;
    double m0 = 1.0;
    double beta = 0.4;
    Eigen::VectorXd rho;
    double delta = 0.01;

    double big_gamma() const { return (1.0 - gamma_ra) / gamma_ra; }

    double q() const {
        const double den = 1.0 + big_gamma() * rho.squaredNorm();
        return 1.0 / den;
    }

    void validate() const {
        if (!(gamma_ra > 0.0) || gamma_ra == 1.0)
            throw ValidationError("risk aversion must be positive and different from 1");
        if (rho.norm() > 1.0 + 1e-12) throw ValidationError("|rho| must not exceed 1");
        if (std::abs(1.0 + big_gamma() * rho.squaredNorm()) < 1e-12)
            throw ValidationError(
                "excluded correlation case |rho|^2 = gamma/(gamma-1): distortion power undefined");
        if (!(m0 > 0.0) || !(beta > 0.0)) throw ValidationError("m0 and beta must be positive");
        if (!(delta > 0.0)) throw ValidationError("time-scale parameter must be positive");
    }
};

struct RiccatiSolution {
    double a_minus = 0.0;
    double a_plus = 0.0;
    double discriminant_root = 0.0;
    double c2 = 0.0, c1 = 0.0, c0 = 0.0;  // quadratic c2 a^2 + c1 a + c0
    double delta = 0.0, m0 = 0.0, beta = 0.0, q = 0.0;
    double blow_up_time = std::numeric_limits<double>::infinity();
    int regime_case = 0;

    void check_time(double t) const {
        if (!(t < blow_up_time))
            throw RegimeError("closed-form benchmark only exists up to t = " +
                              std::to_string(blow_up_time));
    }

    double A1(double t) const {
        check_time(t);
        const double r = a_minus / a_plus;
        const double em = std::exp(-discriminant_root * t);
        return a_minus * (em - 1.0) / (em - r);
    }

    double A1dot(double t) const {
        const double a = A1(t);
        return -(c2 * a * a + c1 * a + c0);
    }

    // int_0^t A1 = a- t + (2/(delta beta^2)) log((1 - r e^{Dt})/(1 - r))
    double integral_A1(double t) const {
        check_time(t);
        const double r = a_minus / a_plus;
        const double em = std::exp(-discriminant_root * t);
        const double num = em - r, den = 1.0 - r;
        const double logpart = discriminant_root * t + std::log(std::abs(num)) -
                               std::log(std::abs(den));
        return a_minus * t + 2.0 / (delta * beta * beta) * logpart;
    }

    double A2(double t) const { return -delta * m0 * integral_A1(t); }
    double A2dot(double t) const { return -delta * m0 * A1(t); }
};

inline RiccatiSolution riccati_solve(const PowerModelParams& p) {
    p.validate();
    RiccatiSolution s;
    const double G = p.big_gamma();
    const double q = p.q();
    const double lr = p.Lambda.dot(p.rho);
    s.delta = p.delta;
    s.m0 = p.m0;
    s.beta = p.beta;
    s.q = q;
    s.c2 = 0.5 * p.delta * p.beta * p.beta;
    s.c1 = std::sqrt(p.delta) * G * p.beta * lr - p.delta;
    s.c0 = G * p.Lambda.squaredNorm() / (2.0 * q);

    const bool case1 = p.gamma_ra < 1.0 && lr < 0.0 && G * q * lr * lr > p.Lambda.squaredNorm();
    const bool case2 = p.gamma_ra > 1.0 && lr > 0.0 && q < 0.0 &&
                       G * q * lr * lr > p.Lambda.squaredNorm();
    const bool case3 = p.gamma_ra > 1.0 && q > 0.0;
    if (case1)
        s.regime_case = 1;
    else if (case2)
        s.regime_case = 2;
    else if (case3)
        s.regime_case = 3;

    auto case_report = [&](const char* what) {
        return std::string(what) +
               "; admissible cases: (1) gamma<1, L.rho<0, G q (L.rho)^2 > |L|^2 [" +
               (case1 ? "ok" : "failed") + "], (2) gamma>1, L.rho>0, q<0, G q (L.rho)^2 > |L|^2 [" +
               (case2 ? "ok" : "failed") + "], (3) gamma>1, q>0 [" + (case3 ? "ok" : "failed") +
               "]";
    };

    const double disc = s.c1 * s.c1 - 4.0 * s.c2 * s.c0;
    if (!(disc > 0.0))
        throw RegimeError(case_report("quadratic for A1 has no distinct real roots"));
    s.discriminant_root = std::sqrt(disc);
    const double qq = -0.5 * (s.c1 + std::copysign(s.discriminant_root, s.c1));
    double r1 = qq / s.c2;
    double r2 = s.c0 / qq;
    s.a_minus = std::min(r1, r2);
    s.a_plus = std::max(r1, r2);
    if (!(s.a_plus > 0.0)) throw RegimeError(case_report("largest root a+ is not positive"));
    if (s.a_minus > 0.0)
        s.blow_up_time = std::log(s.a_plus / s.a_minus) / s.discriminant_root;
    return s;
}

inline double power_datum_value(double gamma_ra, double x) {
    return std::pow(gamma_ra, gamma_ra) * std::pow(x, 1.0 - gamma_ra) / (1.0 - gamma_ra);
}

// Analytic partial derivatives of the benchmark surface, for generator audits
// and exact feedback controls.  The factor argument is y; the unused factor
// direction has identically zero partials.
struct PowerSurface {
    double gamma_ra = 0.0;
    double q = 0.0;
    RiccatiSolution sol;

    double G(double t, double y) const { return std::exp(q * (sol.A1(t) * y + sol.A2(t))); }

    double value(double t, double x, double y) const {
        return power_datum_value(gamma_ra, x) * G(t, y);
    }
    double vt(double t, double x, double y) const {
        return value(t, x, y) * q * (sol.A1dot(t) * y + sol.A2dot(t));
    }
    double vx(double t, double x, double y) const {
        return (1.0 - gamma_ra) / x * value(t, x, y);
    }
    double vxx(double t, double x, double y) const {
        return (1.0 - gamma_ra) * (-gamma_ra) / (x * x) * value(t, x, y);
    }
    double vy(double t, double x, double y) const {
        return q * sol.A1(t) * value(t, x, y);
    }
    double vyy(double t, double x, double y) const {
        const double a = q * sol.A1(t);
        return a * a * value(t, x, y);
    }
    double vxy(double t, double x, double y) const {
        return q * sol.A1(t) * vx(t, x, y);
    }
};

inline PowerSurface make_power_surface(const PowerModelParams& p) {
    PowerSurface s;
    s.gamma_ra = p.gamma_ra;
    s.q = p.q();
    s.sol = riccati_solve(p);
    return s;
}

inline double exact_value(const PowerModelParams& p, double t, double x, double y) {
    if (!(x > 0.0)) throw RangeError("benchmark wealth must be positive");
    return make_power_surface(p).value(t, x, y);
}

// Residual of the one-factor nonlinear equation the benchmark solves; the
// correlation vector rides on the factor Brownian motion.
inline double hjb_residual_slow(const PowerSurface& s, const PowerModelParams& p, double t,
                                double x, double y) {
    const double kappa = p.beta * std::sqrt(y);
    const Eigen::VectorXd lam = (p.Lambda * std::sqrt(y)).eval();
    const double vt = s.vt(t, x, y), vx = s.vx(t, x, y), vxx = s.vxx(t, x, y);
    const double vy = s.vy(t, x, y), vyy = s.vyy(t, x, y), vxy = s.vxy(t, x, y);
    const Eigen::VectorXd grad = (lam * vx + std::sqrt(p.delta) * kappa * vxy * p.rho).eval();
    return vt + 0.5 * p.delta * kappa * kappa * vyy + p.delta * (p.m0 - y) * vy -
           0.5 * grad.squaredNorm() / vxx;
}

// Stationary branch of the fast-scale benchmark: A1 frozen at the bounded
// root of the quadratic (delta = 1/epsilon), A2 linear in t.  An exact
// solution whose datum carries an O(epsilon) tilt exp(q B* y).
struct FastBranchSolution {
    double gamma_ra = 0.0;
    double q = 0.0;
    double b_star = 0.0;
    double b2_rate = 0.0;  // A2'(t) = -delta m B*
    double epsilon = 0.0;

    double G(double t, double y) const { return std::exp(q * (b_star * y + b2_rate * t)); }
    double value(double t, double x, double y) const {
        return power_datum_value(gamma_ra, x) * G(t, y);
    }
    double vt(double t, double x, double y) const { return q * b2_rate * value(t, x, y); }
    double vx(double t, double x, double y) const {
        return (1.0 - gamma_ra) / x * value(t, x, y);
    }
    double vxx(double t, double x, double y) const {
        return (1.0 - gamma_ra) * (-gamma_ra) / (x * x) * value(t, x, y);
    }
    double vy(double t, double x, double y) const { return q * b_star * value(t, x, y); }
    double vyy(double t, double x, double y) const {
        return q * b_star * q * b_star * value(t, x, y);
    }
    double vxy(double t, double x, double y) const { return q * b_star * vx(t, x, y); }
};

inline FastBranchSolution fast_branch_solution(const PowerModelParams& p_fast, double epsilon) {
    PowerModelParams p = p_fast;
    p.delta = 1.0 / epsilon;
    const RiccatiSolution s = riccati_solve(p);
    FastBranchSolution out;
    out.gamma_ra = p.gamma_ra;
    out.q = p.q();
    out.epsilon = epsilon;
    // bounded root: the smaller of the two in magnitude
    out.b_star = (std::abs(s.a_minus) <= std::abs(s.a_plus)) ? s.a_minus : s.a_plus;
    out.b2_rate = -p.delta * p.m0 * out.b_star;
    return out;
}

inline double hjb_residual_fast(const FastBranchSolution& s, const PowerModelParams& p, double t,
                                double x, double y) {
    const double eps = s.epsilon;
    const double alpha = p.beta * std::sqrt(y);
    const Eigen::VectorXd lam = (p.Lambda * std::sqrt(y)).eval();
    const double vt = s.vt(t, x, y), vx = s.vx(t, x, y), vxx = s.vxx(t, x, y);
    const double vy = s.vy(t, x, y), vyy = s.vyy(t, x, y), vxy = s.vxy(t, x, y);
    const Eigen::VectorXd grad = (lam * vx + alpha / std::sqrt(eps) * vxy * p.rho).eval();
    return vt + 0.5 * alpha * alpha / eps * vyy + (p.m0 - y) / eps * vy -
           0.5 * grad.squaredNorm() / vxx;
}

struct StudyRow {
    double param = 0.0;      // delta or epsilon
    double err_one = 0.0;    // |V - V0|
    double err_two = 0.0;    // |V - V0 - sqrt(param) V1|
    bool dropped = false;    // below the rounding floor, excluded from the fit
};

struct StudyResult {
    std::vector<StudyRow> rows;
    double slope_one = 0.0;
    double slope_two = 0.0;
    int n_dropped = 0;
};

namespace detail {

inline double fit_slope(const std::vector<double>& lx, const std::vector<double>& ly) {
    const std::size_t n = lx.size();
    if (n < 2) throw NumericError("slope fit needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline void fit_study(StudyResult& st) {
    std::vector<double> lx1, ly1, lx2, ly2;
    const double floor = 1e-12;  // ten times the rounding floor
    for (auto& r : st.rows) {
        if (r.err_one > floor) {
            lx1.push_back(std::log(r.param));
            ly1.push_back(std::log(r.err_one));
        }
        if (r.err_two > floor) {
            lx2.push_back(std::log(r.param));
            ly2.push_back(std::log(r.err_two));
        } else {
            r.dropped = true;
            ++st.n_dropped;
        }
    }
    st.slope_one = fit_slope(lx1, ly1);
    st.slope_two = fit_slope(lx2, ly2);
}

}  // namespace detail

// Error decay of the slow-scale approximation against the exact benchmark.
inline StudyResult error_study(const PowerModelParams& p, const ValueSurface& surface,
                               const std::vector<double>& deltas, double t, double x, double y) {
    const double v0 = surface.v0_eval(t, x, y).value;
    const double v1 = surface.v10_eval(t, x, y);
    StudyResult st;
    for (double d : deltas) {
        PowerModelParams pd = p;
        pd.delta = d;
        const double exact = exact_value(pd, t, x, y);
        StudyRow row;
        row.param = d;
        row.err_one = std::abs(exact - v0);
        row.err_two = std::abs(exact - v0 - std::sqrt(d) * v1);
        st.rows.push_back(row);
    }
    detail::fit_study(st);
    return st;
}

// Same for the fast scale, against the stationary branch with delta = 1/eps.
inline StudyResult fast_reparam_study(const PowerModelParams& p_fast,
                                      const ValueSurface& surface,
                                      const std::vector<double>& epsilons, double t, double x,
                                      double y) {
    const double y1 = surface.model().y1_ref;
    const double v0 = surface.v0_eval(t, x, y1).value;
    const double v1 = surface.v01_eval(t, x, y1);
    StudyResult st;
    for (double e : epsilons) {
        const FastBranchSolution fb = fast_branch_solution(p_fast, e);
        const double exact = fb.value(t, x, y);
        StudyRow row;
        row.param = e;
        row.err_one = std::abs(exact - v0);
        row.err_two = std::abs(exact - v0 - std::sqrt(e) * v1);
        st.rows.push_back(row);
    }
    detail::fit_study(st);
    return st;
}

struct MultiscaleRow {
    double delta = 0.0, epsilon = 0.0;
    double err_slow = 0.0, err_fast = 0.0;
    double combined = 0.0;
    double ratio = 0.0;  // combined / (delta + epsilon)
    bool has_oracle = true;
};

// Separable benchmark: the slow and fast corrections are compared against
// their individually exact references and the errors added.
inline std::vector<MultiscaleRow> multiscale_study(
    const PowerModelParams& p_slow, const ValueSurface& slow_surface,
    const PowerModelParams& p_fast, const ValueSurface& fast_surface,
    const std::vector<double>& deltas, const std::vector<double>& epsilons, double t, double x,
    double y) {
    const double v0s = slow_surface.v0_eval(t, x, y).value;
    const double v10 = slow_surface.v10_eval(t, x, y);
    const double y1f = fast_surface.model().y1_ref;
    const double v0f = fast_surface.v0_eval(t, x, y1f).value;
    const double v01 = fast_surface.v01_eval(t, x, y1f);

    std::vector<MultiscaleRow> rows;
    for (double d : deltas) {
        PowerModelParams pd = p_slow;
        pd.delta = d;
        const double es = std::abs(exact_value(pd, t, x, y) - v0s - std::sqrt(d) * v10);
        for (double e : epsilons) {
            const FastBranchSolution fb = fast_branch_solution(p_fast, e);
            const double ef = std::abs(fb.value(t, x, y) - v0f - std::sqrt(e) * v01);
            MultiscaleRow r;
            r.delta = d;
            r.epsilon = e;
            r.err_slow = es;
            r.err_fast = ef;
            r.combined = es + ef;
            r.ratio = r.combined / (d + e);
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace fpp
