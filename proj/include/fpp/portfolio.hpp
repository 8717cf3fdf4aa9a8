#pragma once

// Approximately optimal feedback portfolios (currency amounts per asset):
//
//   pi = -(sigma^T)^+ lambda [ V0_x/V0_xx
//          + sqrt(delta) (V0_xx V10_x - V0_x V10_xx)/V0_xx^2
//          + sqrt(eps)   (V0_xx V01_x - V0_x V01_xx)/V0_xx^2 ]
//        - sqrt(delta) kappa (sigma^T)^+ rho_s V0_{x y1}/V0_xx
//        + sqrt(eps) (sigma^T)^+ rho_f alpha (phi_y2/V0_xx) ((V0_x)^2/V0_xx)_x
//
// The exposure sigma^T pi does not depend on sigma at all (full row rank), so
// right-rotating the volatility loadings leaves it invariant.

#include <Eigen/Dense>
#include <cmath>

#include "fpp/expansion.hpp"

namespace fpp {

// Moore-Penrose pseudo-inverse of the n x d volatility matrix (returns d x n).
inline Eigen::MatrixXd sigma_pinv(const Eigen::MatrixXd& sigma, double rel_cutoff = 1e-10) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sigma, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv(sv.size() - 1) > rel_cutoff * sv(0)) || sv(0) == 0.0)
        throw InvalidModelError("volatility matrix is rank deficient");
    Eigen::VectorXd inv = sv;
    for (int i = 0; i < inv.size(); ++i) inv(i) = 1.0 / sv(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

struct PortfolioVector {
    Eigen::VectorXd weights;
    Eigen::VectorXd myopic;
    Eigen::VectorXd slow_hedge;
    Eigen::VectorXd fast_hedge;
};

namespace detail {

struct PortfolioTerms {
    double myopic_scalar = 0.0;   // multiplies -(sigma^T)^+ lambda
    double slow_scalar = 0.0;     // multiplies -(sigma^T)^+ rho_s
    double fast_scalar = 0.0;     // multiplies +(sigma^T)^+ rho_f
};

inline PortfolioVector assemble(const MarketModel& model, double y1, double y2,
                                const PortfolioTerms& tm) {
    const Eigen::MatrixXd pinv_t = sigma_pinv(model.sigma(y1, y2)).transpose();  // n x d
    PortfolioVector out;
    out.myopic = -pinv_t * model.lambda(y1, y2) * tm.myopic_scalar;
    out.slow_hedge = -pinv_t * model.rho_s * tm.slow_scalar;
    out.fast_hedge = pinv_t * model.rho_f * tm.fast_scalar;
    out.weights = out.myopic + out.slow_hedge + out.fast_hedge;
    return out;
}

}  // namespace detail

inline PortfolioVector pi_approx(const ValueSurface& s, double t, double x, double y1, double y2,
                                 double delta, double epsilon) {
    if (!(x > s.model().v0.domain_lower))
        throw RangeError("wealth below the lower edge of the utility domain");
    const DerivativeStack u = s.v0_eval(t, x, y1);
    if (!(u.d2 < 0.0)) throw ConcavityError("V0_xx is not negative");
    const RatioStack r = RatioStack::from(u);
    detail::PortfolioTerms tm;
    tm.myopic_scalar = r.B;
    if (delta > 0.0) {
        const CorrectionStack v10 = s.v10_stack(t, x, y1);
        tm.myopic_scalar += std::sqrt(delta) * (u.d2 * v10.d1 - u.d1 * v10.d2) / (u.d2 * u.d2);
        const auto [vy, vxy] = s.v0_cross_derivatives(t, x, y1);
        (void)vy;
        tm.slow_scalar = std::sqrt(delta) * s.model().slow.kappa(y1) * vxy / u.d2;
    }
    if (epsilon > 0.0) {
        const CorrectionStack v01 = s.v01_stack(t, x, y1);
        tm.myopic_scalar += std::sqrt(epsilon) * (u.d2 * v01.d1 - u.d1 * v01.d2) / (u.d2 * u.d2);
        const double phi_p = s.phi_solver(y1).prime(y2);
        tm.fast_scalar =
            std::sqrt(epsilon) * s.model().fast.vol(y2) * (phi_p / u.d2) * r.A_x;
    }
    return detail::assemble(s.model(), y1, y2, tm);
}

// Slow-factor-only variant: the state is the slow level y.
inline PortfolioVector pi_approx_slow(const ValueSurface& s, double t, double x, double y,
                                      double delta) {
    return pi_approx(s, t, x, y, s.model().y2_ref, delta, 0.0);
}

// Fast-factor-only variant: the state is the fast level y.
inline PortfolioVector pi_approx_fast(const ValueSurface& s, double t, double x, double y,
                                      double epsilon) {
    return pi_approx(s, t, x, s.model().y1_ref, y, 0.0, epsilon);
}

}  // namespace fpp
