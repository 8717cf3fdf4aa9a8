#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "fpp/errors.hpp"

namespace fpp {

namespace detail {

// 15-point Kronrod extension of 7-point Gauss, positive half of the rule.
// Column layout: abscissa, Gauss weight (0 where the node is Kronrod-only),
// Kronrod weight.
inline constexpr double kGK15[8][3] = {
    {0.000000000000000000, 0.417959183673469388, 0.209482141084727828},
    {0.405845151377397167, 0.381830050505118945, 0.190350578064785410},
    {0.741531185599394440, 0.279705391489276668, 0.140653259715525919},
    {0.949107912342758525, 0.129484966168869693, 0.063092092629978553},
    {0.207784955007898468, 0.0,                  0.204432940075298892},
    {0.586087235467691130, 0.0,                  0.169004726639267903},
    {0.864864423359769073, 0.0,                  0.104790010322250184},
    {0.991455371120812639, 0.0,                  0.022935322010529225},
};

template <class F>
inline void gk15(const F& f, double a, double b, double& value, double& err) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double f0 = f(c);
    double g7 = kGK15[0][1] * f0;
    double k15 = kGK15[0][2] * f0;
    for (int i = 1; i < 8; ++i) {
        const double dx = h * kGK15[i][0];
        const double fi = f(c + dx) + f(c - dx);
        g7 += kGK15[i][1] * fi;
        k15 += kGK15[i][2] * fi;
    }
    g7 *= h;
    k15 *= h;
    value = k15;
    err = std::abs(k15 - g7);
    // standard QUADPACK-style sharpening of the raw difference
    if (err > 0.0) err = std::min(err, 200.0 * err * std::sqrt(err));
}

}  // namespace detail

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    std::size_t evaluations = 0;
};

// Adaptive Gauss-Kronrod integration on [a,b].  Splits the interval with the
// largest error estimate until sum(err) <= max(abs_tol, rel_tol*|I|).
template <class F>
inline QuadratureResult integrate_adaptive_full(const F& f, double a, double b,
                                                double abs_tol = 1e-10,
                                                double rel_tol = 1e-10,
                                                std::size_t max_evals = 1000000) {
    QuadratureResult out;
    if (a == b) return out;
    struct Seg {
        double a, b, value, err;
    };
    std::vector<Seg> segs;
    Seg s0{a, b, 0.0, 0.0};
    detail::gk15(f, a, b, s0.value, s0.err);
    out.evaluations = 15;
    segs.push_back(s0);

    auto totals = [&segs](double& v, double& e) {
        v = 0.0;
        e = 0.0;
        for (const auto& s : segs) {
            v += s.value;
            e += s.err;
        }
    };

    double value, err;
    totals(value, err);
    while (err > std::max(abs_tol, rel_tol * std::abs(value))) {
        if (out.evaluations + 30 > max_evals) {
            throw NumericError("adaptive quadrature did not converge", err);
        }
        std::size_t worst = 0;
        for (std::size_t i = 1; i < segs.size(); ++i)
            if (segs[i].err > segs[worst].err) worst = i;
        Seg w = segs[worst];
        const double m = 0.5 * (w.a + w.b);
        if (m == w.a || m == w.b) {
            throw NumericError("interval too small in adaptive quadrature", err);
        }
        Seg left{w.a, m, 0.0, 0.0}, right{m, w.b, 0.0, 0.0};
        detail::gk15(f, left.a, left.b, left.value, left.err);
        detail::gk15(f, right.a, right.b, right.value, right.err);
        out.evaluations += 30;
        segs[worst] = left;
        segs.push_back(right);
        totals(value, err);
    }
    out.value = value;
    out.error = err;
    return out;
}

template <class F>
inline double integrate_adaptive(const F& f, double a, double b, double abs_tol = 1e-10,
                                 double rel_tol = 1e-10, std::size_t max_evals = 1000000) {
    return integrate_adaptive_full(f, a, b, abs_tol, rel_tol, max_evals).value;
}

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
}

// Fixed-order Gauss-Legendre on [a,b].
template <class F>
inline double integrate_gl(const F& f, double a, double b, const std::vector<double>& x,
                           const std::vector<double>& w) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * f(c + h * x[i]);
    return s * h;
}

}  // namespace fpp
