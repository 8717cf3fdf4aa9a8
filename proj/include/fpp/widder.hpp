#pragma once

// Time-monotone performance values from a Widder-type mixture.
//
// The representing function is
//     h(t,x) = integral (e^{zx - z^2 t/2} - 1)/z nu0(dz) + C0
// over a nonnegative measure nu0 (finite atoms plus an optional compactly
// supported density), and the value function built on it is
//     u(t,x) = V(0,x) - 1/2 * integral_0^t e^{-h^{-1}(s,x)+s/2}
//                           h_x(s, h^{-1}(s,x)) ds.
// h solves h_t + h_xx/2 = 0, is strictly increasing in x for a nonzero
// measure, and u is increasing, strictly concave and nonincreasing in time.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "fpp/errors.hpp"
#include "fpp/quadrature.hpp"
#include "fpp/roots.hpp"

namespace fpp {

struct WidderAtom {
    double location = 0.0;
    double weight = 0.0;
};

struct WidderDensity {
    std::function<double(double)> weight;  // nonnegative on [lo, hi]
    double lo = 0.0;
    double hi = 0.0;
};

struct WidderMeasure {
    std::vector<WidderAtom> atoms;
    std::optional<WidderDensity> density;
    std::optional<double> c0;

    bool zero_measure() const { return atoms.empty() && !density.has_value(); }

    double c0_value() const { return c0.value_or(0.0); }

    void validate() const {
        if (zero_measure() && !c0.has_value())
            throw InvalidModelError("Widder measure is empty and no constant term was given");
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (!(atoms[i].weight > 0.0))
                throw InvalidModelError("Widder atom weights must be strictly positive");
            for (std::size_t j = i + 1; j < atoms.size(); ++j)
                if (atoms[i].location == atoms[j].location)
                    throw InvalidModelError("Widder atom locations must be pairwise distinct");
        }
        if (density && !(density->lo < density->hi))
            throw InvalidModelError("Widder density support must be a nondegenerate interval");
    }
};

// Holds a value and x-derivatives.  d5 is carried because portfolio
// corrections differentiate the first-order terms twice.
struct DerivativeStack {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
    double d4 = 0.0;
    double d5 = 0.0;

    double order(int k) const {
        switch (k) {
            case 0: return value;
            case 1: return d1;
            case 2: return d2;
            case 3: return d3;
            case 4: return d4;
            case 5: return d5;
        }
        throw Error("derivative order out of range");
    }
};

namespace detail {

// (e^{zx - z^2 t/2} - 1)/z with the removable singularity at z = 0.
inline double widder_kernel0(double z, double t, double x) {
    const double base = x - 0.5 * z * t;
    const double a = z * base;
    if (std::abs(z) < 1e-6) {
        // series branch: (e^a - 1)/z = base * (1 + a/2 + a^2/6 + a^3/24)
        return base * (1.0 + a * (0.5 + a * (1.0 / 6.0 + a / 24.0)));
    }
    return std::expm1(a) / z;
}

// z^{k-1} e^{zx - z^2 t/2}, the k-th x-derivative kernel for k >= 1.
inline double widder_kernelk(int k, double z, double t, double x) {
    double p = 1.0;
    for (int i = 1; i < k; ++i) p *= z;
    return p * std::exp(z * (x - 0.5 * z * t));
}

template <class Kernel>
inline double measure_integral(const WidderMeasure& m, const Kernel& kernel,
                               double quad_tol = 1e-12) {
    double s = 0.0;
    for (const auto& a : m.atoms) s += a.weight * kernel(a.location);
    if (m.density) {
        const auto& d = *m.density;
        s += integrate_adaptive([&](double z) { return d.weight(z) * kernel(z); }, d.lo, d.hi,
                                quad_tol, quad_tol);
    }
    return s;
}

}  // namespace detail

inline double h_eval(const WidderMeasure& m, double t, double x) {
    m.validate();
    return detail::measure_integral(
               m, [&](double z) { return detail::widder_kernel0(z, t, x); }) +
           m.c0_value();
}

// k-th x-derivative of h, k in 1..4.
inline double h_derivative(const WidderMeasure& m, double t, double x, int k) {
    if (k < 1 || k > 4) throw Error("h_derivative supports orders 1..4");
    return detail::measure_integral(
        m, [&](double z) { return detail::widder_kernelk(k, z, t, x); });
}

inline DerivativeStack h_derivatives(const WidderMeasure& m, double t, double x,
                                     int max_order = 4) {
    m.validate();
    DerivativeStack s;
    s.value = h_eval(m, t, x);
    if (max_order >= 1) s.d1 = h_derivative(m, t, x, 1);
    if (max_order >= 2) s.d2 = h_derivative(m, t, x, 2);
    if (max_order >= 3) s.d3 = h_derivative(m, t, x, 3);
    if (max_order >= 4) s.d4 = h_derivative(m, t, x, 4);
    return s;
}

// h_t = -1/2 h_xx, exact for the mixture representation.
inline double h_time_derivative(const WidderMeasure& m, double t, double x) {
    return -0.5 * h_derivative(m, t, x, 2);
}

// Inverse of x -> h(t,x).  Geometric bracket expansion from x = 0, then Brent.
inline double h_inverse(const WidderMeasure& m, double t, double w, double xtol = 1e-12) {
    m.validate();
    if (m.zero_measure())
        throw InvalidModelError("h is constant for a zero measure and cannot be inverted");
    auto f = [&](double x) { return h_eval(m, t, x) - w; };
    double lo = -1.0, hi = 1.0;
    double flo = f(lo), fhi = f(hi);
    int doublings = 0;
    while (flo > 0.0 && doublings < 200) {
        lo *= 2.0;
        flo = f(lo);
        ++doublings;
        if (std::isinf(lo)) break;
    }
    while (fhi < 0.0 && doublings < 200) {
        hi *= 2.0;
        fhi = f(hi);
        ++doublings;
        if (std::isinf(hi)) break;
    }
    if (!(flo <= 0.0 && fhi >= 0.0))
        throw RangeError("h_inverse: target value outside the range of h(t, .)");
    const double x = brent(f, lo, hi, flo, fhi, xtol);
    const double resid = std::abs(h_eval(m, t, x) - w);
    if (!(resid <= 1e-9 * (1.0 + std::abs(w))))
        throw NumericError("h_inverse did not meet its residual tolerance", resid);
    return x;
}

// Initial datum V(0,.) with optional analytic derivatives; the fallback is
// central finite differences with step 1e-4*(1+|x|), which gets noisy at
// orders 3+ (flagged so callers can warn).
struct InitialUtility {
    std::function<double(double)> value;
    std::function<double(double, int)> derivative;  // (x, order) -> d^k V(0,x); may be empty
    double domain_lower = 0.0;

    bool derivatives_are_fd() const { return !static_cast<bool>(derivative); }

    double deriv(double x, int k) const {
        if (k == 0) return value(x);
        if (derivative) return derivative(x, k);
        const double h = 1e-4 * (1.0 + std::abs(x));
        auto v = [&](int i) { return value(x + i * h); };
        switch (k) {
            case 1: return (-v(2) + 8 * v(1) - 8 * v(-1) + v(-2)) / (12 * h);
            case 2: return (-v(2) + 16 * v(1) - 30 * v(0) + 16 * v(-1) - v(-2)) / (12 * h * h);
            case 3: return (v(2) - 2 * v(1) + 2 * v(-1) - v(-2)) / (2 * h * h * h);
            case 4: return (v(2) - 4 * v(1) + 6 * v(0) - 4 * v(-1) + v(-2)) / (h * h * h * h);
            case 5:
                return (v(3) - 4 * v(2) + 5 * v(1) - 5 * v(-1) + 4 * v(-2) - v(-3)) /
                       (2 * h * h * h * h * h);
        }
        throw Error("datum derivative order out of range");
    }

    // Sampled shape check: strictly increasing, strictly concave.
    void validate(double x_lo, double x_hi, int n = 64) const {
        if (!value) throw InvalidModelError("initial utility has no value handle");
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) v[i] = value(x_lo + (x_hi - x_lo) * i / (n - 1.0));
        for (int i = 0; i + 1 < n; ++i)
            if (!(v[i + 1] > v[i]))
                throw InvalidModelError("initial utility is not strictly increasing on the sample grid");
        for (int i = 0; i + 2 < n; ++i)
            if (!(v[i + 2] - v[i + 1] < v[i + 1] - v[i]))
                throw InvalidModelError("initial utility is not strictly concave on the sample grid");
    }
};

namespace detail {

// Derivative stack of G(t,x) = e^{-h^{-1}(t,x) + t/2} through the inverse
// function theorem.  G itself is the marginal value density appearing in the
// time integrand; its x-derivatives deliver the u-stack without
// differentiating any quadrature.
struct GStack {
    double x_inv = 0.0;   // h^{-1}(t,x)
    double g[5] = {0, 0, 0, 0, 0};  // G, G_x, G_xx, G_xxx, G_xxxx
    double h1 = 0.0;      // h_x at (t, h^{-1})
};

inline GStack g_stack(const WidderMeasure& m, double t, double x) {
    GStack out;
    const double X = h_inverse(m, t, x);
    out.x_inv = X;
    const double H1 = h_derivative(m, t, X, 1);
    const double H2 = h_derivative(m, t, X, 2);
    const double H3 = h_derivative(m, t, X, 3);
    const double H4 = h_derivative(m, t, X, 4);
    out.h1 = H1;
    const double E = std::exp(-X + 0.5 * t);
    // X-derivatives in x via 1/h_x chains
    const double X1 = 1.0 / H1;
    const double X2 = -H2 / (H1 * H1 * H1);
    const double X3 = -H3 / std::pow(H1, 4) + 3.0 * H2 * H2 / std::pow(H1, 5);
    const double X4 = -H4 / std::pow(H1, 5) + 10.0 * H2 * H3 / std::pow(H1, 6) -
                      15.0 * H2 * H2 * H2 / std::pow(H1, 7);
    // signed Bell polynomials for d^k/dx^k e^{-X}
    out.g[0] = E;
    out.g[1] = E * (-X1);
    out.g[2] = E * (X1 * X1 - X2);
    out.g[3] = E * (-X1 * X1 * X1 + 3.0 * X1 * X2 - X3);
    out.g[4] = E * (std::pow(X1, 4) - 6.0 * X1 * X1 * X2 + 3.0 * X2 * X2 + 4.0 * X1 * X3 - X4);
    return out;
}

}  // namespace detail

// u(t,x): time quadrature of the representation plus the datum.
inline double u_eval(const WidderMeasure& m, const InitialUtility& v0, double t, double x,
                     double quad_tol = 1e-10) {
    if (t == 0.0) return v0.value(x);
    const double integral = integrate_adaptive(
        [&](double s) {
            const double X = h_inverse(m, s, x);
            return std::exp(-X + 0.5 * s) * h_derivative(m, s, X, 1);
        },
        0.0, t, quad_tol, quad_tol, 1000000);
    return v0.value(x) - 0.5 * integral;
}

// Analytic time derivative of u (fundamental theorem on the representation).
inline double u_time_derivative(const WidderMeasure& m, double t, double x) {
    const double X = h_inverse(m, t, x);
    return -0.5 * std::exp(-X + 0.5 * t) * h_derivative(m, t, X, 1);
}

// x-derivative stack of u.  The time integral of each differentiated
// integrand telescopes to boundary terms of G = e^{-h^{-1}+t/2}:
//   d^k u(t,x) = d^k V(0,x) + G^{(k-1)}(t,x) - G^{(k-1)}(0,x),  k >= 1.
inline DerivativeStack u_derivatives(const WidderMeasure& m, const InitialUtility& v0, double t,
                                     double x, int max_order = 4, double quad_tol = 1e-10) {
    if (max_order < 1 || max_order > 5) throw Error("u_derivatives supports orders 1..5");
    DerivativeStack s;
    s.value = u_eval(m, v0, t, x, quad_tol);
    const detail::GStack gt = detail::g_stack(m, t, x);
    const detail::GStack g0 = detail::g_stack(m, 0.0, x);
    double d[6] = {s.value, 0, 0, 0, 0, 0};
    for (int k = 1; k <= max_order; ++k)
        d[k] = v0.deriv(x, k) + gt.g[k - 1] - g0.g[k - 1];
    s.d1 = d[1];
    s.d2 = d[2];
    s.d3 = d[3];
    s.d4 = d[4];
    s.d5 = d[5];
    return s;
}

// Builds the datum compatible with a given measure:
//   V_x(0,x) = e^{-h^{-1}(0,x)},
// anchored at V(0, x_ref) = v_ref.  Derivatives come from the same analytic
// stack as u, so every shape invariant holds exactly.
inline InitialUtility make_compatible_datum(const WidderMeasure& m, double x_ref,
                                            double v_ref = 0.0) {
    InitialUtility out;
    out.value = [m, x_ref, v_ref](double x) {
        return v_ref + integrate_adaptive(
                           [&](double s) { return std::exp(-h_inverse(m, 0.0, s)); },
                           x_ref, x, 1e-12, 1e-12);
    };
    out.derivative = [m](double x, int k) {
        if (k < 1 || k > 5) throw Error("datum derivative order out of range");
        return detail::g_stack(m, 0.0, x).g[k - 1];
    };
    // the range of h(0, .) has a finite infimum only when all mass sits on
    // positive z; any mass at or below zero pushes the range to the whole line
    bool positive_support = true;
    double inf = m.c0_value();
    for (const auto& a : m.atoms) {
        if (a.location <= 0.0) positive_support = false;
        else inf -= a.weight / a.location;
    }
    if (m.density) {
        const auto& d = *m.density;
        if (d.lo <= 0.0) positive_support = false;
        else
            inf -= integrate_adaptive([&](double z) { return d.weight(z) / z; }, d.lo, d.hi,
                                      1e-12, 1e-12);
    }
    out.domain_lower =
        positive_support ? inf : -std::numeric_limits<double>::infinity();
    return out;
}

}  // namespace fpp
