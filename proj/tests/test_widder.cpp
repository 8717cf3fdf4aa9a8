#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fpp/widder.hpp"

using namespace fpp;

namespace {

WidderMeasure single_atom_measure() {
    WidderMeasure m;
    m.atoms = {{0.5, 2.0}};
    m.c0 = 2.0;
    return m;
}

WidderMeasure two_atom_measure() {
    WidderMeasure m;
    m.atoms = {{0.5, 1.0}, {1.0, 0.5}};
    m.c0 = 1.0;
    return m;
}

WidderMeasure density_measure() {
    WidderMeasure m;
    m.atoms = {{0.5, 1.0}};
    m.density = WidderDensity{[](double) { return 0.3; }, 0.5, 1.5};
    m.c0 = 1.5;
    return m;
}

// the power family: atom at 1/gamma with unit weight and C0 = gamma makes
// h(t,x) = gamma * e^{x/gamma - t/(2 gamma^2)}
WidderMeasure power_measure(double gamma) {
    WidderMeasure m;
    m.atoms = {{1.0 / gamma, 1.0}};
    m.c0 = gamma;
    return m;
}

InitialUtility power_datum(double gamma) {
    InitialUtility v0;
    const double k = std::pow(gamma, gamma) / (1.0 - gamma);
    v0.value = [k, gamma](double x) { return k * std::pow(x, 1.0 - gamma); };
    v0.derivative = [k, gamma](double x, int order) {
        double coef = k;
        double p = 1.0 - gamma;
        for (int i = 0; i < order; ++i) {
            coef *= p;
            p -= 1.0;
        }
        return coef * std::pow(x, p);
    };
    v0.domain_lower = 0.0;
    return v0;
}

double fd_derivative(const std::function<double(double)>& f, double x, int k, double h) {
    auto v = [&](int i) { return f(x + i * h); };
    switch (k) {
        case 1: return (-v(2) + 8 * v(1) - 8 * v(-1) + v(-2)) / (12 * h);
        case 2: return (-v(2) + 16 * v(1) - 30 * v(0) + 16 * v(-1) - v(-2)) / (12 * h * h);
        case 3: return (v(2) - 2 * v(1) + 2 * v(-1) - v(-2)) / (2 * h * h * h);
        case 4: return (v(2) - 4 * v(1) + 6 * v(0) - 4 * v(-1) + v(-2)) / (h * h * h * h);
    }
    return 0.0;
}

}  // namespace

TEST_CASE("h of a zero measure is the constant term", "[widder]") {
    WidderMeasure m;
    m.c0 = 5.0;
    REQUIRE(h_eval(m, 0.7, -1.3) == 5.0);
    REQUIRE(h_eval(m, 2.0, 4.0) == 5.0);

    WidderMeasure empty;  // no atoms, no density, no constant
    REQUIRE_THROWS_AS(h_eval(empty, 0.0, 0.0), InvalidModelError);
}

TEST_CASE("h matches the atomic closed form", "[widder]") {
    const WidderMeasure m = single_atom_measure();
    REQUIRE(h_eval(m, 0.0, 0.0) == Catch::Approx(2.0).margin(1e-14));
    // 2 * (e^{0.5 - 0.125} - 1)/0.5 + 2 = 4(e^{0.375} - 1) + 2
    const double expected = 4.0 * (std::exp(0.375) - 1.0) + 2.0;
    REQUIRE(h_eval(m, 1.0, 1.0) == Catch::Approx(expected).epsilon(1e-13));
    REQUIRE(expected == Catch::Approx(3.81996565847280).epsilon(1e-12));
}

TEST_CASE("h derivatives match the atomic formulas and finite differences", "[widder]") {
    const WidderMeasure m = single_atom_measure();
    REQUIRE(h_derivative(m, 0.0, 0.0, 1) == Catch::Approx(2.0).margin(1e-14));
    // order 2 at (t,x)=(1,1): 2 * 0.5 * e^{0.375}
    REQUIRE(h_derivative(m, 1.0, 1.0, 2) == Catch::Approx(std::exp(0.375)).epsilon(1e-13));
    REQUIRE(h_derivative(m, 1.0, 1.0, 2) == Catch::Approx(1.45499141461820).epsilon(1e-12));

    for (const auto& meas : {single_atom_measure(), two_atom_measure(), density_measure()}) {
        for (double t : {0.0, 0.5, 1.7}) {
            for (double x : {-0.8, 0.3, 1.9}) {
                const double fd = fd_derivative(
                    [&](double s) { return h_eval(meas, t, s); }, x, 1, 1e-5);
                const double an = h_derivative(meas, t, x, 1);
                REQUIRE(an == Catch::Approx(fd).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("density part goes through the removable singularity", "[widder]") {
    WidderMeasure m;
    m.density = WidderDensity{[](double) { return 1.0; }, -0.5, 0.5};
    m.c0 = 0.0;
    // integrand at z=0 equals x; h(0,x) = int (e^{zx}-1)/z dz is finite and odd-ish in z
    const double v = h_eval(m, 0.0, 1.0);
    REQUIRE(std::isfinite(v));
    // oracle by direct quadrature away from 0 plus the series near 0
    const double oracle = integrate_adaptive(
        [&](double z) {
            return std::abs(z) < 1e-12 ? 1.0 : std::expm1(z * 1.0) / z;
        },
        -0.5, 0.5, 1e-13, 1e-13);
    REQUIRE(v == Catch::Approx(oracle).epsilon(1e-11));
}

TEST_CASE("h is strictly increasing and solves the backward heat identity", "[widder]") {
    for (const auto& meas : {single_atom_measure(), two_atom_measure(), density_measure()}) {
        for (double t : {0.0, 0.4, 1.3}) {
            for (double x : {-1.1, 0.0, 0.9, 2.2}) {
                REQUIRE(h_derivative(meas, t, x, 1) > 0.0);
                const double resid =
                    h_time_derivative(meas, t, x) + 0.5 * h_derivative(meas, t, x, 2);
                REQUIRE(std::abs(resid) <= 1e-9);
            }
        }
    }
}

TEST_CASE("h_inverse round trip and closed form", "[widder]") {
    for (const auto& meas : {single_atom_measure(), two_atom_measure(), density_measure()}) {
        for (double t : {0.0, 0.8, 1.6}) {
            for (double x : {-1.0, -0.2, 0.7, 2.5}) {
                const double w = h_eval(meas, t, x);
                REQUIRE(h_inverse(meas, t, w) == Catch::Approx(x).margin(1e-10));
            }
        }
    }
    // power measure: h(t,x) = 2 e^{x/2 - t/8}, so h^{-1}(0, 2e) = 2
    const WidderMeasure pm = power_measure(2.0);
    REQUIRE(h_eval(pm, 1.0, 1.0) == Catch::Approx(2.0 * std::exp(0.5 - 0.125)).epsilon(1e-13));
    REQUIRE(h_inverse(pm, 0.0, 2.0 * std::exp(1.0)) == Catch::Approx(2.0).margin(1e-11));
}

TEST_CASE("h_inverse rejects values outside the range", "[widder]") {
    const WidderMeasure m = single_atom_measure();
    // h(0,.) has infimum 2 - 4 = -2
    REQUIRE_THROWS_AS(h_inverse(m, 0.0, -3.0), RangeError);
    REQUIRE_NOTHROW(h_inverse(m, 0.0, 1.0));
    WidderMeasure zero;
    zero.c0 = 1.0;
    REQUIRE_THROWS_AS(h_inverse(zero, 0.0, 1.0), InvalidModelError);
}

TEST_CASE("u at t=0 returns the datum", "[widder]") {
    const WidderMeasure m = two_atom_measure();
    const InitialUtility v0 = make_compatible_datum(m, 1.0, -1.0);
    REQUIRE(u_eval(m, v0, 0.0, 0.4) == v0.value(0.4));
}

TEST_CASE("u matches the power closed form", "[widder]") {
    const double gamma = 2.0;
    const WidderMeasure m = power_measure(gamma);
    const InitialUtility v0 = power_datum(gamma);
    const double Gamma = (1.0 - gamma) / gamma;
    // u(t,x) = gamma^gamma x^{1-gamma}/(1-gamma) e^{-Gamma t/2}
    const double u12 = u_eval(m, v0, 1.0, 2.0);
    REQUIRE(u12 == Catch::Approx(-2.0 * std::exp(0.25)).epsilon(1e-10));
    REQUIRE(u12 == Catch::Approx(-2.56805083337548).epsilon(1e-10));
    for (double t : {0.3, 1.4}) {
        for (double x : {0.7, 3.1}) {
            const double closed =
                std::pow(gamma, gamma) * std::pow(x, 1.0 - gamma) / (1.0 - gamma) *
                std::exp(-0.5 * Gamma * t);
            REQUIRE(u_eval(m, v0, t, x) == Catch::Approx(closed).epsilon(1e-9));
        }
    }
}

TEST_CASE("u is nonincreasing in time, increasing and concave in wealth", "[widder]") {
    const WidderMeasure m = two_atom_measure();
    const InitialUtility v0 = make_compatible_datum(m, 1.0, 0.0);
    for (double x : {-0.8, 0.1, 1.2, 2.4}) {
        const double u0 = u_eval(m, v0, 0.0, x);
        const double u05 = u_eval(m, v0, 0.5, x);
        const double u1 = u_eval(m, v0, 1.0, x);
        REQUIRE(u1 <= u05);
        REQUIRE(u05 <= u0);
    }
    for (double t : {0.2, 1.1}) {
        for (double x : {-0.5, 0.6, 1.8}) {
            const DerivativeStack s = u_derivatives(m, v0, t, x, 4);
            REQUIRE(s.d1 > 0.0);
            REQUIRE(s.d2 < 0.0);
        }
    }
}

TEST_CASE("u derivative stack agrees with finite differences", "[widder]") {
    const WidderMeasure m = two_atom_measure();
    const InitialUtility v0 = make_compatible_datum(m, 1.0, 0.0);
    const double gamma = 2.0;
    const WidderMeasure pm = power_measure(gamma);
    const InitialUtility pv0 = power_datum(gamma);

    // power: u_x(1,2) = e^{1/4}
    const DerivativeStack ps = u_derivatives(pm, pv0, 1.0, 2.0, 4);
    REQUIRE(ps.d1 == Catch::Approx(std::exp(0.25)).epsilon(1e-10));

    for (double t : {0.4, 1.2}) {
        for (double x : {0.3, 1.5}) {
            const DerivativeStack s = u_derivatives(m, v0, t, x, 4);
            auto u_of_x = [&](double xx) { return u_eval(m, v0, t, xx); };
            const double step = 1e-3;
            REQUIRE(s.d1 == Catch::Approx(fd_derivative(u_of_x, x, 1, 1e-4)).epsilon(1e-6));
            REQUIRE(s.d2 == Catch::Approx(fd_derivative(u_of_x, x, 2, step)).epsilon(1e-6));
            REQUIRE(s.d3 == Catch::Approx(fd_derivative(u_of_x, x, 3, step)).epsilon(1e-4));
            REQUIRE(s.d4 == Catch::Approx(fd_derivative(u_of_x, x, 4, 5e-3)).epsilon(1e-3));
        }
    }
}

TEST_CASE("risk tolerance identity -u_x/u_xx (t, h(t,x)) = h_x(t,x)", "[widder]") {
    for (const auto& meas : {single_atom_measure(), two_atom_measure(), density_measure()}) {
        const InitialUtility v0 = make_compatible_datum(meas, 1.0, 0.0);
        for (double t : {0.3, 1.0}) {
            for (double x : {-0.6, 0.2, 1.1}) {
                const double w = h_eval(meas, t, x);
                const DerivativeStack s = u_derivatives(meas, v0, t, w, 2);
                const double lhs = -s.d1 / s.d2;
                const double rhs = h_derivative(meas, t, x, 1);
                REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("u solves its fully nonlinear equation (finite-difference time derivative)",
          "[widder]") {
    const WidderMeasure m = two_atom_measure();
    const InitialUtility v0 = make_compatible_datum(m, 1.0, 0.0);
    for (double t : {0.4, 0.9, 1.5}) {
        for (double x : {-0.4, 0.5, 1.6}) {
            const double ht = 1e-3 * (1.0 + t);
            auto u_of_t = [&](double tt) { return u_eval(m, v0, tt, x, 1e-12); };
            const double ut =
                (-u_of_t(t + 2 * ht) + 8 * u_of_t(t + ht) - 8 * u_of_t(t - ht) + u_of_t(t - 2 * ht)) /
                (12 * ht);
            const DerivativeStack s = u_derivatives(m, v0, t, x, 2);
            const double resid = ut - 0.5 * s.d1 * s.d1 / s.d2;
            REQUIRE(std::abs(resid) <= 1e-6 * (1.0 + std::abs(ut)));
            // analytic time derivative agrees with the finite difference
            REQUIRE(u_time_derivative(m, t, x) == Catch::Approx(ut).epsilon(1e-7));
        }
    }
}

TEST_CASE("measure validation rejects bad data", "[widder]") {
    WidderMeasure m;
    m.atoms = {{0.5, -1.0}};
    m.c0 = 0.0;
    REQUIRE_THROWS_AS(h_eval(m, 0.0, 0.0), InvalidModelError);
    WidderMeasure dup;
    dup.atoms = {{0.5, 1.0}, {0.5, 2.0}};
    dup.c0 = 0.0;
    REQUIRE_THROWS_AS(h_eval(dup, 0.0, 0.0), InvalidModelError);
}

TEST_CASE("compatible datum passes the shape check", "[widder]") {
    const WidderMeasure m = two_atom_measure();
    const InitialUtility v0 = make_compatible_datum(m, 1.0, 0.0);
    REQUIRE_NOTHROW(v0.validate(v0.domain_lower + 0.3, 3.0));
    // an explicitly convex handle is rejected
    InitialUtility bad;
    bad.value = [](double x) { return x * x; };
    REQUIRE_THROWS_AS(bad.validate(0.5, 2.0), InvalidModelError);
}

TEST_CASE("finite-difference datum fallback stays accurate at low orders", "[widder]") {
    const double gamma = 2.0;
    const WidderMeasure m = power_measure(gamma);
    InitialUtility fd_datum = power_datum(gamma);
    fd_datum.derivative = nullptr;  // force the finite-difference path
    REQUIRE(fd_datum.derivatives_are_fd());
    const InitialUtility exact = power_datum(gamma);
    for (double t : {0.5, 1.2}) {
        for (double x : {0.9, 2.3}) {
            const DerivativeStack a = u_derivatives(m, fd_datum, t, x, 2);
            const DerivativeStack b = u_derivatives(m, exact, t, x, 2);
            REQUIRE(a.d1 == Catch::Approx(b.d1).epsilon(1e-8));
            REQUIRE(a.d2 == Catch::Approx(b.d2).epsilon(1e-6));
        }
    }
}
