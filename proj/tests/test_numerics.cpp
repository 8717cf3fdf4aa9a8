#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fpp/quadrature.hpp"
#include "fpp/rng.hpp"
#include "fpp/roots.hpp"

using namespace fpp;

TEST_CASE("adaptive quadrature on smooth integrands", "[numerics]") {
    const double v1 = integrate_adaptive([](double x) { return std::exp(x); }, 0.0, 1.0);
    REQUIRE(v1 == Catch::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));

    const double v2 = integrate_adaptive([](double x) { return std::sin(10.0 * x); }, 0.0, M_PI);
    REQUIRE(v2 == Catch::Approx((1.0 - std::cos(10.0 * M_PI)) / 10.0).margin(1e-11));

    // peaked integrand forces subdivision
    const double v3 =
        integrate_adaptive([](double x) { return std::exp(-100.0 * x * x); }, -3.0, 3.0);
    REQUIRE(v3 == Catch::Approx(std::sqrt(M_PI) / 10.0).epsilon(1e-10));
}

TEST_CASE("adaptive quadrature reports non-convergence", "[numerics]") {
    REQUIRE_THROWS_AS(
        integrate_adaptive([](double x) { return std::sin(1.0 / (x * x + 1e-14)); }, 0.0, 1.0,
                           1e-14, 1e-14, 600),
        NumericError);
}

TEST_CASE("Gauss-Legendre nodes integrate polynomials exactly", "[numerics]") {
    std::vector<double> x, w;
    gauss_legendre(16, x, w);
    // degree-31 polynomial is exact for a 16-point rule
    auto f = [](double t) { return 31.0 * std::pow(t, 30); };
    const double v = integrate_gl(f, 0.0, 1.0, x, w);
    REQUIRE(v == Catch::Approx(1.0).epsilon(1e-13));
    double mass = 0.0;
    for (double wi : w) mass += wi;
    REQUIRE(mass == Catch::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("Brent finds roots of monotone maps", "[numerics]") {
    auto f = [](double x) { return std::exp(0.5 * x) - 3.0; };
    const double r = brent(f, 0.0, 4.0, f(0.0), f(4.0));
    REQUIRE(r == Catch::Approx(2.0 * std::log(3.0)).epsilon(1e-12));
    REQUIRE_THROWS_AS(brent(f, 3.0, 4.0, f(3.0), f(4.0)), RangeError);
}

TEST_CASE("path rng substreams are deterministic and independent", "[numerics]") {
    PathRng a(42, 7), b(42, 7), c(42, 8);
    for (int i = 0; i < 100; ++i) {
        const double va = a.normal();
        REQUIRE(va == b.normal());
    }
    // different stream gives a different sequence
    PathRng a2(42, 7);
    bool any_diff = false;
    for (int i = 0; i < 10; ++i) any_diff |= (a2.normal() != c.normal());
    REQUIRE(any_diff);
}

TEST_CASE("normal moments are sane", "[numerics]") {
    PathRng g(1234, 0);
    const int n = 200000;
    double s1 = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = g.normal();
        s1 += z;
        s2 += z * z;
    }
    REQUIRE(std::abs(s1 / n) < 0.01);
    REQUIRE(s2 / n == Catch::Approx(1.0).margin(0.01));
}
