#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "fpp/power_exact.hpp"
#include "fpp/presets.hpp"

using namespace fpp;

namespace {

PowerModelParams bench_params(double delta = 0.01) {
    return slow_benchmark_params(preset_cir_power(), delta);
}

std::shared_ptr<ValueSurface> bench_surface(const std::string& name) {
    return std::make_shared<ValueSurface>(std::make_shared<MarketModel>(preset_model(name)));
}

}  // namespace

TEST_CASE("Riccati solution satisfies its initial conditions", "[power]") {
    const RiccatiSolution s = riccati_solve(bench_params());
    REQUIRE(s.A1(0.0) == 0.0);
    REQUIRE(s.A2(0.0) == 0.0);
    REQUIRE(s.regime_case == 3);
}

TEST_CASE("Riccati residual via finite differences", "[power]") {
    for (double delta : {0.01, 0.3}) {
        const RiccatiSolution s = riccati_solve(bench_params(delta));
        for (double t : {0.2, 0.9, 1.7}) {
            const double h = 1e-5;
            const double fd =
                (-s.A1(t + 2 * h) + 8 * s.A1(t + h) - 8 * s.A1(t - h) + s.A1(t - 2 * h)) /
                (12 * h);
            // A1' + c2 A1^2 + c1 A1 + c0 = 0
            const double resid = fd + s.c2 * s.A1(t) * s.A1(t) + s.c1 * s.A1(t) + s.c0;
            REQUIRE(std::abs(resid) <= 1e-8);
            // A2' = -delta m A1
            const double fd2 =
                (-s.A2(t + 2 * h) + 8 * s.A2(t + h) - 8 * s.A2(t - h) + s.A2(t - 2 * h)) /
                (12 * h);
            REQUIRE(fd2 == Catch::Approx(-s.delta * s.m0 * s.A1(t)).margin(1e-8));
        }
    }
}

TEST_CASE("Riccati roots satisfy Vieta's formulas", "[power]") {
    const PowerModelParams p = bench_params();
    const RiccatiSolution s = riccati_solve(p);
    const double G = p.big_gamma();
    const double product = (G * p.Lambda.squaredNorm() / (2.0 * p.q())) /
                           (0.5 * p.delta * p.beta * p.beta);
    REQUIRE(s.a_minus * s.a_plus == Catch::Approx(product).epsilon(1e-10));
    REQUIRE(s.a_minus + s.a_plus == Catch::Approx(-s.c1 / s.c2).epsilon(1e-10));
    REQUIRE(s.a_plus > 0.0);
}

TEST_CASE("benchmark value solves the full one-factor equation", "[power]") {
    const PowerModelParams p = bench_params();
    const PowerSurface s = make_power_surface(p);
    REQUIRE(s.value(0.0, 2.0, 1.0) == Catch::Approx(power_datum_value(2.0, 2.0)));
    double worst = 0.0;
    for (double t : {0.1, 0.7, 1.5, 2.0}) {
        for (double x : {0.5, 1.5, 4.0}) {
            for (double y : {0.3, 1.0, 2.5}) {
                const double resid = hjb_residual_slow(s, p, t, x, y);
                const double scale = std::abs(s.vt(t, x, y)) + 1e-12;
                worst = std::max(worst, std::abs(resid) / scale);
            }
        }
    }
    REQUIRE(worst <= 1e-6);
}

TEST_CASE("benchmark is increasing and strictly concave in wealth", "[power]") {
    const PowerSurface s = make_power_surface(bench_params());
    for (double t : {0.2, 1.1}) {
        for (double x : {0.4, 1.0, 3.2}) {
            REQUIRE(s.vx(t, x, 1.0) > 0.0);
            REQUIRE(s.vxx(t, x, 1.0) < 0.0);
        }
    }
}

TEST_CASE("A1 drifts monotonically toward its limiting root", "[power]") {
    const RiccatiSolution s = riccati_solve(bench_params());
    // mixed-sign roots: the flow runs from 0 to a_plus, |A1 - a_plus| decreasing
    double prev = std::abs(s.A1(0.0) - s.a_plus);
    for (double t : {0.5, 1.0, 2.0, 4.0}) {
        const double d = std::abs(s.A1(t) - s.a_plus);
        REQUIRE(d <= prev + 1e-15);
        prev = d;
    }
    // and stays within the root bracket
    for (double t : {0.3, 1.3, 3.3}) {
        REQUIRE(s.A1(t) >= std::min(0.0, s.a_minus) - 1e-12);
        REQUIRE(s.A1(t) <= s.a_plus + 1e-12);
    }
}

TEST_CASE("exact value approaches the leading order as delta vanishes", "[power]") {
    auto surf = bench_surface("cir-power");
    const double t = 1.0, x = 2.0, y = 1.0;
    const double v0 = surf->v0_eval(t, x, y).value;
    double prev_ratio = 0.0;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
        PowerModelParams p = bench_params(delta);
        const double diff = std::abs(exact_value(p, t, x, y) - v0);
        const double ratio = diff / std::sqrt(delta);
        if (prev_ratio > 0.0) REQUIRE(ratio == Catch::Approx(prev_ratio).epsilon(0.25));
        prev_ratio = ratio;
    }
}

TEST_CASE("slow-scale error study shows the expected rates", "[power]") {
    const CirPowerConfig c = preset_convergence_slow();
    auto surf = std::make_shared<ValueSurface>(
        std::make_shared<MarketModel>(build_cir_power_model(c)));
    const std::vector<double> deltas{1e-1, 1e-2, 1e-3, 1e-4};
    // probe away from the mean-reversion level, where the second-order
    // coefficient of the benchmark degenerates
    const StudyResult st = error_study(slow_benchmark_params(c), *surf, deltas, 1.0, 2.0, 1.1);
    INFO("one-term slope " << st.slope_one << ", two-term slope " << st.slope_two);
    REQUIRE(st.slope_one > 0.4);
    REQUIRE(st.slope_one < 0.6);
    REQUIRE(st.slope_two > 0.85);
    REQUIRE(st.slope_two < 1.15);
}

TEST_CASE("zero correlation kills the first-order term and doubles the rate", "[power]") {
    CirPowerConfig c = preset_convergence_slow();
    c.rho_s = Eigen::VectorXd::Zero(1);
    auto surf = std::make_shared<ValueSurface>(
        std::make_shared<MarketModel>(build_cir_power_model(c)));
    PowerModelParams p = slow_benchmark_params(c);
    const std::vector<double> deltas{1e-1, 1e-2, 1e-3, 1e-4};
    const StudyResult st = error_study(p, *surf, deltas, 1.0, 2.0, 1.1);
    REQUIRE(surf->v10_eval(1.0, 2.0, 1.1) == 0.0);
    INFO("one-term slope " << st.slope_one);
    REQUIRE(st.slope_one > 0.85);
    REQUIRE(st.slope_one < 1.15);
}

TEST_CASE("stationary branch solves the fast-scale equation exactly", "[power]") {
    const CirPowerConfig c = preset_cir_power_fast();
    const PowerModelParams p = fast_benchmark_params(c);
    for (double eps : {1e-2, 1e-3}) {
        const FastBranchSolution fb = fast_branch_solution(p, eps);
        for (double t : {0.3, 1.2}) {
            for (double x : {0.8, 2.5}) {
                for (double y : {0.5, 1.4}) {
                    const double resid = hjb_residual_fast(fb, p, t, x, y);
                    const double scale = std::abs(fb.vt(t, x, y)) + 1e-12;
                    REQUIRE(std::abs(resid) / scale <= 1e-9);
                }
            }
        }
        // the branch root is O(epsilon)
        REQUIRE(std::abs(fb.b_star) < 0.1 * std::sqrt(eps));
    }
}

TEST_CASE("fast-scale study at the reparametrized benchmark", "[power]") {
    const CirPowerConfig c = preset_cir_power_fast();
    auto surf = std::make_shared<ValueSurface>(
        std::make_shared<MarketModel>(build_cir_power_model(c)));
    // consistency of the averaged scale with the factor module
    REQUIRE(lambda_bar_sq(surf->model(), 1.0) ==
            Catch::Approx(0.25 * c.fast_m).margin(1e-6));

    const PowerModelParams p = fast_benchmark_params(c);
    const std::vector<double> eps{1e-2, 1e-3, 1e-4};
    const StudyResult st = fast_reparam_study(p, *surf, eps, 1.0, 2.0, 1.0);
    INFO("one-term slope " << st.slope_one << ", two-term slope " << st.slope_two);
    REQUIRE(st.slope_two > 0.85);
    REQUIRE(st.slope_two < 1.15);
    // the one-term error decays but slower than the corrected one
    REQUIRE(st.slope_one > 0.4);
    REQUIRE(st.slope_one < st.slope_two);
    for (std::size_t i = 0; i + 1 < st.rows.size(); ++i)
        REQUIRE(st.rows[i + 1].err_two < st.rows[i].err_two);
}

TEST_CASE("fast correction vanishes without fast correlation", "[power]") {
    CirPowerConfig c = preset_cir_power_fast();
    c.rho_f = Eigen::VectorXd::Zero(1);
    auto surf = std::make_shared<ValueSurface>(
        std::make_shared<MarketModel>(build_cir_power_model(c)));
    REQUIRE(surf->v01_eval(1.0, 2.0, 1.0) == 0.0);
}

TEST_CASE("multiscale study stays bounded relative to delta + epsilon", "[power]") {
    const CirPowerConfig cs = preset_multiscale_slow();
    const CirPowerConfig cf = preset_cir_power_fast();
    auto ss = std::make_shared<ValueSurface>(
        std::make_shared<MarketModel>(build_cir_power_model(cs)));
    auto sf = std::make_shared<ValueSurface>(
        std::make_shared<MarketModel>(build_cir_power_model(cf)));
    const std::vector<double> ds{1e-2, 1e-3};
    const std::vector<double> es{1e-2, 1e-3};
    const auto rows = multiscale_study(slow_benchmark_params(cs), *ss, fast_benchmark_params(cf),
                                       *sf, ds, es, 1.0, 2.0, 2.0);
    REQUIRE(rows.size() == 4);
    double rmin = 1e300, rmax = 0.0;
    for (const auto& r : rows) {
        rmin = std::min(rmin, r.ratio);
        rmax = std::max(rmax, r.ratio);
    }
    INFO("ratio spread " << rmax / rmin);
    REQUIRE(rmax / rmin < 3.0);

    // fixing one scale tiny reduces to the single-scale slopes
    const auto diag = multiscale_study(slow_benchmark_params(cs), *ss, fast_benchmark_params(cf),
                                       *sf, {1e-2, 1e-3, 1e-4}, {1e-8}, 1.0, 2.0, 2.0);
    std::vector<double> lx, ly;
    for (const auto& r : diag) {
        lx.push_back(std::log(r.delta));
        ly.push_back(std::log(r.err_slow));
    }
    const double slope = (ly.back() - ly.front()) / (lx.back() - lx.front());
    REQUIRE(slope > 0.85);
    REQUIRE(slope < 1.15);
}

TEST_CASE("parameter validation and regime errors", "[power]") {
    PowerModelParams p = bench_params();
    p.gamma_ra = 1.0;
    REQUIRE_THROWS_AS(riccati_solve(p), ValidationError);

    // excluded correlation case |rho|^2 = gamma/(gamma-1)
    PowerModelParams px = bench_params();
    px.gamma_ra = 2.0;
    px.rho = (Eigen::VectorXd(1) << std::sqrt(2.0)).finished();
    REQUIRE_THROWS_AS(riccati_solve(px), ValidationError);

    // gamma < 1 with positive L.rho falls outside all three admissible cases
    PowerModelParams pb = bench_params();
    pb.gamma_ra = 0.5;
    try {
        riccati_solve(pb);
        FAIL("expected a regime error");
    } catch (const RegimeError& e) {
        REQUIRE(std::string(e.what()).find("admissible cases") != std::string::npos);
    }
}

TEST_CASE("finite blow-up time is detected when both roots are positive", "[power]") {
    // gamma < 1 with negative L.rho and a large enough time scale has real
    // positive roots and a finite existence horizon
    PowerModelParams p;
    p.gamma_ra = 0.5;  // G = 1
    p.Lambda = (Eigen::VectorXd(1) << 0.3).finished();
    p.rho = (Eigen::VectorXd(1) << -0.5).finished();
    p.m0 = 1.0;
    p.beta = 0.4;
    p.delta = 0.05;
    const RiccatiSolution s = riccati_solve(p);
    REQUIRE(s.a_minus > 0.0);
    REQUIRE(std::isfinite(s.blow_up_time));
    REQUIRE_NOTHROW(s.A1(0.5 * s.blow_up_time));
    REQUIRE_THROWS_AS(s.A1(1.1 * s.blow_up_time), RegimeError);
    // residual still holds on the existence window
    const double t = 0.3 * s.blow_up_time, h = 1e-5;
    const double fd =
        (-s.A1(t + 2 * h) + 8 * s.A1(t + h) - 8 * s.A1(t - h) + s.A1(t - 2 * h)) / (12 * h);
    REQUIRE(std::abs(fd + s.c2 * s.A1(t) * s.A1(t) + s.c1 * s.A1(t) + s.c0) <= 1e-8);
}
