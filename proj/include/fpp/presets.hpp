#pragma once

// Built-in model families and named presets.
//
//   cir-power        slow square-root factor, lambda = Lambda sqrt(y1); the
//                    fast factor is present but does not enter lambda, so the
//                    closed-form benchmark applies.
//   cir-power-fast   fast square-root factor, lambda = Lambda sqrt(y2).
//   cir-power-multi  both factors active, lambda = Lambda sqrt(y1 y2 / m_f).
//   ou-linear        OU fast factor with affine lambda in y2.

#include <cmath>
#include <string>

#include "fpp/factor_models.hpp"
#include "fpp/power_exact.hpp"

namespace fpp {

enum class LambdaDependence { SlowOnly, FastOnly, Both };

struct CirPowerConfig {
    double gamma_ra = 2.0;
    Eigen::VectorXd Lambda = (Eigen::VectorXd(1) << 0.5).finished();
    Eigen::VectorXd rho_s = (Eigen::VectorXd(1) << 0.3).finished();
    Eigen::VectorXd rho_f = (Eigen::VectorXd(1) << 0.1).finished();
    double rho_sf = 0.0;
    double slow_m = 1.0;
    double slow_beta = 0.4;
    double fast_m = 1.0;
    double fast_beta = 0.5;
    LambdaDependence dep = LambdaDependence::SlowOnly;
    double x0 = 2.0, y10 = 1.0, y20 = 1.0;
};

inline WidderMeasure power_widder_measure(double gamma_ra) {
    // single atom at 1/gamma with unit weight and C0 = gamma gives
    // h(t,x) = gamma e^{x/gamma - t/(2 gamma^2)}, the power-datum inverse
    WidderMeasure m;
    m.atoms = {{1.0 / gamma_ra, 1.0}};
    m.c0 = gamma_ra;
    return m;
}

inline InitialUtility power_initial_utility(double gamma_ra) {
    InitialUtility v0;
    const double k = std::pow(gamma_ra, gamma_ra) / (1.0 - gamma_ra);
    v0.value = [k, gamma_ra](double x) { return k * std::pow(x, 1.0 - gamma_ra); };
    v0.derivative = [k, gamma_ra](double x, int order) {
        double coef = k;
        double p = 1.0 - gamma_ra;
        for (int i = 0; i < order; ++i) {
            coef *= p;
            p -= 1.0;
        }
        return coef * std::pow(x, p);
    };
    v0.domain_lower = 0.0;
    return v0;
}

inline MarketModel build_cir_power_model(const CirPowerConfig& c) {
    MarketModel m;
    const int d = static_cast<int>(c.Lambda.size());
    m.n_assets = d;
    m.d_factors = d;
    const Eigen::VectorXd L = c.Lambda;
    const double mf = c.fast_m;
    switch (c.dep) {
        case LambdaDependence::SlowOnly:
            m.lambda = [L](double y1, double) {
                return (L * std::sqrt(std::max(y1, 0.0))).eval();
            };
            m.dlambda_dy1 = [L](double y1, double) {
                return (L / (2.0 * std::sqrt(std::max(y1, 1e-12)))).eval();
            };
            break;
        case LambdaDependence::FastOnly:
            m.lambda = [L](double, double y2) {
                return (L * std::sqrt(std::max(y2, 0.0))).eval();
            };
            m.dlambda_dy1 = [d](double, double) { return Eigen::VectorXd::Zero(d).eval(); };
            break;
        case LambdaDependence::Both:
            m.lambda = [L, mf](double y1, double y2) {
                return (L * std::sqrt(std::max(y1 * y2 / mf, 0.0))).eval();
            };
            m.dlambda_dy1 = [L, mf](double y1, double y2) {
                return (L * std::sqrt(std::max(y2 / mf, 0.0)) /
                        (2.0 * std::sqrt(std::max(y1, 1e-12))))
                    .eval();
            };
            break;
    }
    m.sigma = [d](double, double) { return Eigen::MatrixXd::Identity(d, d).eval(); };
    m.rho_s = c.rho_s;
    m.rho_f = c.rho_f;
    m.rho_sf = c.rho_sf;
    m.slow.b = [sm = c.slow_m](double y) { return sm - y; };
    m.slow.kappa = [sb = c.slow_beta](double y) { return sb * std::sqrt(std::max(y, 1e-12)); };
    m.fast.drift = [fm = c.fast_m](double y) { return fm - y; };
    m.fast.vol = [fb = c.fast_beta](double y) { return fb * std::sqrt(std::max(y, 1e-12)); };
    m.fast.domain_lo = 1e-8;
    m.fast.trunc_lo = 0.02;
    m.fast.trunc_hi = 4.0 * c.fast_m;
    m.widder = power_widder_measure(c.gamma_ra);
    m.v0 = power_initial_utility(c.gamma_ra);
    m.y1_ref = c.y10;
    m.y2_ref = c.y20;
    build_invariant(m);
    return m;
}

struct OuLinearConfig {
    Eigen::VectorXd Lambda = (Eigen::VectorXd(1) << 0.4).finished();
    double lam_const = 1.0;
    double lam_lin = 0.2;
    Eigen::VectorXd rho_s = (Eigen::VectorXd(1) << 0.2).finished();
    Eigen::VectorXd rho_f = (Eigen::VectorXd(1) << 0.25).finished();
    double rho_sf = 0.0;
    double slow_m = 1.0;
    double slow_beta = 0.3;
    double fast_m = 1.0;
    double fast_beta = 0.3;
    double gamma_ra = 2.0;
    double x0 = 2.0, y10 = 1.0, y20 = 1.0;
};

inline MarketModel build_ou_linear_model(const OuLinearConfig& c) {
    MarketModel m;
    const int d = static_cast<int>(c.Lambda.size());
    m.n_assets = d;
    m.d_factors = d;
    const Eigen::VectorXd L = c.Lambda;
    m.lambda = [L, c0 = c.lam_const, c1 = c.lam_lin](double, double y2) {
        return (L * (c0 + c1 * y2)).eval();
    };
    m.dlambda_dy1 = [d](double, double) { return Eigen::VectorXd::Zero(d).eval(); };
    m.sigma = [d](double, double) { return Eigen::MatrixXd::Identity(d, d).eval(); };
    m.rho_s = c.rho_s;
    m.rho_f = c.rho_f;
    m.rho_sf = c.rho_sf;
    m.slow.b = [sm = c.slow_m](double y) { return sm - y; };
    m.slow.kappa = [sb = c.slow_beta](double) { return sb; };
    m.fast.drift = [fm = c.fast_m](double y) { return fm - y; };
    m.fast.vol = [fb = c.fast_beta](double) { return fb; };
    m.fast.trunc_lo = c.fast_m - 6.0 * c.fast_beta;
    m.fast.trunc_hi = c.fast_m + 6.0 * c.fast_beta;
    m.widder = power_widder_measure(c.gamma_ra);
    m.v0 = power_initial_utility(c.gamma_ra);
    m.y1_ref = c.y10;
    m.y2_ref = c.y20;
    build_invariant(m);
    return m;
}

// Benchmark parameter views used by the convergence studies.
inline PowerModelParams slow_benchmark_params(const CirPowerConfig& c, double delta = 0.01) {
    PowerModelParams p;
    p.gamma_ra = c.gamma_ra;
    p.Lambda = c.Lambda;
    p.m0 = c.slow_m;
    p.beta = c.slow_beta;
    p.rho = c.rho_s;
    p.delta = delta;
    return p;
}

inline PowerModelParams fast_benchmark_params(const CirPowerConfig& c) {
    PowerModelParams p;
    p.gamma_ra = c.gamma_ra;
    p.Lambda = c.Lambda;
    p.m0 = c.fast_m;
    p.beta = c.fast_beta;
    p.rho = c.rho_f;
    p.delta = 1.0;  // reparametrized per study point
    return p;
}

inline CirPowerConfig preset_cir_power() { return CirPowerConfig{}; }

inline CirPowerConfig preset_cir_power_fast() {
    CirPowerConfig c;
    c.dep = LambdaDependence::FastOnly;
    c.rho_s = Eigen::VectorXd::Zero(1);
    c.rho_f = (Eigen::VectorXd(1) << 0.3).finished();
    c.fast_m = 1.0;
    c.fast_beta = 0.4;
    return c;
}

// Slow leg of the two-scale study, sized so that the slow and fast error
// constants are comparable at the study point (t,x,y) = (1,2,2).
inline CirPowerConfig preset_multiscale_slow() {
    CirPowerConfig c;
    c.Lambda = (Eigen::VectorXd(1) << 0.8).finished();
    return c;
}

// Configuration for the slow-scale rate study.  The correlation and factor
// volatility are raised so the sqrt(delta) term dominates the one-term error
// across the whole grid {1e-1..1e-4}; probe at (t,x,y) = (1,2,1.1).
inline CirPowerConfig preset_convergence_slow() {
    CirPowerConfig c;
    c.rho_s = (Eigen::VectorXd(1) << 0.6).finished();
    c.slow_beta = 0.8;
    return c;
}

inline CirPowerConfig preset_cir_power_multi() {
    CirPowerConfig c;
    c.dep = LambdaDependence::Both;
    c.rho_s = (Eigen::VectorXd(1) << 0.3).finished();
    c.rho_f = (Eigen::VectorXd(1) << 0.2).finished();
    c.rho_sf = 0.1;
    c.fast_m = 1.0;
    c.fast_beta = 0.4;
    return c;
}

inline CirPowerConfig preset_cir_config(const std::string& name) {
    if (name == "cir-power") return preset_cir_power();
    if (name == "cir-power-fast") return preset_cir_power_fast();
    if (name == "cir-power-multi") return preset_cir_power_multi();
    if (name == "multiscale-slow") return preset_multiscale_slow();
    if (name == "convergence-slow") return preset_convergence_slow();
    throw ValidationError("unknown preset '" + name + "'");
}

inline MarketModel preset_model(const std::string& name) {
    if (name == "ou-linear") return build_ou_linear_model(OuLinearConfig{});
    return build_cir_power_model(preset_cir_config(name));
}

}  // namespace fpp
