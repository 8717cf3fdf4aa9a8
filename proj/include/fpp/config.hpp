#pragma once

// Declarative run configuration.  One JSON format, schema-tagged, strict:
// unknown keys are errors, not warnings.  Model invariants (correlation PSD,
// volatility rank, density normalization) are checked at load time.

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fpp/csv.hpp"
#include "fpp/presets.hpp"

namespace fpp {

using nlohmann::json;

struct StudyPointConfig {
    double t = 1.0;
    double x = 2.0;
    double y = 1.1;
};

struct SimulateConfig {
    double x0 = 2.0, y10 = 1.0, y20 = 1.0;
    double horizon = 1.0;
    double dt = 1e-4;
    std::uint64_t n_paths = 100000;
    double delta = 0.01;
    double epsilon = 0.0;
    bool antithetic = false;
    bool dump_paths = false;
};

struct RunConfig {
    std::string schema = "fpp-config-v1";
    std::string preset = "cir-power";
    std::optional<CirPowerConfig> cir_model;
    std::optional<OuLinearConfig> ou_model;

    std::vector<double> grid_t{0.0, 0.5, 1.0, 1.5, 2.0};
    std::vector<double> grid_x{0.5, 1.0, 2.0, 3.5, 5.0};
    std::vector<double> grid_y1{0.5, 1.0, 1.5, 2.0};
    std::vector<double> grid_y2{0.5, 1.0, 1.5, 2.0};
    std::vector<double> grid_delta{1e-1, 1e-2, 1e-3, 1e-4};
    std::vector<double> grid_epsilon{1e-2, 1e-3, 1e-4};

    double tol_quad = 1e-10;
    std::uint64_t seed = 12345;
    std::string out_dir = ".";
    int threads = 0;  // 0: hardware concurrency
    std::string output = "csv";
    std::string converge_mode = "slow";

    double eval_delta = 0.01;
    double eval_epsilon = 0.01;

    StudyPointConfig study;
    SimulateConfig simulate;
    std::vector<std::pair<double, double>> drift_pairs{
        {1e-2, 1e-2}, {1e-3, 1e-3}, {1e-4, 1e-4}};

    std::string canonical;  // serialized form used for hashing

    std::uint64_t hash() const { return fnv1a64(canonical + "#" + std::to_string(seed)); }

    MarketModel build_model() const {
        if (cir_model) return build_cir_power_model(*cir_model);
        if (ou_model) return build_ou_linear_model(*ou_model);
        return preset_model(preset);
    }
};

namespace detail {

inline void require_keys(const json& j, const std::string& section,
                         const std::set<std::string>& allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ValidationError("unknown key '" + it.key() + "' in " + section);
    }
}

inline std::vector<double> grid_of(const json& j, const std::string& name) {
    std::vector<double> g = j.get<std::vector<double>>();
    if (g.empty()) throw ValidationError("grid '" + name + "' must be nonempty");
    for (std::size_t i = 0; i + 1 < g.size(); ++i)
        if (!(g[i] < g[i + 1]))
            throw ValidationError("grid '" + name + "' must be strictly increasing");
    return g;
}

inline Eigen::VectorXd vec_of(const json& j) {
    const std::vector<double> v = j.get<std::vector<double>>();
    Eigen::VectorXd out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out(i) = v[i];
    return out;
}

inline void check_power_regime(double gamma_ra, const Eigen::VectorXd& rho,
                               const std::string& which) {
    const double G = (1.0 - gamma_ra) / gamma_ra;
    if (std::abs(1.0 + G * rho.squaredNorm()) < 1e-12)
        throw ValidationError("excluded case |" + which +
                              "|^2 = gamma/(gamma-1): the distortion power is undefined");
    if (rho.norm() > 1.0 + 1e-12)
        throw ValidationError("|" + which + "| must not exceed 1");
}

inline CirPowerConfig parse_cir_model(const json& j) {
    require_keys(j, "model",
                 {"family", "gamma_ra", "Lambda", "rho_s", "rho_f", "rho_sf", "slow_m",
                  "slow_beta", "fast_m", "fast_beta", "lambda_dep", "x0", "y10", "y20"});
    CirPowerConfig c;
    if (j.contains("gamma_ra")) c.gamma_ra = j["gamma_ra"].get<double>();
    if (j.contains("Lambda")) c.Lambda = vec_of(j["Lambda"]);
    if (j.contains("rho_s")) c.rho_s = vec_of(j["rho_s"]);
    if (j.contains("rho_f")) c.rho_f = vec_of(j["rho_f"]);
    if (j.contains("rho_sf")) c.rho_sf = j["rho_sf"].get<double>();
    if (j.contains("slow_m")) c.slow_m = j["slow_m"].get<double>();
    if (j.contains("slow_beta")) c.slow_beta = j["slow_beta"].get<double>();
    if (j.contains("fast_m")) c.fast_m = j["fast_m"].get<double>();
    if (j.contains("fast_beta")) c.fast_beta = j["fast_beta"].get<double>();
    if (j.contains("x0")) c.x0 = j["x0"].get<double>();
    if (j.contains("y10")) c.y10 = j["y10"].get<double>();
    if (j.contains("y20")) c.y20 = j["y20"].get<double>();
    if (j.contains("lambda_dep")) {
        const std::string dep = j["lambda_dep"].get<std::string>();
        if (dep == "slow")
            c.dep = LambdaDependence::SlowOnly;
        else if (dep == "fast")
            c.dep = LambdaDependence::FastOnly;
        else if (dep == "both")
            c.dep = LambdaDependence::Both;
        else
            throw ValidationError("lambda_dep must be one of slow|fast|both");
    }
    if (c.rho_s.size() != c.Lambda.size() || c.rho_f.size() != c.Lambda.size())
        throw ValidationError("rho_s, rho_f and Lambda must have the same length");
    if (!(c.gamma_ra > 0.0) || c.gamma_ra == 1.0)
        throw ValidationError("gamma_ra must be positive and different from 1");
    check_power_regime(c.gamma_ra, c.rho_s, "rho_s");
    check_power_regime(c.gamma_ra, c.rho_f, "rho_f");
    return c;
}

inline OuLinearConfig parse_ou_model(const json& j) {
    require_keys(j, "model",
                 {"family", "gamma_ra", "Lambda", "lam_const", "lam_lin", "rho_s", "rho_f",
                  "rho_sf", "slow_m", "slow_beta", "fast_m", "fast_beta", "x0", "y10", "y20"});
    OuLinearConfig c;
    if (j.contains("gamma_ra")) c.gamma_ra = j["gamma_ra"].get<double>();
    if (j.contains("Lambda")) c.Lambda = vec_of(j["Lambda"]);
    if (j.contains("lam_const")) c.lam_const = j["lam_const"].get<double>();
    if (j.contains("lam_lin")) c.lam_lin = j["lam_lin"].get<double>();
    if (j.contains("rho_s")) c.rho_s = vec_of(j["rho_s"]);
    if (j.contains("rho_f")) c.rho_f = vec_of(j["rho_f"]);
    if (j.contains("rho_sf")) c.rho_sf = j["rho_sf"].get<double>();
    if (j.contains("slow_m")) c.slow_m = j["slow_m"].get<double>();
    if (j.contains("slow_beta")) c.slow_beta = j["slow_beta"].get<double>();
    if (j.contains("fast_m")) c.fast_m = j["fast_m"].get<double>();
    if (j.contains("fast_beta")) c.fast_beta = j["fast_beta"].get<double>();
    if (j.contains("x0")) c.x0 = j["x0"].get<double>();
    if (j.contains("y10")) c.y10 = j["y10"].get<double>();
    if (j.contains("y20")) c.y20 = j["y20"].get<double>();
    if (c.rho_s.size() != c.Lambda.size() || c.rho_f.size() != c.Lambda.size())
        throw ValidationError("rho_s, rho_f and Lambda must have the same length");
    return c;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
    detail::require_keys(j, "config root",
                         {"schema", "preset", "model", "grids", "tolerances", "seed", "out_dir",
                          "threads", "output", "study", "simulate", "drift_pairs",
                          "converge_mode", "eval_delta", "eval_epsilon"});
    RunConfig cfg;
    if (!j.contains("schema") || j["schema"].get<std::string>() != "fpp-config-v1")
        throw ValidationError("config must declare \"schema\": \"fpp-config-v1\"");
    if (j.contains("preset")) cfg.preset = j["preset"].get<std::string>();
    if (j.contains("model")) {
        const json& m = j["model"];
        const std::string family =
            m.contains("family") ? m["family"].get<std::string>() : "cir-power";
        if (family == "cir-power")
            cfg.cir_model = detail::parse_cir_model(m);
        else if (family == "ou-linear")
            cfg.ou_model = detail::parse_ou_model(m);
        else
            throw ValidationError("unknown model family '" + family + "'");
    }
    if (j.contains("grids")) {
        const json& g = j["grids"];
        detail::require_keys(g, "grids", {"t", "x", "y1", "y2", "delta", "epsilon"});
        if (g.contains("t")) cfg.grid_t = detail::grid_of(g["t"], "t");
        if (g.contains("x")) cfg.grid_x = detail::grid_of(g["x"], "x");
        if (g.contains("y1")) cfg.grid_y1 = detail::grid_of(g["y1"], "y1");
        if (g.contains("y2")) cfg.grid_y2 = detail::grid_of(g["y2"], "y2");
        if (g.contains("delta")) {
            cfg.grid_delta = g["delta"].get<std::vector<double>>();
            if (cfg.grid_delta.empty()) throw ValidationError("grid 'delta' must be nonempty");
        }
        if (g.contains("epsilon")) {
            cfg.grid_epsilon = g["epsilon"].get<std::vector<double>>();
            if (cfg.grid_epsilon.empty())
                throw ValidationError("grid 'epsilon' must be nonempty");
        }
    }
    if (j.contains("tolerances")) {
        const json& t = j["tolerances"];
        detail::require_keys(t, "tolerances", {"quad"});
        if (t.contains("quad")) cfg.tol_quad = t["quad"].get<double>();
        if (!(cfg.tol_quad > 0.0)) throw ValidationError("tolerances must be positive");
    }
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (j.contains("output")) {
        cfg.output = j["output"].get<std::string>();
        if (cfg.output != "csv" && cfg.output != "json")
            throw ValidationError("output must be csv or json");
    }
    if (j.contains("converge_mode")) {
        cfg.converge_mode = j["converge_mode"].get<std::string>();
        if (cfg.converge_mode != "slow" && cfg.converge_mode != "fast" &&
            cfg.converge_mode != "multi")
            throw ValidationError("converge_mode must be slow, fast or multi");
    }
    if (j.contains("eval_delta")) cfg.eval_delta = j["eval_delta"].get<double>();
    if (j.contains("eval_epsilon")) cfg.eval_epsilon = j["eval_epsilon"].get<double>();
    if (cfg.eval_delta < 0.0 || cfg.eval_epsilon < 0.0)
        throw ValidationError("eval_delta and eval_epsilon must be nonnegative");
    if (j.contains("study")) {
        const json& s = j["study"];
        detail::require_keys(s, "study", {"t", "x", "y"});
        if (s.contains("t")) cfg.study.t = s["t"].get<double>();
        if (s.contains("x")) cfg.study.x = s["x"].get<double>();
        if (s.contains("y")) cfg.study.y = s["y"].get<double>();
    }
    if (j.contains("simulate")) {
        const json& s = j["simulate"];
        detail::require_keys(s, "simulate",
                             {"x0", "y10", "y20", "horizon", "dt", "n_paths", "delta", "epsilon",
                              "antithetic", "dump_paths"});
        if (s.contains("x0")) cfg.simulate.x0 = s["x0"].get<double>();
        if (s.contains("y10")) cfg.simulate.y10 = s["y10"].get<double>();
        if (s.contains("y20")) cfg.simulate.y20 = s["y20"].get<double>();
        if (s.contains("horizon")) cfg.simulate.horizon = s["horizon"].get<double>();
        if (s.contains("dt")) cfg.simulate.dt = s["dt"].get<double>();
        if (s.contains("n_paths")) cfg.simulate.n_paths = s["n_paths"].get<std::uint64_t>();
        if (s.contains("delta")) cfg.simulate.delta = s["delta"].get<double>();
        if (s.contains("epsilon")) cfg.simulate.epsilon = s["epsilon"].get<double>();
        if (s.contains("antithetic")) cfg.simulate.antithetic = s["antithetic"].get<bool>();
        if (s.contains("dump_paths")) cfg.simulate.dump_paths = s["dump_paths"].get<bool>();
        if (!(cfg.simulate.dt > 0.0) || !(cfg.simulate.horizon > 0.0))
            throw ValidationError("simulate.dt and simulate.horizon must be positive");
        if (cfg.simulate.n_paths == 0) throw ValidationError("simulate.n_paths must be positive");
    }
    if (j.contains("drift_pairs")) {
        cfg.drift_pairs.clear();
        for (const auto& p : j["drift_pairs"]) {
            if (!p.is_array() || p.size() != 2)
                throw ValidationError("drift_pairs entries must be [delta, epsilon] pairs");
            cfg.drift_pairs.emplace_back(p[0].get<double>(), p[1].get<double>());
        }
        if (cfg.drift_pairs.empty()) throw ValidationError("drift_pairs must be nonempty");
    }
    cfg.canonical = j.dump();
    return cfg;
}

inline RunConfig load_config_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // byte offset -> line number for the error message
        std::size_t line = 1;
        for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
            if (text[i] == '\n') ++line;
        throw ValidationError("config parse error at line " + std::to_string(line) + ": " +
                              e.what());
    }
    return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_string(ss.str());
}

inline RunConfig config_from_preset(const std::string& name) {
    json j;
    j["schema"] = "fpp-config-v1";
    j["preset"] = name;
    RunConfig cfg = parse_config(j);
    if (name == "cir-power-fast") cfg.converge_mode = "fast";
    return cfg;
}

// Full load-time validation of the assembled model.
inline void validate_config_model(const RunConfig& cfg, const MarketModel& model) {
    std::vector<double> y1s{cfg.grid_y1.front(), cfg.grid_y1.back(), model.y1_ref};
    std::vector<double> y2s{cfg.grid_y2.front(), cfg.grid_y2.back(), model.y2_ref};
    validate_model(model, y1s, y2s);
    model.v0.validate(model.v0.domain_lower + 0.25, model.v0.domain_lower + 5.0);
}

}  // namespace fpp
