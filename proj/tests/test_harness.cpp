#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "fpp/harness.hpp"

using namespace fpp;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string tmp_dir(const std::string& leaf) {
    const std::string d = (std::filesystem::temp_directory_path() / leaf).string();
    std::filesystem::create_directories(d);
    return d;
}

const std::string kSmallSim = R"({
    "schema": "fpp-config-v1",
    "preset": "cir-power",
    "simulate": {"x0": 2.0, "y10": 1.0, "y20": 1.0, "horizon": 0.25,
                 "dt": 1e-3, "n_paths": 1500, "delta": 0.01, "epsilon": 0.0},
    "seed": 424242
})";

}  // namespace

TEST_CASE("config loading is strict", "[harness]") {
    REQUIRE_THROWS_AS(load_config_string("{}"), ValidationError);
    REQUIRE_THROWS_AS(load_config_string(R"({"schema":"fpp-config-v1","bogus":1})"),
                      ValidationError);
    REQUIRE_THROWS_AS(
        load_config_string(R"({"schema":"fpp-config-v1","tolerances":{"quad":-1e-9}})"),
        ValidationError);
    REQUIRE_THROWS_AS(
        load_config_string(R"({"schema":"fpp-config-v1","grids":{"x":[2.0,1.0]}})"),
        ValidationError);
    // parse errors carry a line number
    try {
        load_config_string("{\n  \"schema\": \"fpp-config-v1\",\n  oops\n}");
        FAIL("expected parse error");
    } catch (const ValidationError& e) {
        REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
    }
    // unknown keys are named together with their section
    try {
        load_config_string(R"({"schema":"fpp-config-v1","simulate":{"dt":0.001,"dx":1}})");
        FAIL("expected unknown-key error");
    } catch (const ValidationError& e) {
        REQUIRE(std::string(e.what()).find("'dx'") != std::string::npos);
        REQUIRE(std::string(e.what()).find("simulate") != std::string::npos);
    }
}

TEST_CASE("excluded correlation case is rejected at load", "[harness]") {
    // gamma = 2 excludes |rho|^2 = 2
    const std::string cfg = R"({
        "schema": "fpp-config-v1",
        "model": {"family": "cir-power", "gamma_ra": 2.0,
                   "Lambda": [0.5], "rho_s": [1.4142135623730951], "rho_f": [0.1]}
    })";
    try {
        load_config_string(cfg);
        FAIL("expected the excluded-case rejection");
    } catch (const ValidationError& e) {
        REQUIRE(std::string(e.what()).find("gamma/(gamma-1)") != std::string::npos);
    }
}

TEST_CASE("inline model overrides the preset", "[harness]") {
    const RunConfig cfg = load_config_string(R"({
        "schema": "fpp-config-v1",
        "model": {"family": "cir-power", "gamma_ra": 3.0, "Lambda": [0.4],
                   "rho_s": [0.2], "rho_f": [0.0], "lambda_dep": "slow"}
    })");
    REQUIRE(cfg.cir_model.has_value());
    const MarketModel m = cfg.build_model();
    REQUIRE(m.v0.value(1.0) == Catch::Approx(std::pow(3.0, 3.0) / (1.0 - 3.0)));
}

TEST_CASE("eval at t=0 reproduces the datum column exactly", "[harness]") {
    RunConfig cfg = config_from_preset("cir-power");
    cfg.out_dir = tmp_dir("fpp_eval_t0");
    cfg.grid_t = {0.0, 1.0};
    cfg.grid_y2 = {1.0};
    const HarnessContext ctx = make_context(cfg);
    const CsvTable t = read_csv(run_eval(ctx));
    const int it = t.column_index("t"), ix = t.column_index("x"), iv = t.column_index("v0");
    std::size_t checked = 0;
    for (const auto& r : t.rows) {
        if (r[it] != 0.0) continue;
        REQUIRE(r[iv] == ctx.model->v0.value(r[ix]));
        ++checked;
    }
    REQUIRE(checked == cfg.grid_x.size() * cfg.grid_y1.size());
}

TEST_CASE("converge artifacts carry the fitted slopes", "[harness]") {
    RunConfig cfg = config_from_preset("convergence-slow");
    cfg.out_dir = tmp_dir("fpp_conv");
    const HarnessContext ctx = make_context(cfg);
    const std::string path = run_converge(ctx);
    const std::string text = slurp(path);
    REQUIRE(text.find("slope_two_term") != std::string::npos);
    const CsvTable t = read_csv(path);
    REQUIRE(t.rows.size() == cfg.grid_delta.size());
    // slope within the contract window
    const auto pos = text.find("slope_two_term = ");
    const double slope = std::strtod(text.c_str() + pos + 17, nullptr);
    REQUIRE(slope > 0.85);
    REQUIRE(slope < 1.15);
}

TEST_CASE("identical config and seed give byte-identical artifacts", "[harness]") {
    RunConfig cfg = load_config_string(kSmallSim);
    cfg.out_dir = tmp_dir("fpp_repro_a");
    cfg.threads = 1;
    const HarnessContext c1 = make_context(cfg);
    const std::string a = slurp(run_simulate(c1));

    cfg.out_dir = tmp_dir("fpp_repro_b");
    cfg.threads = 2;
    const HarnessContext c2 = make_context(cfg);
    const std::string b = slurp(run_simulate(c2));
    REQUIRE(a == b);

    cfg.out_dir = tmp_dir("fpp_repro_c");
    cfg.seed = 99;
    const HarnessContext c3 = make_context(cfg);
    const std::string c = slurp(run_simulate(c3));
    REQUIRE(a != c);

    // eval is deterministic too
    RunConfig ecfg = config_from_preset("cir-power");
    ecfg.grid_t = {0.5};
    ecfg.grid_y2 = {1.0};
    ecfg.out_dir = tmp_dir("fpp_repro_e1");
    const std::string e1 = slurp(run_eval(make_context(ecfg)));
    ecfg.out_dir = tmp_dir("fpp_repro_e2");
    const std::string e2 = slurp(run_eval(make_context(ecfg)));
    REQUIRE(e1 == e2);
}

TEST_CASE("config hash tracks the configuration", "[harness]") {
    const RunConfig a = load_config_string(kSmallSim);
    RunConfig b = load_config_string(kSmallSim);
    REQUIRE(a.hash() == b.hash());
    const RunConfig c = load_config_string(R"({"schema":"fpp-config-v1","seed":7})");
    REQUIRE(a.hash() != c.hash());
}

TEST_CASE("drift scan emits bounded ratios and a clean exact audit", "[harness]") {
    RunConfig cfg = config_from_preset("cir-power");
    cfg.out_dir = tmp_dir("fpp_drift");
    cfg.grid_t = {0.5, 1.0};
    cfg.grid_x = {1.0, 2.5};
    cfg.grid_y1 = {0.8, 1.3};
    cfg.drift_pairs = {{1e-2, 1e-2}, {1e-3, 1e-3}, {1e-4, 1e-4}};
    const HarnessContext ctx = make_context(cfg);
    const CsvTable t = read_csv(run_drift(ctx));
    const int ie = t.column_index("sup_theta_exact_rel");
    const int ir = t.column_index("ratio");
    double rmin = 1e300, rmax = 0.0;
    for (const auto& r : t.rows) {
        REQUIRE(r[ie] <= 1e-6);
        rmin = std::min(rmin, r[ir]);
        rmax = std::max(rmax, r[ir]);
    }
    REQUIRE(rmax / rmin < 3.0);
}

TEST_CASE("plot renders an svg from a study csv", "[harness]") {
    RunConfig cfg = config_from_preset("convergence-slow");
    cfg.out_dir = tmp_dir("fpp_plot");
    const HarnessContext ctx = make_context(cfg);
    const std::string csv = run_converge(ctx);
    const std::string svg = run_plot(cfg, csv, "delta", "err_two_term", true);
    const std::string text = slurp(svg);
    REQUIRE(text.find("<svg") != std::string::npos);
    REQUIRE(text.find("polyline") != std::string::npos);
}

TEST_CASE("unknown preset is a validation error", "[harness]") {
    REQUIRE_THROWS_AS(config_from_preset("no-such-preset").build_model(), ValidationError);
}
