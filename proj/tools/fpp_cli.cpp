// Command-line front end: loads a config or preset, dispatches a subcommand,
// writes CSV/SVG artifacts.  Exit codes: 0 success, 2 validation error,
// 3 numeric/range/regime error.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "fpp/harness.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    long long seed = -1;
    int threads = -1;
    double tol_quad = 0.0;
    bool json_output = false;
    bool csv_output = false;
};

fpp::RunConfig resolve_config(const CommonArgs& a) {
    fpp::RunConfig cfg;
    if (!a.config_path.empty()) {
        cfg = fpp::load_config(a.config_path);
        if (!a.preset.empty()) throw fpp::ValidationError("--config and --preset are exclusive");
    } else {
        cfg = fpp::config_from_preset(a.preset.empty() ? "cir-power" : a.preset);
    }
    if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
    if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
    if (a.threads >= 0) cfg.threads = a.threads;
    if (a.tol_quad > 0.0) cfg.tol_quad = a.tol_quad;
    if (a.json_output) cfg.output = "json";
    if (a.csv_output) cfg.output = "csv";
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "JSON configuration file");
    cmd->add_option("--preset", a.preset,
                    "named preset (cir-power, cir-power-fast, cir-power-multi, multiscale-slow, "
                    "convergence-slow, ou-linear)");
    cmd->add_option("--out-dir", a.out_dir, "output directory");
    cmd->add_option("--seed", a.seed, "override the run seed");
    cmd->add_option("--threads", a.threads, "worker threads (0 = hardware)");
    cmd->add_option("--tol-quad", a.tol_quad, "quadrature tolerance override");
    cmd->add_flag("--json", a.json_output, "emit JSON instead of CSV where supported");
    cmd->add_flag("--csv", a.csv_output, "emit CSV (default)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forward performance value surfaces, corrections and audits"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string plot_in, plot_x = "delta", plot_y = "err_two_term";
    bool plot_loglog = true;
    std::string converge_mode;

    CLI::App* c_eval = app.add_subcommand("eval", "evaluate the value surface on a grid");
    CLI::App* c_conv = app.add_subcommand("converge", "error-rate studies vs the benchmark");
    CLI::App* c_port = app.add_subcommand("portfolio", "first-order feedback portfolio");
    CLI::App* c_drift = app.add_subcommand("drift", "generator drift scan");
    CLI::App* c_sim = app.add_subcommand("simulate", "Monte Carlo martingale audit");
    CLI::App* c_poisson = app.add_subcommand("poisson", "fast-factor corrector table");
    CLI::App* c_plot = app.add_subcommand("plot", "SVG line chart from a CSV");
    for (CLI::App* c : {c_eval, c_conv, c_port, c_drift, c_sim, c_poisson, c_plot})
        add_common(c, args);
    c_conv->add_option("--mode", converge_mode, "slow, fast or multi");
    c_plot->add_option("--in", plot_in, "input csv")->required();
    c_plot->add_option("--x", plot_x, "x column");
    c_plot->add_option("--y", plot_y, "y column");
    c_plot->add_flag("--loglog,!--linear", plot_loglog, "log-log axes");

    CLI11_PARSE(app, argc, argv);

    try {
        fpp::RunConfig cfg = resolve_config(args);
        if (!converge_mode.empty()) cfg.converge_mode = converge_mode;
        std::string artifact;
        if (app.got_subcommand(c_plot)) {
            artifact = fpp::run_plot(cfg, plot_in, plot_x, plot_y, plot_loglog);
        } else {
            const fpp::HarnessContext ctx = fpp::make_context(cfg);
            if (app.got_subcommand(c_eval)) artifact = fpp::run_eval(ctx);
            if (app.got_subcommand(c_conv)) artifact = fpp::run_converge(ctx);
            if (app.got_subcommand(c_port)) artifact = fpp::run_portfolio(ctx);
            if (app.got_subcommand(c_drift)) artifact = fpp::run_drift(ctx);
            if (app.got_subcommand(c_sim)) artifact = fpp::run_simulate(ctx);
            if (app.got_subcommand(c_poisson)) artifact = fpp::run_poisson(ctx);
        }
        std::cout << "wrote " << artifact << "\n";
        return 0;
    } catch (const fpp::ValidationError& e) {
        std::cerr << "{\"error\":\"validation\",\"what\":\"" << e.what() << "\"}\n";
        return 2;
    } catch (const fpp::InvalidModelError& e) {
        std::cerr << "{\"error\":\"validation\",\"what\":\"" << e.what() << "\"}\n";
        return 2;
    } catch (const fpp::Error& e) {
        std::cerr << "{\"error\":\"numeric\",\"what\":\"" << e.what() << "\"}\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":\"internal\",\"what\":\"" << e.what() << "\"}\n";
        return 1;
    }
}
