// Command-line front end: load a scenario file and run one of the pipeline
// subcommands (simulate, solve-single, solve-mfg, verify, oracle). Exit codes:
// 0 pass, 1 check failure, 2 configuration error, 3 internal error.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "jumpmfg/run.hpp"

namespace {

struct Cli {
    std::string scenario;
    jumpmfg::RunOptions opts;
};

void add_common(CLI::App* cmd, Cli& cli) {
    cmd->add_option("--scenario", cli.scenario, "scenario file (TOML)")->required();
    cmd->add_option("--seed", cli.opts.seed, "master random seed");
    cmd->add_option("--paths", cli.opts.paths, "Monte Carlo path count override");
    cmd->add_option("--agents", cli.opts.agents, "population size override");
    cmd->add_option("--backend", cli.opts.backend, "solver backend override")
        ->check(CLI::IsMember({"lattice", "lsmc"}));
    cmd->add_option("--out", cli.opts.out_dir, "output directory");
    cmd->add_option("--threads", cli.opts.threads, "worker thread count");
}

}  // namespace

int main(int argc, char** argv) {
    using jumpmfg::ExitCode;
    CLI::App app{"mean-field portfolio game laboratory: jump-BSDE solvers, measure "
                 "change, projection fixed point and verification suites"};
    app.require_subcommand(1);

    Cli cli;
    auto* simulate = app.add_subcommand("simulate", "simulate the driving noises only");
    auto* solve_single =
        app.add_subcommand("solve-single", "solve the single-agent hedging problem");
    auto* solve_mfg = app.add_subcommand("solve-mfg", "solve the mean-field equilibrium");
    auto* verify = app.add_subcommand("verify", "run the scenario's invariant suites");
    auto* oracle = app.add_subcommand("oracle", "compare against the brute-force program");
    for (auto* cmd : {simulate, solve_single, solve_mfg, verify, oracle}) add_common(cmd, cli);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : static_cast<int>(ExitCode::config_error);
    }

    try {
        if (!std::filesystem::exists(cli.scenario)) {
            std::cerr << "error: scenario file not found: " << cli.scenario << "\n";
            return static_cast<int>(ExitCode::config_error);
        }
        const auto sc = jumpmfg::load_scenario(cli.scenario);
        if (simulate->parsed()) return jumpmfg::run_simulate(sc, cli.opts);
        if (solve_single->parsed()) return jumpmfg::run_solve_single(sc, cli.opts);
        if (solve_mfg->parsed()) return jumpmfg::run_solve_mfg(sc, cli.opts);
        if (verify->parsed()) return jumpmfg::run_verify(sc, cli.opts);
        if (oracle->parsed()) return jumpmfg::run_oracle(sc, cli.opts);
        return static_cast<int>(ExitCode::config_error);
    } catch (const jumpmfg::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::config_error);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::internal_error);
    }
}
