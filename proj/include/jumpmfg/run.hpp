#pragma once

// Orchestration of one experiment: run a subcommand against a loaded scenario,
// write deterministic CSV tables, a JSON run manifest and a plain-text
// summary, and return the process exit code (0 pass, 1 check failure,
// 2 configuration error, 3 internal error).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jumpmfg/equilibrium.hpp"
#include "jumpmfg/measure.hpp"
#include "jumpmfg/scenario.hpp"

namespace jumpmfg {

inline constexpr const char* library_version = "1.0.0";

struct RunOptions {
    uint64_t seed = 1;
    std::size_t paths = 0;   // 0 = scenario default
    std::size_t agents = 0;  // 0 = scenario default
    std::string backend;     // empty = scenario default
    std::string out_dir = "out";
    std::size_t threads = 1;
};

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace runio {

// Fixed double formatting so outputs are byte-identical across runs.
inline std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

inline std::ofstream open_out(const std::filesystem::path& dir, const std::string& file) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / file, std::ios::trunc);
    if (!out) throw ConfigError("cannot write output file '" + (dir / file).string() + "'");
    return out;
}

inline nlohmann::json law_json(const TypeLaw& law) {
    nlohmann::json j;
    switch (law.kind) {
        case TypeLaw::Kind::constant:
            j["law"] = "constant";
            j["value"] = law.value;
            break;
        case TypeLaw::Kind::two_point:
            j["law"] = "two_point";
            j["lo"] = law.lo;
            j["hi"] = law.hi;
            j["p_hi"] = law.p_hi;
            break;
        case TypeLaw::Kind::normal:
        case TypeLaw::Kind::lognormal:
            j["law"] = law.kind == TypeLaw::Kind::normal ? "normal" : "lognormal";
            j["mu"] = law.mu;
            j["sd"] = law.sd;
            j["clip_min"] = law.clip_min;
            j["clip_max"] = law.clip_max;
            break;
    }
    return j;
}

inline nlohmann::json scenario_json(const Scenario& sc) {
    nlohmann::json j;
    j["name"] = sc.name;
    j["source"] = sc.source_path;
    j["grid"] = {{"horizon", sc.grid.horizon}, {"steps", sc.grid.n_steps}};
    j["market"] = {{"d", sc.market.d},
                   {"phi", sc.phi_scalar},
                   {"phi_bound", sc.market.phi_bound},
                   {"sigma", sc.market.sigma(0, 0)},
                   {"s0", sc.market.s0[0]}};
    nlohmann::json atoms = nlohmann::json::array();
    for (const auto& a : sc.jumps.atoms)
        atoms.push_back({{"mark", a.mark},
                         {"weight", a.weight},
                         {"split", a.split == NoiseSplit::common ? "common" : "idiosyncratic"}});
    j["jumps"] = {{"atoms", atoms},
                  {"c_nu", sc.jumps.c_nu},
                  {"zeta_kind", static_cast<int>(sc.jumps.zeta.kind)},
                  {"zeta_value", sc.jumps.zeta.value},
                  {"zeta_times", sc.jumps.zeta.times},
                  {"zeta_values", sc.jumps.zeta.values},
                  {"zeta_scale", sc.jumps.zeta.scale}};
    j["population"] = {{"agents", sc.pop.n_agents},
                       {"x0", law_json(sc.pop.x0_law)},
                       {"alpha", law_json(sc.pop.alpha_law)},
                       {"rho", law_json(sc.pop.rho_law)}};
    j["claim"] = {{"kind", static_cast<int>(sc.claim.kind)},
                  {"source", static_cast<int>(sc.claim.source)},
                  {"k1", sc.claim.k1},
                  {"k2", sc.claim.k2},
                  {"unit", sc.claim.unit},
                  {"count_cap", sc.claim.count_cap}};
    j["solver"] = {{"backend",
                    sc.solver.backend == SolverSpec::Backend::lattice ? "lattice" : "lsmc"},
                   {"paths", sc.solver.n_paths},
                   {"degree", sc.solver.degree},
                   {"theta_lo", sc.solver.theta_lo},
                   {"theta_hi", sc.solver.theta_hi},
                   {"theta_step", sc.solver.theta_step},
                   {"u_max", sc.solver.u_max}};
    j["verify"] = {{"suites", sc.verify.suites},
                   {"worlds", sc.verify.worlds},
                   {"tilt_u", sc.verify.tilt_u}};
    return j;
}

inline void write_manifest(const Scenario& sc, const RunOptions& opts,
                           const std::string& subcommand, double wall_ms) {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["seed"] = opts.seed;
    j["paths"] = opts.paths;
    j["agents"] = opts.agents;
    j["backend_override"] = opts.backend;
    j["threads"] = opts.threads;
    j["scenario"] = scenario_json(sc);
    j["versions"] = {{"library", library_version}, {"compiler", __VERSION__}};
    j["wall_time_ms"] = wall_ms;
    auto out = open_out(opts.out_dir, "manifest.json");
    out << j.dump(2) << "\n";
}

}  // namespace runio

namespace detail_run {

inline std::size_t effective_paths(const Scenario& sc, const RunOptions& o) {
    return o.paths != 0 ? o.paths : sc.solver.n_paths;
}
inline std::size_t effective_agents(const Scenario& sc, const RunOptions& o) {
    return o.agents != 0 ? o.agents : sc.pop.n_agents;
}
inline SolverSpec::Backend effective_backend(const Scenario& sc, const RunOptions& o) {
    if (o.backend.empty()) return sc.solver.backend;
    if (o.backend == "lattice") return SolverSpec::Backend::lattice;
    if (o.backend == "lsmc") return SolverSpec::Backend::lsmc;
    throw ConfigError("unknown backend '" + o.backend + "' (lattice, lsmc)");
}

inline EquilibriumInput equilibrium_input(const Scenario& sc) {
    EquilibriumInput in;
    in.grid = sc.grid;
    in.phi = sc.phi_fn();
    in.jumps = sc.jumps;
    in.pop = sc.pop;
    in.claim = sc.claim;
    in.u_max = sc.solver.u_max;
    return in;
}

inline bool reachable(const LatticeState& st, std::size_t node) {
    int total = 0;
    for (int c : st.counts) total += c;
    return total <= static_cast<int>(node);
}

inline std::string counts_str(const std::vector<int>& counts) {
    std::string s;
    for (std::size_t k = 0; k < counts.size(); ++k)
        s += (k ? ";" : "") + std::to_string(counts[k]);
    return s.empty() ? "-" : s;
}

}  // namespace detail_run

// ---- subcommand: simulate ----

inline int run_simulate(const Scenario& sc, const RunOptions& opts) {
    using runio::fmt;
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n_paths = std::min<std::size_t>(detail_run::effective_paths(sc, opts), 10000);
    const std::size_t n_agents = detail_run::effective_agents(sc, opts);
    const auto bundles =
        simulate_bundles(sc.grid, sc.jumps, 1, n_agents, n_paths, opts.seed, opts.threads);

    auto brownian = runio::open_out(opts.out_dir, "brownian.csv");
    brownian << "path,cell,dw\n";
    for (std::size_t p = 0; p < n_paths; ++p)
        for (std::size_t i = 0; i < sc.grid.n_steps; ++i)
            brownian << p << "," << i << "," << fmt(bundles[p].dW(i)) << "\n";

    auto jumps = runio::open_out(opts.out_dir, "jumps.csv");
    jumps << "path,owner,time,cell,atom\n";
    for (std::size_t p = 0; p < n_paths; ++p) {
        for (const auto& e : bundles[p].common_jumps)
            jumps << p << ",common," << fmt(e.time) << "," << e.cell << "," << e.atom << "\n";
        for (std::size_t a = 0; a < bundles[p].idio_jumps.size(); ++a)
            for (const auto& e : bundles[p].idio_jumps[a])
                jumps << p << "," << a << "," << fmt(e.time) << "," << e.cell << "," << e.atom
                      << "\n";
    }

    std::size_t n_events = 0;
    for (const auto& b : bundles) {
        n_events += b.common_jumps.size();
        for (const auto& v : b.idio_jumps) n_events += v.size();
    }
    auto summary = runio::open_out(opts.out_dir, "summary.txt");
    const std::string line = "simulate: " + std::to_string(n_paths) + " paths, " +
                             std::to_string(n_agents) + " agents, " + std::to_string(n_events) +
                             " jump events\n";
    summary << line;
    std::cout << line;
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    runio::write_manifest(sc, opts, "simulate", ms);
    return static_cast<int>(ExitCode::ok);
}

// ---- subcommand: solve-single ----

inline int run_solve_single(const Scenario& sc, const RunOptions& opts) {
    using runio::fmt;
    const auto t0 = std::chrono::steady_clock::now();
    const auto backend = detail_run::effective_backend(sc, opts);
    auto summary = runio::open_out(opts.out_dir, "summary.txt");

    if (backend == SolverSpec::Backend::lattice) {
        const LatticeEquilibrium eq(detail_run::equilibrium_input(sc));
        const auto& model = eq.model();
        auto csv = runio::open_out(opts.out_dir, "bsde.csv");
        csv << "type,node,b_idx,counts,Y,Z";
        for (std::size_t k = 0; k < model.n_atoms(); ++k) csv << ",U" << k;
        csv << "\n";
        for (std::size_t t = 0; t < eq.types().size(); ++t) {
            const auto& sol = eq.reference(t);
            for (std::size_t i = 0; i <= model.grid().n_steps; ++i)
                for (std::size_t s = 0; s < model.node_states(i); ++s) {
                    const auto st = model.decode(s);
                    if (!detail_run::reachable(st, i)) continue;
                    csv << t << "," << i << "," << st.b_idx << ","
                        << detail_run::counts_str(st.counts) << "," << fmt(sol.Y[i][s]) << ","
                        << fmt(i < model.grid().n_steps ? sol.Z[i][s] : 0.0);
                    for (std::size_t k = 0; k < model.n_atoms(); ++k)
                        csv << ","
                            << fmt(i < model.grid().n_steps ? sol.U[i][s * model.n_atoms() + k]
                                                            : 0.0);
                    csv << "\n";
                }
            const std::string line =
                "type " + std::to_string(t) + " (alpha=" + fmt(eq.types()[t].alpha) +
                ", rho=" + fmt(eq.types()[t].rho) + "): Y0=" +
                fmt(lattice_y0(model, sol)) + " max|U|=" + fmt(sol.diag.max_abs_u) + "\n";
            summary << line;
            std::cout << line;
        }
    } else {
        if (sc.claim.kind != ClaimSpec::Kind::zero)
            throw ConfigError("regression backend supports claim-free scenarios only; "
                              "use the lattice backend for jump claims");
        const std::size_t n_paths = detail_run::effective_paths(sc, opts);
        const std::size_t n_agents = detail_run::effective_agents(sc, opts);
        PopulationSpec pop = sc.pop;
        pop.n_agents = n_agents;
        const auto agents = sample_agents(pop, opts.seed);
        JumpSpec no_jumps;
        const auto bundles =
            simulate_bundles(sc.grid, no_jumps, 1, n_agents, n_paths, opts.seed, opts.threads);
        std::vector<GeneratorSpec> gens(n_agents);
        LsmcConfig cfg;
        cfg.degree = sc.solver.degree;
        cfg.agent_features.resize(n_agents);
        const double phi = sc.phi_scalar;
        for (std::size_t a = 0; a < n_agents; ++a) {
            gens[a].kind = GeneratorKind::single_agent;
            gens[a].alpha = agents[a].alpha;
            gens[a].phi = [phi](double) { return phi; };
            cfg.agent_features[a] = {1.0 / agents[a].alpha};
        }
        const auto sol = solve_lsmc(bundles, no_jumps, gens,
                                    [](std::size_t, std::size_t) { return 0.0; }, cfg);
        auto csv = runio::open_out(opts.out_dir, "bsde.csv");
        csv << "agent,alpha,y0_mean\n";
        for (std::size_t a = 0; a < n_agents; ++a) {
            double acc = 0.0;
            for (std::size_t p = 0; p < n_paths; ++p) acc += sol.y0_at(p, a);
            csv << a << "," << fmt(agents[a].alpha) << ","
                << fmt(acc / static_cast<double>(n_paths)) << "\n";
        }
        const std::string line =
            "regression solve: " + std::to_string(n_paths) + " paths, residual " +
            fmt(sol.diag.regression_residual) + "\n";
        summary << line;
        std::cout << line;
    }
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    runio::write_manifest(sc, opts, "solve-single", ms);
    return static_cast<int>(ExitCode::ok);
}

// ---- subcommand: solve-mfg ----

inline int run_solve_mfg(const Scenario& sc, const RunOptions& opts) {
    using runio::fmt;
    const auto t0 = std::chrono::steady_clock::now();
    const auto backend = detail_run::effective_backend(sc, opts);
    auto summary = runio::open_out(opts.out_dir, "summary.txt");

    if (backend == SolverSpec::Backend::lattice) {
        const LatticeEquilibrium eq(detail_run::equilibrium_input(sc));
        const auto& model = eq.model();
        auto csv = runio::open_out(opts.out_dir, "strategies.csv");
        csv << "type,cell,b_idx,counts,theta_b,z,theta_tilde\n";
        for (std::size_t t = 0; t < eq.types().size(); ++t)
            for (std::size_t i = 0; i < model.grid().n_steps; ++i)
                for (std::size_t s = 0; s < model.node_states(i); ++s) {
                    const auto st = model.decode(s);
                    if (!detail_run::reachable(st, i)) continue;
                    csv << t << "," << i << "," << st.b_idx << ","
                        << detail_run::counts_str(st.counts) << "," << fmt(eq.theta_b(t, i, st))
                        << "," << fmt(eq.z_reconstructed(t, i, st)) << ","
                        << fmt(eq.theta_tilde(t, i, st)) << "\n";
                }

        const std::size_t n_agents = detail_run::effective_agents(sc, opts);
        const std::size_t n_worlds = sc.verify.worlds;
        const auto diag = run_mfg_diagnostics(eq, n_worlds, n_agents, opts.seed, opts.threads);
        auto dcsv = runio::open_out(opts.out_dir, "diagnostics.csv");
        dcsv << "metric,value,stderror\n";
        dcsv << "reconstruction_residual," << fmt(eq.reconstruction_residual()) << ",0\n";
        dcsv << "fixed_point_exponent," << fmt(diag.fixed_point_exponent) << ",0\n";
        dcsv << "f_residual," << fmt(diag.f_residual.mean) << ","
             << fmt(diag.f_residual.stderror) << "\n";
        dcsv << "utility_mc," << fmt(diag.utility_base.mean) << ","
             << fmt(diag.utility_base.stderror) << "\n";
        dcsv << "utility_formula," << fmt(diag.utility_formula) << ",0\n";
        for (const auto& d : diag.deviations)
            dcsv << "deviation_" << d.direction << "_eps" << fmt(d.eps) << "," << fmt(d.gap)
                 << "," << fmt(d.stderror) << "\n";
        const auto root = LatticeState{0, std::vector<int>(model.n_atoms(), 0)};
        for (std::size_t t = 0; t < eq.types().size(); ++t) {
            const std::string line =
                "type " + std::to_string(t) + ": theta_tilde(0)=" +
                fmt(eq.theta_tilde(t, 0, root)) + " value(x0=E[x0])=" +
                fmt(eq.value_function_at(t, eq.e_x0())) + "\n";
            summary << line;
            std::cout << line;
        }
    } else {
        const std::size_t n_paths = detail_run::effective_paths(sc, opts);
        const std::size_t n_agents = detail_run::effective_agents(sc, opts);
        const auto eq = solve_mfg_lsmc(sc.grid, sc.phi_scalar, sc.pop, sc.claim, n_agents,
                                       n_paths, opts.seed, opts.threads);
        auto csv = runio::open_out(opts.out_dir, "strategies.csv");
        csv << "agent,alpha,rho,theta_tilde,stderror,y0\n";
        for (std::size_t a = 0; a < eq.agents.size(); ++a)
            csv << a << "," << fmt(eq.agents[a].alpha) << "," << fmt(eq.agents[a].rho) << ","
                << fmt(eq.theta_tilde_by_agent[a].mean) << ","
                << fmt(eq.theta_tilde_by_agent[a].stderror) << "," << fmt(eq.y0_by_agent[a])
                << "\n";
        double mean_theta = 0.0;
        for (const auto& st : eq.theta_tilde_by_agent) mean_theta += st.mean;
        mean_theta /= static_cast<double>(eq.agents.size());
        const std::string line = "regression equilibrium: mean theta_tilde " + fmt(mean_theta) +
                                 " over " + std::to_string(n_paths) + " paths\n";
        summary << line;
        std::cout << line;
    }
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    runio::write_manifest(sc, opts, "solve-mfg", ms);
    return static_cast<int>(ExitCode::ok);
}

// ---- subcommand: oracle ----

inline std::vector<CheckResult> suite_oracle(const Scenario& sc, const RunOptions& opts,
                                             std::vector<std::string>* csv_rows = nullptr) {
    using runio::fmt;
    std::vector<CheckResult> checks;
    const LatticeEquilibrium eq(detail_run::equilibrium_input(sc));
    const auto& model = eq.model();
    const ThetaGrid tg{sc.solver.theta_lo, sc.solver.theta_hi, sc.solver.theta_step};
    const double alpha = eq.types()[0].alpha;
    const auto terminal = [&](const LatticeState& st) { return eq.reference_terminal(0, st); };
    const auto res = brute_force_single_agent(model, alpha, sc.phi_fn(), terminal, tg);

    const double y0_lattice = lattice_y0(model, eq.reference(0));
    const double y0_gap = std::abs(res.y0 - y0_lattice);
    const double y0_tol = std::max(tg.step, 1e-8);
    checks.push_back({"oracle: certainty equivalent matches the backward solver",
                      y0_gap <= y0_tol,
                      "dp " + fmt(res.y0) + " vs bsde " + fmt(y0_lattice) + " (tol " +
                          fmt(y0_tol) + ")"});

    double max_theta_gap = 0.0;
    for (std::size_t i = 0; i < model.grid().n_steps; ++i)
        for (std::size_t s = 0; s < model.node_states(i); ++s) {
            const auto st = model.decode(s);
            if (!detail_run::reachable(st, i)) continue;
            const double th_dp = res.theta[i][s];
            const double th_bsde = eq.theta_b(0, i, st);
            max_theta_gap = std::max(max_theta_gap, std::abs(th_dp - th_bsde));
            if (csv_rows != nullptr)
                csv_rows->push_back(std::to_string(i) + "," + std::to_string(st.b_idx) + "," +
                                    detail_run::counts_str(st.counts) + "," + fmt(th_dp) + "," +
                                    fmt(th_bsde));
        }
    checks.push_back({"oracle: optimal strategy within one grid step at every node",
                      max_theta_gap <= tg.step + 1e-9,
                      "max gap " + fmt(max_theta_gap) + " vs step " + fmt(tg.step)});
    (void)opts;
    return checks;
}

// ---- verify suites ----

inline std::vector<CheckResult> suite_measure(const Scenario& sc, const RunOptions& opts) {
    using runio::fmt;
    std::vector<CheckResult> checks;
    const std::size_t n_paths = detail_run::effective_paths(sc, opts);
    const double alpha = sc.pop.alpha_law.mean();
    const double u0 = sc.verify.tilt_u;

    const auto bundles =
        simulate_bundles(sc.grid, sc.jumps, 1, 1, n_paths, opts.seed, opts.threads);
    DoleansConfig cfg;
    cfg.alpha = alpha;
    if (sc.jumps.n_atoms() > 0)
        cfg.u = [u0](double, const MarkState&, std::size_t) { return u0; };

    std::vector<double> density(n_paths), counts(n_paths, 0.0);
    bool positive = true;
    parallel_for(
        n_paths,
        [&](std::size_t p) {
            density[p] = doleans_density(bundles[p], 0, &sc.market, sc.jumps, cfg).value();
            double c = static_cast<double>(bundles[p].common_jumps.size());
            if (!bundles[p].idio_jumps.empty())
                c += static_cast<double>(bundles[p].idio_jumps[0].size());
            counts[p] = c;
        },
        opts.threads);
    for (double d : density) positive = positive && d > 0.0;
    checks.push_back({"measure: density positive on every path", positive, ""});

    const auto dm = mean_stat(density);
    checks.push_back({"measure: Monte Carlo density mean is 1 within 4 standard errors",
                      std::abs(dm.mean - 1.0) <= 4.0 * dm.stderror,
                      "mean " + fmt(dm.mean) + " +- " + fmt(dm.stderror)});

    if (sc.jumps.n_atoms() > 0) {
        const auto reweighted = phat_expectation(counts, density);
        const auto tilted_spec = tilt_compensator(
            sc.jumps, alpha, [u0](double, const MarkState&, std::size_t) { return u0; },
            std::abs(u0));
        const auto tilted_bundles =
            simulate_bundles(sc.grid, tilted_spec, 1, 1, n_paths, opts.seed + 1, opts.threads);
        std::vector<double> tilted_counts(n_paths, 0.0);
        for (std::size_t p = 0; p < n_paths; ++p) {
            double c = static_cast<double>(tilted_bundles[p].common_jumps.size());
            if (!tilted_bundles[p].idio_jumps.empty())
                c += static_cast<double>(tilted_bundles[p].idio_jumps[0].size());
            tilted_counts[p] = c;
        }
        const auto direct = mean_stat(tilted_counts);
        const double se = std::sqrt(reweighted.stderror * reweighted.stderror +
                                    direct.stderror * direct.stderror);
        checks.push_back(
            {"measure: reweighting agrees with tilted simulation within 4 standard errors",
             std::abs(reweighted.mean - direct.mean) <= 4.0 * se,
             "reweighted " + fmt(reweighted.mean) + " vs tilted " + fmt(direct.mean) + " +- " +
                 fmt(se)});
    }
    return checks;
}

inline std::vector<CheckResult> suite_projection(const Scenario& sc, const RunOptions& opts) {
    using runio::fmt;
    std::vector<CheckResult> checks;
    const std::size_t n_agents = std::max<std::size_t>(detail_run::effective_agents(sc, opts), 2);
    const std::size_t n_cells = sc.grid.n_steps;
    PopulationSpec pop = sc.pop;
    pop.n_agents = n_agents;
    const auto agents = sample_agents(pop, opts.seed);

    // per-agent test processes u = 1/alpha * (i+1)/n, v = rho (constant in time)
    std::vector<double> u_vals(n_cells * n_agents), v_vals(n_cells * n_agents);
    for (std::size_t i = 0; i < n_cells; ++i)
        for (std::size_t a = 0; a < n_agents; ++a) {
            u_vals[i * n_agents + a] = (1.0 / agents[a].alpha) *
                                       static_cast<double>(i + 1) / static_cast<double>(n_cells);
            v_vals[i * n_agents + a] = agents[a].rho;
        }
    const auto pi_u = project_pi(u_vals, n_cells, n_agents);
    const auto pi_v = project_pi(v_vals, n_cells, n_agents);

    // idempotence: projecting the projected (common) process is the identity
    std::vector<double> common_vals(n_cells * n_agents);
    for (std::size_t i = 0; i < n_cells; ++i)
        for (std::size_t a = 0; a < n_agents; ++a) common_vals[i * n_agents + a] = pi_u[i];
    const auto pi_pi_u = project_pi(common_vals, n_cells, n_agents);
    double idem_gap = 0.0;
    for (std::size_t i = 0; i < n_cells; ++i)
        idem_gap = std::max(idem_gap, std::abs(pi_pi_u[i] - pi_u[i]));
    checks.push_back({"projection: idempotence holds to machine precision", idem_gap <= 1e-13,
                      "max gap " + fmt(idem_gap)});

    std::vector<double> combo(n_cells * n_agents);
    for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = 2.0 * u_vals[i] + 3.0 * v_vals[i];
    const auto pi_combo = project_pi(combo, n_cells, n_agents);
    double lin_gap = 0.0;
    for (std::size_t i = 0; i < n_cells; ++i)
        lin_gap = std::max(lin_gap, std::abs(pi_combo[i] - 2.0 * pi_u[i] - 3.0 * pi_v[i]));
    checks.push_back({"projection: linearity holds to machine precision", lin_gap <= 1e-12,
                      "max gap " + fmt(lin_gap)});

    const double dt = sc.grid.dt();
    double mean_energy = 0.0;
    for (std::size_t a = 0; a < n_agents; ++a) {
        std::vector<double> za(n_cells);
        for (std::size_t i = 0; i < n_cells; ++i) za[i] = u_vals[i * n_agents + a];
        mean_energy += bmo_energy(za, dt);
    }
    mean_energy /= static_cast<double>(n_agents);
    const double pi_energy = bmo_energy(pi_u, dt);
    checks.push_back({"projection: energy of the projection does not exceed the mean energy",
                      pi_energy <= mean_energy + 1e-12,
                      fmt(pi_energy) + " vs " + fmt(mean_energy)});

    // conditional-expectation identity for the wealth integral
    const std::size_t n_worlds = sc.verify.worlds;
    const double sdt = std::sqrt(dt);
    std::vector<double> residual(n_worlds, 0.0);
    const bool has_idio =
        sc.jumps.has_idiosyncratic() && sc.jumps.zeta.kind == ZetaForm::Kind::constant;
    if (has_idio) {
        // integrand = the agent's idiosyncratic jump count; its projection given
        // the common path is (number of common-jump-free cells) * p_idio
        const LatticeModel model(sc.grid, sc.jumps);
        const std::vector<int> zero(model.n_atoms(), 0);
        double p_common = 0.0;
        for (std::size_t k : model.common_atoms()) p_common += model.jump_prob(0, zero, k);
        double p_idio = 0.0;
        for (std::size_t k : model.idio_atoms())
            p_idio += model.jump_prob(0, zero, k) / (1.0 - p_common);
        parallel_for(
            n_worlds,
            [&](std::size_t w) {
                const auto world = sample_lattice_world(model, n_agents, opts.seed, w);
                std::vector<std::vector<int>> idio_count(n_agents,
                                                         std::vector<int>(n_cells + 1, 0));
                for (std::size_t a = 0; a < n_agents; ++a)
                    for (std::size_t i = 0; i < n_cells; ++i)
                        idio_count[a][i + 1] =
                            idio_count[a][i] + (world.idio_jump[a][i] >= 0 ? 1 : 0);
                double free_cells = 0.0, lhs = 0.0, rhs = 0.0;
                for (std::size_t i = 0; i < n_cells; ++i) {
                    const double dwh = static_cast<double>(world.dw_sign[i]) * sdt +
                                       sc.phi_scalar * dt;
                    double avg = 0.0;
                    for (std::size_t a = 0; a < n_agents; ++a)
                        avg += static_cast<double>(idio_count[a][i]);
                    avg /= static_cast<double>(n_agents);
                    lhs += avg * dwh;
                    rhs += free_cells * p_idio * dwh;
                    if (world.common_jump[i] < 0) free_cells += 1.0;
                }
                residual[w] = lhs - rhs;
            },
            opts.threads);
    } else {
        // integrand = 1/alpha per agent; exact projection is E[1/alpha].  The
        // population is redrawn i.i.d. for every world so the gap between the
        // finite-sample average and the population mean is itself mean zero.
        const double e_inv_alpha = sc.pop.alpha_law.mean_inverse();
        const auto brownian = simulate_brownian(sc.grid, 1, n_worlds, opts.seed, opts.threads);
        for (std::size_t w = 0; w < n_worlds; ++w) {
            const auto world_agents =
                sample_agents(pop, opts.seed ^ (0x9e3779b97f4a7c15ULL * (w + 1)));
            double avg_inv = 0.0;
            for (const auto& a : world_agents) avg_inv += 1.0 / a.alpha;
            avg_inv /= static_cast<double>(n_agents);
            double acc = 0.0;
            for (std::size_t i = 0; i < n_cells; ++i)
                acc += brownian.dW(w, i) + sc.phi_scalar * dt;
            residual[w] = (avg_inv - e_inv_alpha) * acc;
        }
    }
    const auto rs = mean_stat(residual);
    checks.push_back(
        {"projection: conditional wealth-integral identity within 4 standard errors",
         std::abs(rs.mean) <= 4.0 * std::max(rs.stderror, 1e-12),
         "residual " + fmt(rs.mean) + " +- " + fmt(rs.stderror)});
    return checks;
}

inline std::vector<CheckResult> suite_identity(const Scenario& sc, const RunOptions& opts) {
    using runio::fmt;
    std::vector<CheckResult> checks;
    const LatticeEquilibrium eq(detail_run::equilibrium_input(sc));
    const auto& model = eq.model();
    const std::size_t n_worlds = std::min<std::size_t>(sc.verify.worlds, 500);
    const std::size_t n_agents = std::min<std::size_t>(detail_run::effective_agents(sc, opts), 3);
    double max_residual = 0.0;
    for (std::size_t t = 0; t < eq.types().size(); ++t) {
        const auto& sol = eq.reference(t);
        const double alpha = eq.types()[t].alpha;
        const auto theta = [&](std::size_t i, const LatticeState& st) {
            return sol.Z[i][model.encode(st.b_idx, st.counts)] +
                   sc.phi_scalar / alpha;
        };
        const auto terminal = [&](const LatticeState& st) {
            return eq.reference_terminal(t, st);
        };
        for (std::size_t w = 0; w < n_worlds; ++w) {
            const auto world = sample_lattice_world(model, n_agents, opts.seed, w);
            for (std::size_t a = 0; a < n_agents; ++a) {
                const auto sides = exponential_identity_sides(model, sol, alpha, sc.phi_fn(),
                                                              theta, terminal, world, a);
                max_residual = std::max(max_residual, sides.residual());
            }
        }
    }
    checks.push_back({"identity: per-path exponential identity residual below 1e-8 at theta*",
                      max_residual < 1e-8, "max residual " + fmt(max_residual)});
    return checks;
}

inline std::vector<CheckResult> suite_equilibrium(const Scenario& sc, const RunOptions& opts) {
    using runio::fmt;
    std::vector<CheckResult> checks;
    const LatticeEquilibrium eq(detail_run::equilibrium_input(sc));
    checks.push_back({"equilibrium: reconstruction round-trip residual below 1e-10",
                      eq.reconstruction_residual() < 1e-10,
                      "residual " + fmt(eq.reconstruction_residual())});

    const std::size_t n_agents = detail_run::effective_agents(sc, opts);
    const auto diag =
        run_mfg_diagnostics(eq, sc.verify.worlds, n_agents, opts.seed, opts.threads);
    checks.push_back({"equilibrium: first-order optimality exponent vanishes",
                      diag.fixed_point_exponent < 1e-12,
                      "exponent " + fmt(diag.fixed_point_exponent)});
    checks.push_back(
        {"equilibrium: mean-field fixed point holds within 4 standard errors",
         std::abs(diag.f_residual.mean) <= 4.0 * std::max(diag.f_residual.stderror, 1e-12),
         "residual " + fmt(diag.f_residual.mean) + " +- " + fmt(diag.f_residual.stderror)});
    checks.push_back(
        {"equilibrium: Monte Carlo utility matches the value formula within 4 standard errors",
         std::abs(diag.utility_base.mean - diag.utility_formula) <=
             4.0 * std::max(diag.utility_base.stderror, 1e-12),
         "mc " + fmt(diag.utility_base.mean) + " vs formula " + fmt(diag.utility_formula)});
    bool no_improvement = true;
    double worst = -1e300;
    for (const auto& d : diag.deviations) {
        no_improvement = no_improvement && d.gap <= 2.0 * d.stderror;
        worst = std::max(worst, d.stderror > 0.0 ? d.gap / d.stderror : d.gap);
    }
    checks.push_back({"equilibrium: no canned deviation improves the objective (2 standard errors)",
                      no_improvement, "worst gap " + fmt(worst) + " standard errors"});
    return checks;
}

inline std::vector<CheckResult> suite_degeneracy(const Scenario& sc, const RunOptions& opts) {
    using runio::fmt;
    (void)opts;
    std::vector<CheckResult> checks;

    // rho = 0 collapses the game to the single-agent problem exactly
    auto in0 = detail_run::equilibrium_input(sc);
    in0.pop.rho_law = TypeLaw::constant(0.0);
    const LatticeEquilibrium eq0(in0);
    const auto& model = eq0.model();
    bool collapse = true;
    for (std::size_t t = 0; t < eq0.types().size() && collapse; ++t)
        for (std::size_t i = 0; i < model.grid().n_steps && collapse; ++i)
            for (std::size_t s = 0; s < model.node_states(i); ++s) {
                const auto st = model.decode(s);
                if (!detail_run::reachable(st, i)) continue;
                if (eq0.theta_tilde(t, i, st) != eq0.theta_b(t, i, st)) {
                    collapse = false;
                    break;
                }
            }
    checks.push_back({"degeneracy: rho = 0 gives theta_tilde = theta_B exactly", collapse, ""});

    // E[rho] = 1 must be rejected with the singularity explanation
    auto in1 = detail_run::equilibrium_input(sc);
    in1.pop.rho_law = TypeLaw::constant(1.0);
    bool rejected = false;
    std::string message;
    try {
        const LatticeEquilibrium eq1(in1);
    } catch (const ConfigError& e) {
        message = e.what();
        rejected = message.find("E[rho]") != std::string::npos ||
                   message.find("1 - E[rho]") != std::string::npos;
    }
    checks.push_back(
        {"degeneracy: E[rho] = 1 rejected at validation citing the excluded mean", rejected,
         message});

    const LatticeEquilibrium eq(detail_run::equilibrium_input(sc));
    checks.push_back({"degeneracy: reconstruction residual vanishes on this scenario",
                      eq.reconstruction_residual() < 1e-10,
                      "residual " + fmt(eq.reconstruction_residual())});
    return checks;
}

inline std::vector<std::string> default_suites(const Scenario& sc) {
    if (!sc.verify.suites.empty()) return sc.verify.suites;
    if (sc.solver.backend == SolverSpec::Backend::lsmc) return {"measure", "projection"};
    return {"measure", "projection", "identity", "equilibrium", "degeneracy"};
}

inline std::vector<CheckResult> run_suite(const std::string& suite, const Scenario& sc,
                                          const RunOptions& opts) {
    if (suite == "measure") return suite_measure(sc, opts);
    if (suite == "projection") return suite_projection(sc, opts);
    if (suite == "identity") return suite_identity(sc, opts);
    if (suite == "equilibrium") return suite_equilibrium(sc, opts);
    if (suite == "degeneracy") return suite_degeneracy(sc, opts);
    if (suite == "oracle") return suite_oracle(sc, opts);
    throw ConfigError("unknown verification suite '" + suite + "'");
}

inline int run_verify(const Scenario& sc, const RunOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<CheckResult> all;
    for (const auto& suite : default_suites(sc))
        for (auto& c : run_suite(suite, sc, opts)) all.push_back(std::move(c));

    auto csv = runio::open_out(opts.out_dir, "verify.csv");
    csv << "check,pass,detail\n";
    auto summary = runio::open_out(opts.out_dir, "summary.txt");
    bool ok = true;
    for (const auto& c : all) {
        ok = ok && c.pass;
        csv << "\"" << c.name << "\"," << (c.pass ? 1 : 0) << ",\"" << c.detail << "\"\n";
        const std::string line =
            std::string(c.pass ? "PASS" : "FAIL") + "  " + c.name +
            (c.detail.empty() ? "" : "  [" + c.detail + "]") + "\n";
        summary << line;
        std::cout << line;
    }
    const std::string tail = ok ? "verify: all checks passed\n" : "verify: checks FAILED\n";
    summary << tail;
    std::cout << tail;
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    runio::write_manifest(sc, opts, "verify", ms);
    return static_cast<int>(ok ? ExitCode::ok : ExitCode::check_failure);
}

inline int run_oracle(const Scenario& sc, const RunOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> rows;
    const auto checks = suite_oracle(sc, opts, &rows);
    auto csv = runio::open_out(opts.out_dir, "oracle.csv");
    csv << "node,b_idx,counts,theta_dp,theta_bsde\n";
    for (const auto& r : rows) csv << r << "\n";
    auto summary = runio::open_out(opts.out_dir, "summary.txt");
    bool ok = true;
    for (const auto& c : checks) {
        ok = ok && c.pass;
        const std::string line = std::string(c.pass ? "PASS" : "FAIL") + "  " + c.name +
                                 (c.detail.empty() ? "" : "  [" + c.detail + "]") + "\n";
        summary << line;
        std::cout << line;
    }
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    runio::write_manifest(sc, opts, "oracle", ms);
    return static_cast<int>(ok ? ExitCode::ok : ExitCode::check_failure);
}

}  // namespace jumpmfg
