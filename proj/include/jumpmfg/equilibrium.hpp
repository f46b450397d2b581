#pragma once

// End-to-end equilibrium pipeline: solve the reference single-agent JBSDE per
// agent type, tilt the compensator, solve the auxiliary JBSDE (whose constant
// terminal makes it trivial), and reconstruct the equilibrium strategy through
// the projection fixed point
//   Z = Z~ + rho (Pi(Z~) + E[rho] Pi(theta^B)) / (1 - E[rho]) + rho Pi(theta^B),
//   theta~ = Z + theta^B.
// On the lattice the projection is the exact conditional expectation over the
// idiosyncratic counts given the common state.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "jumpmfg/claims.hpp"
#include "jumpmfg/jbsde.hpp"
#include "jumpmfg/lattice.hpp"
#include "jumpmfg/lsmc.hpp"
#include "jumpmfg/measure.hpp"
#include "jumpmfg/oracle.hpp"
#include "jumpmfg/projection.hpp"
#include "jumpmfg/util.hpp"

namespace jumpmfg {

struct AgentTypeSlot {
    double alpha = 1.0;
    double rho = 0.0;
    double weight = 1.0;  // exact probability under the type law
};

// Discrete (alpha, rho) product law; the lattice backend needs closed type
// enumeration so the projection stays exact.
inline std::vector<AgentTypeSlot> enumerate_types(const PopulationSpec& pop) {
    const auto levels = [](const TypeLaw& law, const char* what) {
        std::vector<std::pair<double, double>> out;
        if (law.kind == TypeLaw::Kind::constant)
            out.emplace_back(law.value, 1.0);
        else if (law.kind == TypeLaw::Kind::two_point) {
            if (law.p_hi < 1.0) out.emplace_back(law.lo, 1.0 - law.p_hi);
            if (law.p_hi > 0.0) out.emplace_back(law.hi, law.p_hi);
        } else {
            throw ConfigError(std::string("lattice equilibrium: ") + what +
                              " law must be constant or two-point");
        }
        return out;
    };
    std::vector<AgentTypeSlot> types;
    for (const auto& [a, wa] : levels(pop.alpha_law, "alpha"))
        for (const auto& [r, wr] : levels(pop.rho_law, "rho"))
            types.push_back({a, r, wa * wr});
    return types;
}

struct EquilibriumInput {
    TimeGrid grid{1.0, 1, {0.0, 1.0}};
    std::function<double(double)> phi;  // scalar market price of risk
    JumpSpec jumps;
    PopulationSpec pop;
    ClaimSpec claim;
    double u_max = 0.0;  // generator truncation override (0 = default)

    double phi_at(double t) const { return phi ? phi(t) : 0.0; }
};

class LatticeEquilibrium {
public:
    explicit LatticeEquilibrium(const EquilibriumInput& in)
        : input_(in), model_(in.grid, in.jumps) {
        in.pop.validate();
        in.claim.validate();
        types_ = enumerate_types(in.pop);
        e_rho_ = in.pop.rho_law.mean();
        e_x0_ = in.pop.x0_law.mean();
        if (std::abs(1.0 - e_rho_) < 1e-12)
            throw ConfigError("equilibrium: E[rho] = 1 makes the projection fixed point "
                              "singular; the model requires E[rho] != 1");
        build_terminal_projection();
        solve_reference();
        solve_auxiliary();
        build_projection_tables();
        compute_reconstruction_residual();
    }

    const EquilibriumInput& input() const { return input_; }
    const LatticeModel& model() const { return model_; }
    const std::vector<AgentTypeSlot>& types() const { return types_; }
    const LatticeSolution& reference(std::size_t type) const { return ref_[type]; }
    const LatticeSolution& auxiliary(std::size_t type) const { return aux_[type]; }
    double e_rho() const { return e_rho_; }
    double e_x0() const { return e_x0_; }
    double reconstruction_residual() const { return recon_residual_; }

    // E[B | common terminal state]; idiosyncratic counts in `state` are ignored.
    double claim_common_expectation(const LatticeState& state) const {
        return e_b_common_[common_key(model_.grid().n_steps, state)];
    }

    double claim_value(const LatticeState& state) const {
        return input_.claim.evaluate(state.counts, model_.spec());
    }

    // terminal condition of the reference JBSDE for one type
    double reference_terminal(std::size_t type, const LatticeState& state) const {
        return claim_value(state) - types_[type].rho * claim_common_expectation(state);
    }

    double theta_b(std::size_t type, std::size_t cell, const LatticeState& state) const {
        const std::size_t s = model_.encode(state.b_idx, state.counts);
        return ref_[type].Z[cell][s] +
               input_.phi_at(model_.grid().nodes[cell]) / types_[type].alpha;
    }

    double pi_theta_b(std::size_t cell, const LatticeState& state) const {
        return pi_theta_b_[cell][common_key(cell, state)];
    }

    // Pi(theta~) = Pi(theta^B) / (1 - E[rho])
    double pi_theta_tilde(std::size_t cell, const LatticeState& state) const {
        return pi_theta_b(cell, state) / (1.0 - e_rho_);
    }

    double z_reconstructed(std::size_t type, std::size_t cell, const LatticeState& state) const {
        return types_[type].rho * pi_theta_b(cell, state) / (1.0 - e_rho_);
    }

    double theta_tilde(std::size_t type, std::size_t cell, const LatticeState& state) const {
        return z_reconstructed(type, cell, state) + theta_b(type, cell, state);
    }

    // value of the equilibrium objective for an agent of this type starting at x
    double value_function_at(std::size_t type, double x) const {
        const double y0 =
            lattice_y0(model_, ref_[type]) + types_[type].rho * e_x0_;
        return -std::exp(-types_[type].alpha * (x - y0));
    }

private:
    std::size_t common_key(std::size_t /*cell*/, const LatticeState& state) const {
        auto counts = state.counts;
        for (std::size_t k : model_.idio_atoms()) counts[k] = 0;
        return model_.encode(state.b_idx, counts);
    }

    int common_total(const LatticeState& state) const {
        int s = 0;
        for (std::size_t k : model_.common_atoms()) s += state.counts[k];
        return s;
    }

    void build_terminal_projection() {
        const std::size_t n = model_.grid().n_steps;
        e_b_common_.assign(model_.node_states(n), 0.0);
        for (std::size_t s = 0; s < model_.node_states(n); ++s) {
            const auto st = model_.decode(s);
            bool idio_zero = true;
            for (std::size_t k : model_.idio_atoms()) idio_zero &= st.counts[k] == 0;
            const int nc = common_total(st);
            if (!idio_zero || nc > static_cast<int>(n)) continue;
            const std::size_t m = n - static_cast<std::size_t>(nc);
            double acc = 0.0;
            for (const auto& [idio, p] : model_.idio_conditional(m)) {
                auto counts = st.counts;
                for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += idio[k];
                acc += p * input_.claim.evaluate(counts, model_.spec());
            }
            e_b_common_[s] = acc;
        }
    }

    void solve_reference() {
        for (std::size_t t = 0; t < types_.size(); ++t) {
            GeneratorSpec gen;
            gen.kind = GeneratorKind::single_agent;
            gen.alpha = types_[t].alpha;
            gen.phi = input_.phi;
            gen.u_max = input_.u_max;
            ref_.push_back(solve_lattice(
                model_, gen, [&](const LatticeState& s) { return reference_terminal(t, s); }));
        }
    }

    // The auxiliary JBSDE runs under the tilted compensator exp(alpha U^B) zeta
    // and has the constant terminal rho E[x0]; its solution is that constant.
    // Solving it anyway exercises the tilt and pins the triviality numerically.
    void solve_auxiliary() {
        for (std::size_t t = 0; t < types_.size(); ++t) {
            LatticeModel tilted(model_.grid(), model_.spec());
            const double alpha = types_[t].alpha;
            const LatticeSolution& rsol = ref_[t];
            const LatticeModel& base = model_;
            // U^B is independent of the Brownian coordinate because claims read
            // only jump counts; evaluate it at b = 0
            tilted.intensity = [&base, &rsol, alpha](std::size_t node,
                                                     const std::vector<int>& counts,
                                                     std::size_t k) {
                const std::size_t s = base.encode(0, counts);
                const double u = rsol.U[node][s * base.n_atoms() + k];
                MarkState st{counts};
                return std::exp(alpha * u) *
                       base.spec().zeta_at(base.grid().nodes[node], st, k) *
                       base.spec().atoms[k].weight;
            };
            GeneratorSpec gen;
            gen.kind = GeneratorKind::auxiliary;
            gen.alpha = alpha;
            gen.u_max = input_.u_max;
            const double terminal = types_[t].rho * e_x0_;
            aux_.push_back(solve_lattice(
                tilted, gen, [terminal](const LatticeState&) { return terminal; }));
        }
    }

    void build_projection_tables() {
        const std::size_t n = model_.grid().n_steps;
        pi_theta_b_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            pi_theta_b_[i].assign(model_.node_states(i), 0.0);
            for (std::size_t s = 0; s < model_.node_states(i); ++s) {
                const auto st = model_.decode(s);
                bool idio_zero = true;
                for (std::size_t k : model_.idio_atoms()) idio_zero &= st.counts[k] == 0;
                const int nc = common_total(st);
                if (!idio_zero || nc > static_cast<int>(i)) continue;
                const std::size_t m = static_cast<std::size_t>(static_cast<int>(i) - nc);
                double acc = 0.0;
                for (const auto& [idio, p] : model_.idio_conditional(m)) {
                    LatticeState full = st;
                    for (std::size_t k = 0; k < full.counts.size(); ++k)
                        full.counts[k] += idio[k];
                    double by_type = 0.0;
                    for (std::size_t t = 0; t < types_.size(); ++t)
                        by_type += types_[t].weight * theta_b(t, i, full);
                    acc += p * by_type;
                }
                pi_theta_b_[i][s] = acc;
            }
        }
    }

    // residual of Z~ = Z - rho Pi(Z + theta^B); zero in exact arithmetic
    void compute_reconstruction_residual() {
        recon_residual_ = 0.0;
        const std::size_t n = model_.grid().n_steps;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t s = 0; s < model_.node_states(i); ++s) {
                const auto st = model_.decode(s);
                int total = 0;
                for (int c : st.counts) total += c;
                if (total > static_cast<int>(i)) continue;
                const double pi_full = pi_theta_tilde(i, st);
                for (std::size_t t = 0; t < types_.size(); ++t) {
                    const double z = z_reconstructed(t, i, st);
                    const double resid = z - types_[t].rho * pi_full;
                    recon_residual_ = std::max(recon_residual_, std::abs(resid));
                }
            }
    }

    EquilibriumInput input_;
    LatticeModel model_;
    std::vector<AgentTypeSlot> types_;
    std::vector<LatticeSolution> ref_, aux_;
    std::vector<std::vector<double>> pi_theta_b_;  // [cell][common-state key]
    std::vector<double> e_b_common_;
    double e_rho_ = 0.0, e_x0_ = 0.0, recon_residual_ = 0.0;
};

inline double value_function(double x, double y0, double alpha) {
    return -std::exp(-alpha * (x - y0));
}

// ---- Monte Carlo diagnostics on sampled lattice worlds ----

struct DeviationResult {
    std::string direction;
    double eps = 0.0;
    double gap = 0.0;       // mean utility(theta~ + eps h) - utility(theta~)
    double stderror = 0.0;  // of the paired difference
};

struct MfgDiagnostics {
    double fixed_point_exponent = 0.0;  // max over samples of sum |theta~ - Z_xi - phi/alpha|^2 dt
    MeanStat f_residual;                // population F estimate minus the exact projection
    MeanStat utility_base;              // Monte Carlo objective at theta~
    double utility_formula = 0.0;       // -exp(-alpha (x0 - Y_0)) averaged over agents
    std::vector<DeviationResult> deviations;
};

namespace detail {

struct DeviationDirection {
    std::string name;
    std::function<double(const LatticeEquilibrium&, std::size_t type, std::size_t cell,
                         const LatticeState&)> h;
};

inline std::vector<DeviationDirection> canned_directions() {
    return {
        {"constant", [](const LatticeEquilibrium&, std::size_t, std::size_t,
                        const LatticeState&) { return 1.0; }},
        {"time-linear",
         [](const LatticeEquilibrium& eq, std::size_t, std::size_t cell, const LatticeState&) {
             return eq.model().grid().nodes[cell];
         }},
        {"brownian-sign",
         [](const LatticeEquilibrium& eq, std::size_t, std::size_t cell, const LatticeState& st) {
             return eq.model().brownian_value(cell, st.b_idx) >= 0.0 ? 1.0 : -1.0;
         }},
        {"post-jump",
         [](const LatticeEquilibrium&, std::size_t, std::size_t, const LatticeState& st) {
             int total = 0;
             for (int c : st.counts) total += c;
             return total > 0 ? 1.0 : 0.0;
         }},
        {"risk-scaled",
         [](const LatticeEquilibrium& eq, std::size_t type, std::size_t, const LatticeState&) {
             return 1.0 / eq.types()[type].alpha;
         }},
    };
}

}  // namespace detail

inline MfgDiagnostics run_mfg_diagnostics(const LatticeEquilibrium& eq, std::size_t n_worlds,
                                          std::size_t n_agents, uint64_t seed,
                                          std::size_t n_threads = 1) {
    const auto& model = eq.model();
    const auto& grid = model.grid();
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    const std::size_t n = grid.n_steps;

    PopulationSpec pop = eq.input().pop;
    pop.n_agents = n_agents;
    const auto nearest_type = [&](const AgentSample& a) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t t = 0; t < eq.types().size(); ++t) {
            const double d = std::abs(a.alpha - eq.types()[t].alpha) +
                             std::abs(a.rho - eq.types()[t].rho);
            if (d < best_d) {
                best_d = d;
                best = t;
            }
        }
        return best;
    };

    const auto dirs = detail::canned_directions();
    const std::vector<double> epsilons{0.05, -0.05, 0.1, -0.1};

    std::vector<double> f_diff(n_worlds, 0.0);
    std::vector<double> util_base_w(n_worlds, 0.0);
    std::vector<std::vector<double>> util_dev_w(dirs.size() * epsilons.size(),
                                                std::vector<double>(n_worlds, 0.0));
    std::vector<double> exponent_max(n_worlds, 0.0);
    std::vector<double> formula_w(n_worlds, 0.0);

    parallel_for(
        n_worlds,
        [&](std::size_t p) {
            const auto world = sample_lattice_world(model, n_agents, seed, p);
            // redraw the population i.i.d. for each world so finite-sample
            // type-frequency error averages out across worlds
            const auto agents =
                sample_agents(pop, seed ^ (0x9e3779b97f4a7c15ULL * (p + 1)));
            std::vector<std::size_t> type_of(n_agents);
            for (std::size_t a = 0; a < n_agents; ++a) type_of[a] = nearest_type(agents[a]);

            // common state path and the mean-field term of the transformed
            // scheme, F = E[wealth at T | common information]; the claim enters
            // the objective through B - rho E[B | common] instead
            LatticeState common;
            common.b_idx = 0;
            common.counts.assign(model.n_atoms(), 0);
            double f_exact = eq.e_x0();
            std::vector<double> dwhat(n);
            std::vector<LatticeState> common_path(n + 1);
            common_path[0] = common;
            for (std::size_t i = 0; i < n; ++i) {
                const double phi = eq.input().phi_at(grid.nodes[i]);
                dwhat[i] = static_cast<double>(world.dw_sign[i]) * sdt + phi * dt;
                f_exact += eq.pi_theta_tilde(i, common) * dwhat[i];
                if (world.dw_sign[i] > 0) common.b_idx += 1;
                if (world.common_jump[i] >= 0) common.counts[world.common_jump[i]] += 1;
                common_path[i + 1] = common;
            }

            double f_mc = 0.0, u_base = 0.0;
            std::vector<double> u_dev(dirs.size() * epsilons.size(), 0.0);
            double expo_max = 0.0;
            for (std::size_t a = 0; a < n_agents; ++a) {
                const std::size_t t = type_of[a];
                const double alpha = eq.types()[t].alpha;
                const double rho = eq.types()[t].rho;
                const auto states = agent_state_path(model, world, a);

                double x_t = agents[a].x0;
                double exponent = 0.0;
                std::vector<double> x_dev(u_dev.size(), agents[a].x0);
                for (std::size_t i = 0; i < n; ++i) {
                    const double phi = eq.input().phi_at(grid.nodes[i]);
                    const double th = eq.theta_tilde(t, i, states[i]);
                    x_t += th * dwhat[i];
                    // first-order optimality: theta~ - Z_xi - phi/alpha with
                    // Z_xi = Z^B + rho Pi(theta~) on the common state
                    const std::size_t s = model.encode(states[i].b_idx, states[i].counts);
                    const double z_xi = eq.reference(t).Z[i][s] +
                                        rho * eq.pi_theta_tilde(i, common_path[i]);
                    const double diff = th - z_xi - phi / alpha;
                    exponent += diff * diff * dt;
                    for (std::size_t d = 0; d < dirs.size(); ++d)
                        for (std::size_t e = 0; e < epsilons.size(); ++e) {
                            const double hd = dirs[d].h(eq, t, i, states[i]);
                            x_dev[d * epsilons.size() + e] +=
                                (th + epsilons[e] * hd) * dwhat[i];
                        }
                }
                const double b_a = eq.claim_value(states[n]);
                const double xi = b_a - rho * eq.claim_common_expectation(common) + rho * f_exact;
                f_mc += x_t;
                u_base += -std::exp(-alpha * (x_t - xi));
                for (std::size_t j = 0; j < u_dev.size(); ++j)
                    u_dev[j] += -std::exp(-alpha * (x_dev[j] - xi));
                expo_max = std::max(expo_max, exponent);
            }
            f_mc /= static_cast<double>(n_agents);
            f_diff[p] = f_mc - f_exact;
            util_base_w[p] = u_base / static_cast<double>(n_agents);
            for (std::size_t j = 0; j < u_dev.size(); ++j)
                util_dev_w[j][p] = u_dev[j] / static_cast<double>(n_agents);
            exponent_max[p] = expo_max;
            double formula = 0.0;
            for (std::size_t a = 0; a < n_agents; ++a)
                formula += eq.value_function_at(type_of[a], agents[a].x0);
            formula_w[p] = formula / static_cast<double>(n_agents);
        },
        n_threads);

    MfgDiagnostics diag;
    diag.f_residual = mean_stat(f_diff);
    diag.utility_base = mean_stat(util_base_w);
    for (double e : exponent_max) diag.fixed_point_exponent = std::max(diag.fixed_point_exponent, e);
    diag.utility_formula = mean_stat(formula_w).mean;
    for (std::size_t d = 0; d < dirs.size(); ++d)
        for (std::size_t e = 0; e < epsilons.size(); ++e) {
            std::vector<double> paired(n_worlds);
            for (std::size_t p = 0; p < n_worlds; ++p)
                paired[p] = util_dev_w[d * epsilons.size() + e][p] - util_base_w[p];
            const auto st = mean_stat(paired);
            diag.deviations.push_back(
                {dirs[d].name, epsilons[e], st.mean, st.stderror});
        }
    return diag;
}

// ---- regression-based pipeline on simulated paths (claim-free scenarios) ----

struct LsmcEquilibrium {
    std::vector<AgentSample> agents;
    std::vector<MeanStat> theta_tilde_by_agent;  // across paths, averaged over cells
    std::vector<double> y0_by_agent;             // reference JBSDE value per agent
    double e_rho = 0.0, e_x0 = 0.0;
};

inline LsmcEquilibrium solve_mfg_lsmc(const TimeGrid& grid, double phi,
                                      const PopulationSpec& pop, const ClaimSpec& claim,
                                      std::size_t n_agents, std::size_t n_paths, uint64_t seed,
                                      std::size_t n_threads = 1) {
    pop.validate();
    if (claim.kind != ClaimSpec::Kind::zero)
        throw ConfigError("regression equilibrium backend supports claim-free scenarios only; "
                          "use the lattice backend for jump claims");
    PopulationSpec p = pop;
    p.n_agents = n_agents;
    const auto agents = sample_agents(p, seed);
    const double e_rho = pop.rho_law.mean();
    const double e_x0 = pop.x0_law.mean();
    if (std::abs(1.0 - e_rho) < 1e-12)
        throw ConfigError("equilibrium: E[rho] = 1 makes the projection fixed point singular; "
                          "the model requires E[rho] != 1");

    JumpSpec no_jumps;
    const auto bundles = simulate_bundles(grid, no_jumps, 1, n_agents, n_paths, seed, n_threads);
    std::vector<GeneratorSpec> ref_gens(n_agents), aux_gens(n_agents);
    LsmcConfig cfg;
    cfg.agent_features.resize(n_agents);
    for (std::size_t a = 0; a < n_agents; ++a) {
        ref_gens[a].kind = GeneratorKind::single_agent;
        ref_gens[a].alpha = agents[a].alpha;
        ref_gens[a].phi = [phi](double) { return phi; };
        aux_gens[a].kind = GeneratorKind::auxiliary;
        aux_gens[a].alpha = agents[a].alpha;
        cfg.agent_features[a] = {1.0 / agents[a].alpha, agents[a].rho};
    }
    const auto ref = solve_lsmc(bundles, no_jumps, ref_gens,
                                [](std::size_t, std::size_t) { return 0.0; }, cfg);
    const auto aux = solve_lsmc(
        bundles, no_jumps, aux_gens,
        [&](std::size_t, std::size_t a) { return agents[a].rho * e_x0; }, cfg);

    LsmcEquilibrium out;
    out.agents = agents;
    out.e_rho = e_rho;
    out.e_x0 = e_x0;
    out.y0_by_agent.resize(n_agents);
    for (std::size_t a = 0; a < n_agents; ++a) {
        double acc = 0.0;
        for (std::size_t pth = 0; pth < n_paths; ++pth) acc += ref.y0_at(pth, a);
        out.y0_by_agent[a] = acc / static_cast<double>(n_paths);
    }

    const std::size_t n = grid.n_steps;
    out.theta_tilde_by_agent.resize(n_agents);
    std::vector<std::vector<double>> per_path(n_agents, std::vector<double>(n_paths, 0.0));
    for (std::size_t pth = 0; pth < n_paths; ++pth) {
        for (std::size_t i = 0; i < n; ++i) {
            double pi_zt = 0.0, pi_tb = 0.0;
            for (std::size_t a = 0; a < n_agents; ++a) {
                pi_zt += aux.z_at(i, pth, a);
                pi_tb += ref.z_at(i, pth, a) + phi / agents[a].alpha;
            }
            pi_zt /= static_cast<double>(n_agents);
            pi_tb /= static_cast<double>(n_agents);
            for (std::size_t a = 0; a < n_agents; ++a) {
                const double theta_b = ref.z_at(i, pth, a) + phi / agents[a].alpha;
                const double z = aux.z_at(i, pth, a) +
                                 agents[a].rho * (pi_zt + e_rho * pi_tb) / (1.0 - e_rho) +
                                 agents[a].rho * pi_tb;
                per_path[a][pth] += (z + theta_b) / static_cast<double>(n);
            }
        }
    }
    for (std::size_t a = 0; a < n_agents; ++a)
        out.theta_tilde_by_agent[a] = mean_stat(per_path[a]);
    return out;
}

}  // namespace jumpmfg
