#pragma once

// Independent ground truth for the solvers: a brute-force dynamic program
// maximizing expected exponential utility over a finite strategy grid, the
// constant-coefficient closed form for the equilibrium strategy, and the
// per-path exponential identity linking the value, the optimal wealth and the
// stochastic exponential of the measure change.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "jumpmfg/errors.hpp"
#include "jumpmfg/jbsde.hpp"
#include "jumpmfg/lattice.hpp"

namespace jumpmfg {

// theta = phi (1/alpha + rho E[1/alpha] / (1 - E[rho])): the equilibrium
// strategy when phi is constant, the claim vanishes and types are constant in
// time (then Z-tilde = 0 and the projection fixed point is arithmetic).
inline double closed_form_merton(double phi, double alpha, double rho, double mean_inv_alpha,
                                 double mean_rho) {
    if (std::abs(1.0 - mean_rho) < 1e-12)
        throw ConfigError("closed form: E[rho] = 1 makes the projection fixed point singular; "
                          "the model requires E[rho] != 1");
    return phi * (1.0 / alpha + rho * mean_inv_alpha / (1.0 - mean_rho));
}

struct ThetaGrid {
    double lo = -1.0, hi = 1.0, step = 0.01;

    std::size_t n_points() const {
        if (!(step > 0.0) || hi < lo) throw ConfigError("theta grid: need step > 0 and hi >= lo");
        return static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5)) + 1;
    }
    double at(std::size_t i) const { return lo + step * static_cast<double>(i); }
};

struct BruteForceResult {
    std::vector<std::vector<double>> G;      // [node][state]: value factor, V = -exp(-alpha x) G
    std::vector<std::vector<double>> theta;  // [node < n][state]: argmax strategy
    double g0 = 0.0;
    double y0 = 0.0;  // certainty equivalent ln(G_0)/alpha; comparable to the BSDE value

    double value(double x0, double alpha) const { return -std::exp(-alpha * x0) * g0; }
};

// Exhaustive backward induction for max E[-exp(-alpha (X_T - xi))] over the
// strategy grid. CARA utility factorizes the wealth out, so the state space is
// the jump/Brownian lattice alone.
inline BruteForceResult brute_force_single_agent(
    const LatticeModel& model, double alpha, const std::function<double(double)>& phi,
    const std::function<double(const LatticeState&)>& terminal, const ThetaGrid& tgrid) {
    const auto& grid = model.grid();
    const std::size_t n = grid.n_steps;
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    const std::size_t n_theta = tgrid.n_points();

    std::size_t work = 0;
    for (std::size_t i = 0; i <= n; ++i) work += model.node_states(i);
    if (work * n_theta > 10'000'000)
        throw SizeError("brute force: state-action space too large (" +
                        std::to_string(work * n_theta) + ")");

    BruteForceResult res;
    res.G.resize(n + 1);
    res.theta.resize(n);
    res.G[n].assign(model.node_states(n), 0.0);
    for (std::size_t s = 0; s < model.node_states(n); ++s) {
        const auto st = model.decode(s);
        int total = 0;
        for (int c : st.counts) total += c;
        if (total > static_cast<int>(n)) continue;
        res.G[n][s] = std::exp(alpha * terminal(st));
    }

    for (std::size_t i = n; i-- > 0;) {
        res.G[i].assign(model.node_states(i), 0.0);
        res.theta[i].assign(model.node_states(i), 0.0);
        const double p = phi ? phi(grid.nodes[i]) : 0.0;
        for (std::size_t s = 0; s < model.node_states(i); ++s) {
            const auto st = model.decode(s);
            int total = 0;
            for (int c : st.counts) total += c;
            if (total > static_cast<int>(i)) continue;

            double p_tot = 0.0;
            std::vector<double> pk(model.n_atoms());
            for (std::size_t k = 0; k < model.n_atoms(); ++k) {
                pk[k] = model.intensity(i, st.counts, k) * dt;
                p_tot += pk[k];
            }
            if (p_tot >= 1.0) throw SolverError("brute force: jump probability >= 1");

            const auto g_next = [&](int up, int jump_atom) {
                auto counts = st.counts;
                if (jump_atom >= 0) counts[static_cast<std::size_t>(jump_atom)] += 1;
                return res.G[i + 1][model.encode(st.b_idx + up, counts)];
            };
            // expected continuation per Brownian sign, mixing the jump branches
            double gu = g_next(1, -1) * (1.0 - p_tot), gd = g_next(0, -1) * (1.0 - p_tot);
            for (std::size_t k = 0; k < model.n_atoms(); ++k) {
                gu += g_next(1, static_cast<int>(k)) * pk[k];
                gd += g_next(0, static_cast<int>(k)) * pk[k];
            }
            double best = 0.0, best_theta = 0.0;
            for (std::size_t j = 0; j < n_theta; ++j) {
                const double th = tgrid.at(j);
                const double val = 0.5 * (std::exp(-alpha * th * (sdt + p * dt)) * gu +
                                          std::exp(-alpha * th * (-sdt + p * dt)) * gd);
                if (j == 0 || val < best) {
                    best = val;
                    best_theta = th;
                }
            }
            res.G[i][s] = best;
            res.theta[i][s] = best_theta;
        }
    }
    res.g0 = res.G[0][model.encode(0, std::vector<int>(model.n_atoms(), 0))];
    res.y0 = std::log(res.g0) / alpha;
    return res;
}

struct IdentitySides {
    double lhs = 0.0;
    double rhs = 0.0;

    double residual() const { return std::abs(lhs - rhs); }
};

// Per-path check of
//   -exp(-alpha (Y_0 + int theta dW-hat - xi))
//     = -exp((alpha^2/2) int |theta - Z - phi/alpha|^2 ds)
//       * E(-alpha int (theta - Z) dW + int (exp(alpha U) - 1) d mu-tilde)
// on a sampled lattice world; exact whenever the branch values of Y separate
// additively into Brownian and jump parts.
inline IdentitySides exponential_identity_sides(
    const LatticeModel& model, const LatticeSolution& sol, double alpha,
    const std::function<double(double)>& phi,
    const std::function<double(std::size_t, const LatticeState&)>& theta,
    const std::function<double(const LatticeState&)>& terminal, const LatticePathWorld& world,
    std::size_t agent) {
    const auto& grid = model.grid();
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    const std::size_t n_atoms = model.n_atoms();
    const auto states = agent_state_path(model, world, agent);

    double wealth_integral = 0.0;
    double ln_rhs = 0.0;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        const LatticeState& st = states[i];
        const std::size_t s = model.encode(st.b_idx, st.counts);
        const double p = phi ? phi(grid.nodes[i]) : 0.0;
        const double th = theta(i, st);
        const double z = sol.Z[i][s];
        const double dw = static_cast<double>(world.dw_sign[i]) * sdt;
        wealth_integral += th * (dw + p * dt);

        const double a = th - z;
        ln_rhs += 0.5 * alpha * alpha * (a - p / alpha) * (a - p / alpha) * dt;
        ln_rhs += -alpha * a * dw - 0.5 * alpha * alpha * a * a * dt;
        int jumped = world.common_jump[i];
        if (jumped < 0 && !world.idio_jump[agent].empty()) jumped = world.idio_jump[agent][i];
        for (std::size_t k = 0; k < n_atoms; ++k) {
            const double u = sol.U[i][s * n_atoms + k];
            const double lam = model.intensity(i, st.counts, k);
            ln_rhs -= std::expm1(alpha * u) * lam * dt;
            if (jumped == static_cast<int>(k)) ln_rhs += alpha * u;
        }
    }
    const double y0 = lattice_y0(model, sol);
    IdentitySides sides;
    sides.lhs = -std::exp(-alpha * (y0 + wealth_integral - terminal(states.back())));
    sides.rhs = -std::exp(ln_rhs);
    return sides;
}

}  // namespace jumpmfg
