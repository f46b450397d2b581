#pragma once

// Backward solvers for the jump-BSDEs that characterize the game: the
// single-agent equation with generator
//   z*phi + |phi|^2/(2 alpha) - sum_k (exp(alpha u_k)-1-alpha u_k)/alpha * zeta lambda_k
// and the auxiliary equation whose generator keeps only the (tilted) jump sum.
// The generator value is the dt-coefficient of dY; the backward step is
// Y_i = E_i[Y_{i+1}] - f(Z_i, U_i) dt.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jumpmfg/errors.hpp"
#include "jumpmfg/lattice.hpp"

namespace jumpmfg {

enum class GeneratorKind { single_agent, auxiliary };

struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::single_agent;
    double alpha = 1.0;
    std::function<double(double)> phi;  // scalar market price of risk (single_agent only)
    double u_max = 0.0;                 // truncation guard; 0 -> default 50/alpha
    double picard_tol = 1e-12;
    int picard_max_iters = 100;

    double u_cap() const { return u_max > 0.0 ? u_max : 50.0 / alpha; }

    // (exp(alpha u) - 1 - alpha u)/alpha with the truncation guard applied.
    double jump_penalty(double u) const {
        const double cap = u_cap();
        const double uc = std::clamp(u, -cap, cap);
        return (std::expm1(alpha * uc) - alpha * uc) / alpha;
    }

    double phi_at(double t) const { return phi ? phi(t) : 0.0; }

    // dt-coefficient of dY at (z, u); `intensities` are zeta*lambda per atom
    // (tilted ones for the auxiliary kind).
    double drift(double t, double z, std::span<const double> u,
                 std::span<const double> intensities) const {
        double jumps = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) jumps += jump_penalty(u[k]) * intensities[k];
        if (kind == GeneratorKind::auxiliary) return -jumps;
        const double p = phi_at(t);
        return z * p + p * p / (2.0 * alpha) - jumps;
    }
};

struct BsdeDiagnostics {
    double terminal_mismatch = 0.0;
    double bmo_energy = 0.0;  // sup over nodes of conditional tail energy of Z
    double max_abs_u = 0.0;
    int max_picard_iters = 0;
    double regression_residual = 0.0;  // LSMC only
    bool ridge_fallback = false;       // LSMC only
};

// Discrete (Y, Z, U) triple on the lattice, indexed per node and lattice state.
struct LatticeSolution {
    std::vector<std::vector<double>> Y;       // [node][state]
    std::vector<std::vector<double>> Z;       // [node < n][state]
    std::vector<std::vector<double>> U;       // [node < n][state * n_atoms + k]
    std::vector<std::vector<double>> energy;  // tail quadratic variation of Z
    BsdeDiagnostics diag;
};

// Backward recursion over the full lattice. `terminal` maps a terminal-node
// state to the terminal condition; unreachable states are skipped.
inline LatticeSolution solve_lattice(const LatticeModel& model, const GeneratorSpec& gen,
                                     const std::function<double(const LatticeState&)>& terminal) {
    const auto& grid = model.grid();
    const std::size_t n = grid.n_steps;
    const std::size_t n_atoms = model.n_atoms();
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);

    LatticeSolution sol;
    sol.Y.resize(n + 1);
    sol.Z.resize(n);
    sol.U.resize(n);
    sol.energy.resize(n + 1);
    sol.Y[n].assign(model.node_states(n), 0.0);
    sol.energy[n].assign(model.node_states(n), 0.0);
    for (std::size_t s = 0; s < model.node_states(n); ++s) {
        const LatticeState st = model.decode(s);
        int total = 0;
        for (int c : st.counts) total += c;
        if (total > static_cast<int>(n)) continue;  // unreachable
        sol.Y[n][s] = terminal(st);
    }

    std::vector<double> u(n_atoms), intensities(n_atoms);
    for (std::size_t i = n; i-- > 0;) {
        sol.Y[i].assign(model.node_states(i), 0.0);
        sol.Z[i].assign(model.node_states(i), 0.0);
        sol.U[i].assign(model.node_states(i) * n_atoms, 0.0);
        sol.energy[i].assign(model.node_states(i), 0.0);
        const double t = grid.nodes[i];
        for (std::size_t s = 0; s < model.node_states(i); ++s) {
            const LatticeState st = model.decode(s);
            int total = 0;
            for (int c : st.counts) total += c;
            if (total > static_cast<int>(i)) continue;

            double p_tot = 0.0;
            for (std::size_t k = 0; k < n_atoms; ++k) {
                intensities[k] = model.intensity(i, st.counts, k);
                p_tot += intensities[k] * dt;
            }
            if (p_tot >= 1.0)
                throw SolverError("lattice solver: jump probability >= 1 at node " +
                                  std::to_string(i));

            // branch values: (W up/down) x (no jump | jump atom k)
            const auto value = [&](int up, int jump_atom) {
                auto counts = st.counts;
                if (jump_atom >= 0) counts[static_cast<std::size_t>(jump_atom)] += 1;
                return sol.Y[i + 1][model.encode(st.b_idx + up, counts)];
            };
            const auto evalue = [&](int up, int jump_atom) {
                auto counts = st.counts;
                if (jump_atom >= 0) counts[static_cast<std::size_t>(jump_atom)] += 1;
                return sol.energy[i + 1][model.encode(st.b_idx + up, counts)];
            };

            double e_up = value(1, -1) * (1.0 - p_tot);
            double e_dn = value(0, -1) * (1.0 - p_tot);
            double en_up = evalue(1, -1) * (1.0 - p_tot);
            double en_dn = evalue(0, -1) * (1.0 - p_tot);
            const double base_up = value(1, -1), base_dn = value(0, -1);
            for (std::size_t k = 0; k < n_atoms; ++k) {
                const double pk = intensities[k] * dt;
                e_up += value(1, static_cast<int>(k)) * pk;
                e_dn += value(0, static_cast<int>(k)) * pk;
                en_up += evalue(1, static_cast<int>(k)) * pk;
                en_dn += evalue(0, static_cast<int>(k)) * pk;
                u[k] = 0.5 * (value(1, static_cast<int>(k)) + value(0, static_cast<int>(k))) -
                       0.5 * (base_up + base_dn);
                sol.U[i][s * n_atoms + k] = u[k];
                sol.diag.max_abs_u = std::max(sol.diag.max_abs_u, std::abs(u[k]));
            }
            const double expect = 0.5 * (e_up + e_dn);
            const double z = (e_up - e_dn) / (2.0 * sdt);
            sol.Z[i][s] = z;

            // per-cell fixed point for the nonlinear u-terms (the generator is
            // y-free, so the iteration stabilizes immediately; the loop guards
            // the contract)
            double y = expect;
            int iters = 0;
            for (; iters < gen.picard_max_iters; ++iters) {
                const double y_next = expect - gen.drift(t, z, u, intensities) * dt;
                if (std::abs(y_next - y) < gen.picard_tol && iters > 0) {
                    y = y_next;
                    break;
                }
                y = y_next;
            }
            if (iters >= gen.picard_max_iters)
                throw SolverError("lattice solver: cell iteration did not converge at node " +
                                  std::to_string(i) + ", state " + std::to_string(s));
            sol.diag.max_picard_iters = std::max(sol.diag.max_picard_iters, iters + 1);
            sol.Y[i][s] = y;
            sol.energy[i][s] = z * z * dt + 0.5 * (en_up + en_dn);
            sol.diag.bmo_energy = std::max(sol.diag.bmo_energy, sol.energy[i][s]);
        }
    }
    sol.diag.terminal_mismatch = 0.0;  // anchored exactly
    return sol;
}

// Root-node value (state b=0, zero counts).
inline double lattice_y0(const LatticeModel& model, const LatticeSolution& sol) {
    return sol.Y[0][model.encode(0, std::vector<int>(model.n_atoms(), 0))];
}

}  // namespace jumpmfg
