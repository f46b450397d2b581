#pragma once

// Finite-state Markov lattice: binomial Brownian increments (+-sqrt(dt)) and
// per-cell exclusive jump branching (at most one jump across all atoms per
// cell, probability zeta*lambda_k*dt each). The exclusive branching makes the
// discrete compensation exact, which the per-path exponential identity and the
// oracle comparisons rely on.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "jumpmfg/errors.hpp"
#include "jumpmfg/grid.hpp"
#include "jumpmfg/jumps.hpp"
#include "jumpmfg/rng.hpp"

namespace jumpmfg {

struct LatticeState {
    int b_idx = 0;            // Brownian position index; value = (2*b_idx - node) * sqrt(dt)
    std::vector<int> counts;  // jump count per atom
};

class LatticeModel {
public:
    static constexpr std::size_t max_total_states = 10'000'000;

    LatticeModel(TimeGrid grid, JumpSpec spec) : grid_(std::move(grid)), spec_(std::move(spec)) {
        spec_.validate();
        n_atoms_ = spec_.n_atoms();
        radix_ = grid_.n_steps + 1;
        stride_ = 1;
        for (std::size_t k = 0; k < n_atoms_; ++k) stride_ *= radix_;
        std::size_t total = 0;
        for (std::size_t i = 0; i <= grid_.n_steps; ++i) total += node_states(i);
        if (total > max_total_states)
            throw SizeError("lattice: state space too large (" + std::to_string(total) + ")");
        for (std::size_t k = 0; k < n_atoms_; ++k)
            (spec_.atoms[k].split == NoiseSplit::common ? common_atoms_ : idio_atoms_).push_back(k);
        // default intensity: zeta * lambda from the spec
        intensity = [this](std::size_t node, const std::vector<int>& counts, std::size_t k) {
            MarkState s{counts};
            return spec_.zeta_at(grid_.nodes[node], s, k) * spec_.atoms[k].weight;
        };
    }

    const TimeGrid& grid() const { return grid_; }
    const JumpSpec& spec() const { return spec_; }
    std::size_t n_atoms() const { return n_atoms_; }
    const std::vector<std::size_t>& common_atoms() const { return common_atoms_; }
    const std::vector<std::size_t>& idio_atoms() const { return idio_atoms_; }

    std::size_t node_states(std::size_t node) const { return (node + 1) * stride_; }
    std::size_t counts_stride() const { return stride_; }

    std::size_t encode(int b_idx, const std::vector<int>& counts) const {
        std::size_t c = 0;
        for (std::size_t k = n_atoms_; k-- > 0;) c = c * radix_ + static_cast<std::size_t>(counts[k]);
        return static_cast<std::size_t>(b_idx) * stride_ + c;
    }

    LatticeState decode(std::size_t idx) const {
        LatticeState s;
        s.b_idx = static_cast<int>(idx / stride_);
        s.counts.resize(n_atoms_);
        std::size_t c = idx % stride_;
        for (std::size_t k = 0; k < n_atoms_; ++k) {
            s.counts[k] = static_cast<int>(c % radix_);
            c /= radix_;
        }
        return s;
    }

    double brownian_value(std::size_t node, int b_idx) const {
        return (2.0 * b_idx - static_cast<double>(node)) * std::sqrt(grid_.dt());
    }

    // Jump probability for atom k in the cell starting at `node`, given left
    // endpoint counts. Exclusive across atoms; the sum must stay below 1.
    double jump_prob(std::size_t node, const std::vector<int>& counts, std::size_t k) const {
        return intensity(node, counts, k) * grid_.dt();
    }

    double total_jump_prob(std::size_t node, const std::vector<int>& counts) const {
        double p = 0.0;
        for (std::size_t k = 0; k < n_atoms_; ++k) p += jump_prob(node, counts, k);
        if (p >= 1.0)
            throw SolverError("lattice: total per-cell jump probability >= 1 at node " +
                              std::to_string(node) + "; refine the time grid");
        return p;
    }

    // Forward state distribution per node, starting from b = 0, no jumps.
    std::vector<std::vector<double>> node_distribution() const {
        std::vector<std::vector<double>> dist(grid_.n_steps + 1);
        dist[0].assign(node_states(0), 0.0);
        dist[0][encode(0, std::vector<int>(n_atoms_, 0))] = 1.0;
        for (std::size_t i = 0; i < grid_.n_steps; ++i) {
            dist[i + 1].assign(node_states(i + 1), 0.0);
            for (std::size_t s = 0; s < node_states(i); ++s) {
                const double p = dist[i][s];
                if (p == 0.0) continue;
                const LatticeState st = decode(s);
                const double ptot = total_jump_prob(i, st.counts);
                for (int up = 0; up <= 1; ++up) {
                    const int nb = st.b_idx + up;
                    dist[i + 1][encode(nb, st.counts)] += 0.5 * p * (1.0 - ptot);
                    for (std::size_t k = 0; k < n_atoms_; ++k) {
                        const double pk = jump_prob(i, st.counts, k);
                        if (pk == 0.0) continue;
                        auto counts = st.counts;
                        counts[k] += 1;
                        dist[i + 1][encode(nb, counts)] += 0.5 * p * pk;
                    }
                }
            }
        }
        return dist;
    }

    // Conditional distribution of the idiosyncratic count vector after m cells
    // in which no common jump occurred (exclusive choice among no-jump and the
    // idiosyncratic atoms). Requires a constant intensity density.
    const std::vector<std::pair<std::vector<int>, double>>& idio_conditional(std::size_t m) const {
        auto it = idio_cache_.find(m);
        if (it != idio_cache_.end()) return it->second;
        if (spec_.zeta.kind != ZetaForm::Kind::constant && !idio_atoms_.empty())
            throw ConfigError(
                "lattice projection requires a constant intensity density with idiosyncratic atoms");
        const std::vector<int> zero(n_atoms_, 0);
        double p_common = 0.0;
        for (std::size_t k : common_atoms_) p_common += jump_prob(0, zero, k);
        std::vector<double> p_idio(n_atoms_, 0.0);
        for (std::size_t k : idio_atoms_) p_idio[k] = jump_prob(0, zero, k) / (1.0 - p_common);
        double p_stay = 1.0;
        for (std::size_t k : idio_atoms_) p_stay -= p_idio[k];

        std::map<std::vector<int>, double> dist{{zero, 1.0}};
        for (std::size_t step = 0; step < m; ++step) {
            std::map<std::vector<int>, double> next;
            for (const auto& [counts, p] : dist) {
                next[counts] += p * p_stay;
                for (std::size_t k : idio_atoms_) {
                    auto c = counts;
                    c[k] += 1;
                    next[c] += p * p_idio[k];
                }
            }
            dist = std::move(next);
        }
        auto& slot = idio_cache_[m];
        slot.assign(dist.begin(), dist.end());
        return slot;
    }

    int common_count_total(const std::vector<int>& counts) const {
        int n0 = 0;
        for (std::size_t k : common_atoms_) n0 += counts[k];
        return n0;
    }

    // Per-unit-time jump intensity (zeta * lambda); replaceable to run the
    // lattice under a tilted compensator.
    std::function<double(std::size_t, const std::vector<int>&, std::size_t)> intensity;

private:
    TimeGrid grid_;
    JumpSpec spec_;
    std::size_t n_atoms_ = 0, radix_ = 1, stride_ = 1;
    std::vector<std::size_t> common_atoms_, idio_atoms_;
    mutable std::map<std::size_t, std::vector<std::pair<std::vector<int>, double>>> idio_cache_;
};

// One sampled trajectory of the population lattice dynamics: the Brownian sign
// and the common jump atom per cell are shared, idiosyncratic jumps are drawn
// per agent conditionally on no common jump in the cell.
struct LatticePathWorld {
    std::vector<int> dw_sign;              // per cell, +1 / -1
    std::vector<int> common_jump;          // per cell, -1 = none, else atom index
    std::vector<std::vector<int>> idio_jump;  // [agent][cell], -1 = none, else atom index
};

inline LatticePathWorld sample_lattice_world(const LatticeModel& model, std::size_t n_agents,
                                             uint64_t seed, std::size_t path) {
    const std::size_t n = model.grid().n_steps;
    LatticePathWorld w;
    w.dw_sign.assign(n, 1);
    w.common_jump.assign(n, -1);
    w.idio_jump.assign(n_agents, std::vector<int>(n, -1));
    SequentialRng common_rng(RngStream(seed, rng_purpose::lattice_paths, path, 0xFFFFu));
    std::vector<SequentialRng> agent_rng;
    agent_rng.reserve(n_agents);
    for (std::size_t a = 0; a < n_agents; ++a)
        agent_rng.emplace_back(RngStream(seed, rng_purpose::lattice_paths, path,
                                         static_cast<uint32_t>(a)));
    std::vector<int> common_counts(model.n_atoms(), 0);
    std::vector<std::vector<int>> agent_counts(n_agents, std::vector<int>(model.n_atoms(), 0));
    for (std::size_t i = 0; i < n; ++i) {
        w.dw_sign[i] = common_rng.uniform() < 0.5 ? 1 : -1;
        double p_common = 0.0;
        std::vector<double> pc(model.n_atoms(), 0.0);
        for (std::size_t k : model.common_atoms()) {
            pc[k] = model.jump_prob(i, common_counts, k);
            p_common += pc[k];
        }
        double u = common_rng.uniform();
        for (std::size_t k : model.common_atoms()) {
            if (u < pc[k]) {
                w.common_jump[i] = static_cast<int>(k);
                break;
            }
            u -= pc[k];
        }
        for (std::size_t a = 0; a < n_agents; ++a) {
            if (w.common_jump[i] < 0 && !model.idio_atoms().empty()) {
                // conditional idiosyncratic probabilities given no common jump
                double ua = agent_rng[a].uniform();
                for (std::size_t k : model.idio_atoms()) {
                    const double pk = model.jump_prob(i, agent_counts[a], k) / (1.0 - p_common);
                    if (ua < pk) {
                        w.idio_jump[a][i] = static_cast<int>(k);
                        break;
                    }
                    ua -= pk;
                }
            } else if (!model.idio_atoms().empty()) {
                agent_rng[a].uniform();  // keep streams aligned across branches
            }
            if (w.idio_jump[a][i] >= 0) agent_counts[a][w.idio_jump[a][i]] += 1;
            if (w.common_jump[i] >= 0) agent_counts[a][w.common_jump[i]] += 1;
        }
        if (w.common_jump[i] >= 0) common_counts[w.common_jump[i]] += 1;
    }
    return w;
}

// Merged per-agent view of a sampled world: the agent's state path through the
// lattice (left-endpoint states, nodes 0..n).
inline std::vector<LatticeState> agent_state_path(const LatticeModel& model,
                                                  const LatticePathWorld& world,
                                                  std::size_t agent) {
    const std::size_t n = model.grid().n_steps;
    std::vector<LatticeState> states(n + 1);
    states[0].b_idx = 0;
    states[0].counts.assign(model.n_atoms(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        states[i + 1] = states[i];
        states[i + 1].b_idx += world.dw_sign[i] > 0 ? 1 : 0;
        const int cj = world.common_jump[i];
        const int ij = world.idio_jump[agent][i];
        if (cj >= 0) states[i + 1].counts[cj] += 1;
        if (ij >= 0) states[i + 1].counts[ij] += 1;
    }
    return states;
}

}  // namespace jumpmfg
