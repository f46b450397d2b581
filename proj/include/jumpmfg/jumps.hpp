#pragma once

// Integer-valued random measure with finitely many mark atoms, a bounded
// predictable intensity density and a common/idiosyncratic split of the mark
// set. Simulation is by thinning against the intensity bound.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "jumpmfg/errors.hpp"
#include "jumpmfg/grid.hpp"
#include "jumpmfg/rng.hpp"
#include "jumpmfg/util.hpp"

namespace jumpmfg {

enum class NoiseSplit { common, idiosyncratic };

struct JumpAtom {
    std::vector<double> mark;  // point in R^l, nonzero
    double weight = 0.0;       // lambda({mark}) > 0
    NoiseSplit split = NoiseSplit::common;
};

// State an intensity density may read: left limits of the jump counts per atom
// (common atoms carry common counts; idiosyncratic atoms the owner's counts).
struct MarkState {
    std::vector<int> counts;

    int total() const {
        int s = 0;
        for (int c : counts) s += c;
        return s;
    }
};

// Registry of built-in intensity density forms.
struct ZetaForm {
    enum class Kind { constant, piecewise_time, state_scaled };
    Kind kind = Kind::constant;
    double value = 1.0;
    std::vector<double> times;   // piecewise: breakpoints, value[i] on [times[i], times[i+1])
    std::vector<double> values;  // piecewise levels
    double scale = 0.0;          // state_scaled: value * (1 + scale * total count), floored at 0

    double operator()(double t, const MarkState& state) const {
        switch (kind) {
            case Kind::constant:
                return value;
            case Kind::piecewise_time: {
                double v = values.empty() ? value : values.front();
                for (std::size_t i = 0; i < times.size(); ++i)
                    if (t >= times[i]) v = values[i];
                return v;
            }
            case Kind::state_scaled:
                return std::max(0.0, value * (1.0 + scale * static_cast<double>(state.total())));
        }
        return value;
    }

    static ZetaForm constant(double v) { return ZetaForm{Kind::constant, v, {}, {}, 0.0}; }
};

struct JumpSpec {
    std::vector<JumpAtom> atoms;
    ZetaForm zeta;
    double c_nu = 1.0;  // declared bound on the intensity density
    // optional multiplicative tilt (t, state, atom) -> factor, e.g. exp(alpha U)
    // for the equivalent measure under which the compensator is zeta-hat
    std::function<double(double, const MarkState&, std::size_t)> tilt;

    std::size_t n_atoms() const { return atoms.size(); }

    double total_weight() const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.weight;
        return s;
    }

    bool has_idiosyncratic() const {
        return std::any_of(atoms.begin(), atoms.end(),
                           [](const JumpAtom& a) { return a.split == NoiseSplit::idiosyncratic; });
    }

    // Intensity density at (t, state) for atom k; enforces the declared bound.
    double zeta_at(double t, const MarkState& state, std::size_t k) const {
        const double z = zeta(t, state) * (tilt ? tilt(t, state, k) : 1.0);
        if (z < 0.0 || z > c_nu)
            throw ModelViolationError("intensity density outside [0, c_nu] at t=" +
                                      std::to_string(t) + ", atom " + std::to_string(k) +
                                      ": zeta=" + std::to_string(z));
        return z;
    }

    void validate() const {
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            if (!(atoms[k].weight > 0.0))
                throw ConfigError("jump atom " + std::to_string(k) + ": weight must be positive");
            bool nonzero = false;
            for (double m : atoms[k].mark) nonzero = nonzero || m != 0.0;
            if (!nonzero || atoms[k].mark.empty())
                throw ConfigError("jump atom " + std::to_string(k) + ": mark must be nonzero");
        }
        if (!(c_nu > 0.0)) throw ConfigError("jump spec: c_nu must be positive");
    }
};

struct JumpEvent {
    double time = 0.0;
    std::size_t cell = 0;
    std::size_t atom = 0;
};

inline bool event_time_less(const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; }

// Jump parts of one Monte Carlo world.
struct JumpWorld {
    std::vector<JumpEvent> common;                  // shared by all agents, sorted by time
    std::vector<std::vector<JumpEvent>> idio;       // [agent], each sorted by time
};

namespace detail {

struct Proposal {
    double time;
    std::size_t atom;
    double accept_u;
};

// Homogeneous Poisson proposals at rate c_nu * weight per atom, merged in time.
inline std::vector<Proposal> propose(const TimeGrid& grid, const JumpSpec& spec,
                                     const std::vector<std::size_t>& atom_ids, uint64_t seed,
                                     std::size_t path, uint32_t agent_tag) {
    std::vector<Proposal> props;
    for (std::size_t k : atom_ids) {
        const double rate = spec.c_nu * spec.atoms[k].weight;
        if (rate <= 0.0) continue;
        SequentialRng rng(RngStream(seed, rng_purpose::jumps, path, agent_tag,
                                    static_cast<uint32_t>(k + 1)));
        double t = rng.exponential(rate);
        while (t < grid.horizon) {
            props.push_back({t, k, rng.uniform()});
            t += rng.exponential(rate);
        }
    }
    std::sort(props.begin(), props.end(),
              [](const Proposal& a, const Proposal& b) { return a.time < b.time; });
    return props;
}

}  // namespace detail

// Thinning for one path. `base_events` are already-accepted events (the common
// ones, when simulating an agent's idiosyncratic part) that advance the state
// counts alongside the accepted proposals.
inline std::vector<JumpEvent> thin_events(const TimeGrid& grid, const JumpSpec& spec,
                                          const std::vector<std::size_t>& atom_ids,
                                          const std::vector<JumpEvent>& base_events,
                                          uint64_t seed, std::size_t path, uint32_t agent_tag) {
    const auto props = detail::propose(grid, spec, atom_ids, seed, path, agent_tag);
    std::vector<JumpEvent> accepted;
    MarkState state{std::vector<int>(spec.n_atoms(), 0)};
    std::size_t base_i = 0;
    for (const auto& p : props) {
        while (base_i < base_events.size() && base_events[base_i].time < p.time) {
            state.counts[base_events[base_i].atom] += 1;
            ++base_i;
        }
        const double z = spec.zeta_at(p.time, state, p.atom);
        if (p.accept_u <= z / spec.c_nu) {
            accepted.push_back({p.time, grid.cell_of(p.time), p.atom});
            state.counts[p.atom] += 1;
        }
    }
    return accepted;
}

// Jump parts of a PathBundle ensemble: one common stream per path shared by all
// agents, independent idiosyncratic streams per agent.
inline std::vector<JumpWorld> simulate_jump_measure(const TimeGrid& grid, const JumpSpec& spec,
                                                    std::size_t n_agents, std::size_t n_paths,
                                                    uint64_t seed, std::size_t n_threads = 1) {
    spec.validate();
    std::vector<std::size_t> common_atoms, idio_atoms;
    for (std::size_t k = 0; k < spec.n_atoms(); ++k)
        (spec.atoms[k].split == NoiseSplit::common ? common_atoms : idio_atoms).push_back(k);

    std::vector<JumpWorld> worlds(n_paths);
    constexpr uint32_t common_tag = 0xFFFFu;
    parallel_for(
        n_paths,
        [&](std::size_t p) {
            auto& w = worlds[p];
            w.common = thin_events(grid, spec, common_atoms, {}, seed, p, common_tag);
            w.idio.resize(n_agents);
            for (std::size_t a = 0; a < n_agents; ++a)
                w.idio[a] = thin_events(grid, spec, idio_atoms, w.common, seed, p,
                                        static_cast<uint32_t>(a));
        },
        n_threads);
    return worlds;
}

// Sum_k g(e_k) * zeta(t, state, e_k) * lambda_k.
template <typename G>
double compensator_integral(const JumpSpec& spec, G&& g, double t, const MarkState& state) {
    double s = 0.0;
    for (std::size_t k = 0; k < spec.n_atoms(); ++k)
        s += g(k, spec.atoms[k].mark) * spec.zeta_at(t, state, k) * spec.atoms[k].weight;
    return s;
}

// Per-atom jump counts at the left endpoint of each cell (counts[i] = number of
// events strictly before node i), for one agent's merged view.
inline std::vector<std::vector<int>> counts_by_node(const TimeGrid& grid,
                                                    const std::vector<JumpEvent>& events,
                                                    std::size_t n_atoms) {
    std::vector<std::vector<int>> counts(grid.n_steps + 1, std::vector<int>(n_atoms, 0));
    std::vector<int> running(n_atoms, 0);
    std::size_t e = 0;
    for (std::size_t i = 0; i <= grid.n_steps; ++i) {
        while (e < events.size() && events[e].time < grid.nodes[i]) {
            running[events[e].atom] += 1;
            ++e;
        }
        counts[i] = running;
    }
    return counts;
}

// Merge two sorted event lists (common + idiosyncratic) by time.
inline std::vector<JumpEvent> merge_events(const std::vector<JumpEvent>& a,
                                           const std::vector<JumpEvent>& b) {
    std::vector<JumpEvent> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out), event_time_less);
    return out;
}

}  // namespace jumpmfg
