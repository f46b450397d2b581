#pragma once

// Equivalent change of measure: the stochastic exponential of
//   -int phi dW + int (exp(alpha U) - 1) d(mu - nu)
// along simulated paths, the compensator tilt zeta-hat = exp(alpha U) zeta,
// and the exact discrete analogue on the lattice.

#include <cmath>
#include <functional>
#include <vector>

#include "jumpmfg/lattice.hpp"
#include "jumpmfg/market.hpp"
#include "jumpmfg/paths.hpp"
#include "jumpmfg/util.hpp"

namespace jumpmfg {

enum class DoleansMode {
    cell_frozen,    // freeze the integrand at the left grid node of each cell
    event_refined,  // split cells at event times; exact for state-driven data
};

struct DoleansConfig {
    DoleansMode mode = DoleansMode::event_refined;
    double alpha = 1.0;
    // jump integrand U(t, left-limit counts, atom); empty means U = 0
    std::function<double(double, const MarkState&, std::size_t)> u;
};

struct DensityParts {
    double log_continuous = 0.0;   // -sum phi dW - 1/2 |phi|^2 dt
    double log_jumps = 0.0;        // sum over events of alpha U
    double log_compensator = 0.0;  // -int (exp(alpha U) - 1) zeta lambda dt

    double log_value() const { return log_continuous + log_jumps + log_compensator; }
    double value() const { return std::exp(log_value()); }
};

// Doleans-Dade density along one agent's view of a path bundle. `market` may
// be null to drop the Brownian part. The spec passed in is the base (untilted)
// compensator.
inline DensityParts doleans_density(const PathBundle& b, std::size_t agent,
                                    const MarketSpec* market, const JumpSpec& spec,
                                    const DoleansConfig& cfg) {
    const TimeGrid& grid = b.grid;
    const double dt = grid.dt();
    DensityParts parts;

    if (market != nullptr) {
        for (std::size_t i = 0; i < grid.n_steps; ++i) {
            const auto phi = market->phi_at(grid.nodes[i]);
            double pdw = 0.0, p2 = 0.0;
            for (std::size_t c = 0; c < b.d; ++c) {
                pdw += phi[c] * b.dW(i, c);
                p2 += phi[c] * phi[c];
            }
            parts.log_continuous += -pdw - 0.5 * p2 * dt;
        }
    }
    if (spec.n_atoms() == 0) return parts;

    const auto u_at = [&](double t, const MarkState& st, std::size_t k) {
        return cfg.u ? cfg.u(t, st, k) : 0.0;
    };
    const auto events = merge_events(
        b.common_jumps, b.idio_jumps.empty() ? std::vector<JumpEvent>{} : b.idio_jumps[agent]);

    if (cfg.mode == DoleansMode::cell_frozen) {
        const auto counts = counts_by_node(grid, events, spec.n_atoms());
        for (std::size_t i = 0; i < grid.n_steps; ++i) {
            const double t = grid.nodes[i];
            MarkState st{counts[i]};
            parts.log_compensator -=
                dt * compensator_integral(
                         spec,
                         [&](std::size_t k, const std::vector<double>&) {
                             return std::expm1(cfg.alpha * u_at(t, st, k));
                         },
                         t, st);
        }
        for (const auto& e : events) {
            MarkState st{counts[e.cell]};
            parts.log_jumps += cfg.alpha * u_at(grid.nodes[e.cell], st, e.atom);
        }
        return parts;
    }

    // event_refined: integrate exactly over segments on which the state (and a
    // piecewise-constant-in-time intensity) is constant
    std::vector<double> cuts{0.0, grid.horizon};
    for (const auto& e : events) cuts.push_back(e.time);
    if (spec.zeta.kind == ZetaForm::Kind::piecewise_time)
        for (double t : spec.zeta.times)
            if (t > 0.0 && t < grid.horizon) cuts.push_back(t);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    MarkState st{std::vector<int>(spec.n_atoms(), 0)};
    std::size_t e_i = 0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double t0 = cuts[s], t1 = cuts[s + 1];
        // events at t0 occur at the segment's left endpoint: density factor
        // first (with the pre-jump state), then advance the state
        while (e_i < events.size() && events[e_i].time <= t0) {
            parts.log_jumps += cfg.alpha * u_at(events[e_i].time, st, events[e_i].atom);
            st.counts[events[e_i].atom] += 1;
            ++e_i;
        }
        parts.log_compensator -=
            (t1 - t0) * compensator_integral(
                            spec,
                            [&](std::size_t k, const std::vector<double>&) {
                                return std::expm1(cfg.alpha * u_at(t0, st, k));
                            },
                            t0, st);
    }
    while (e_i < events.size()) {
        parts.log_jumps += cfg.alpha * u_at(events[e_i].time, st, events[e_i].atom);
        st.counts[events[e_i].atom] += 1;
        ++e_i;
    }
    return parts;
}

// Tilted compensator zeta-hat = exp(alpha U) zeta. `u_bound` is a bound on
// |U|, used to enlarge the declared intensity bound for thinning.
inline JumpSpec tilt_compensator(const JumpSpec& base, double alpha,
                                 std::function<double(double, const MarkState&, std::size_t)> u,
                                 double u_bound) {
    JumpSpec tilted = base;
    tilted.tilt = [alpha, u = std::move(u)](double t, const MarkState& st, std::size_t k) {
        return std::exp(alpha * u(t, st, k));
    };
    tilted.c_nu = base.c_nu * std::exp(std::abs(alpha) * u_bound);
    return tilted;
}

// Expectation under the equivalent measure by reweighting: E-hat[X] ~
// mean(density * X) when the densities have unit mean under the base measure.
inline MeanStat phat_expectation(const std::vector<double>& values,
                                 const std::vector<double>& densities) {
    if (values.size() != densities.size())
        throw SizeError("phat_expectation: values and densities differ in length");
    std::vector<double> prod(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) prod[i] = values[i] * densities[i];
    return mean_stat(prod);
}

// Exact discrete density of the tilted lattice measure along one sampled
// world: the per-cell branch probabilities are re-weighted so that W gains
// drift -phi and jump branch k gains the factor exp(alpha U_k). Each cell
// factor has conditional mean one, so the product is an exact martingale.
inline double lattice_density(
    const LatticeModel& model, const LatticePathWorld& world, std::size_t agent,
    const std::function<double(double)>& phi,
    const std::function<double(std::size_t, const LatticeState&, std::size_t)>& u, double alpha) {
    const TimeGrid& grid = model.grid();
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    const std::size_t n_atoms = model.n_atoms();

    std::vector<int> common_counts(n_atoms, 0);
    LatticeState st;
    st.b_idx = 0;
    st.counts.assign(n_atoms, 0);
    double density = 1.0;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        const double p = phi ? phi(grid.nodes[i]) : 0.0;
        if (std::abs(p) * sdt >= 1.0)
            throw ModelViolationError("lattice density: |phi| sqrt(dt) must be below 1");
        density *= 1.0 - p * static_cast<double>(world.dw_sign[i]) * sdt;

        double p_tot = 0.0, p_hat_tot = 0.0;
        int jumped = -1;
        double jump_factor = 1.0;
        for (std::size_t k = 0; k < n_atoms; ++k) {
            const bool common =
                model.spec().atoms[k].split == NoiseSplit::common;
            const double pk =
                model.intensity(i, common ? common_counts : st.counts, k) * dt;
            const double ek = std::exp(alpha * u(i, st, k));
            p_tot += pk;
            p_hat_tot += pk * ek;
            const int branch = common ? world.common_jump[i] : world.idio_jump[agent][i];
            if (branch == static_cast<int>(k)) {
                jumped = static_cast<int>(k);
                jump_factor = ek;
            }
        }
        if (p_hat_tot >= 1.0)
            throw SolverError("lattice density: tilted jump probability >= 1; refine the grid");
        density *= jumped >= 0 ? jump_factor : (1.0 - p_hat_tot) / (1.0 - p_tot);

        if (world.common_jump[i] >= 0) {
            common_counts[world.common_jump[i]] += 1;
            st.counts[world.common_jump[i]] += 1;
        }
        if (world.idio_jump[agent][i] >= 0) st.counts[world.idio_jump[agent][i]] += 1;
        if (world.dw_sign[i] > 0) st.b_idx += 1;
    }
    return density;
}

}  // namespace jumpmfg
