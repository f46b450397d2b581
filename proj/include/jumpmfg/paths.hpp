#pragma once

// Driving-noise simulation: Brownian increments and bundled Monte Carlo worlds.

#include <cstdint>
#include <vector>

#include "jumpmfg/grid.hpp"
#include "jumpmfg/jumps.hpp"
#include "jumpmfg/rng.hpp"
#include "jumpmfg/util.hpp"

namespace jumpmfg {

struct BrownianPaths {
    TimeGrid grid;
    std::size_t d = 1;
    std::size_t n_paths = 0;
    std::vector<double> incr;  // [path][cell][coord], flat

    double dW(std::size_t path, std::size_t cell, std::size_t coord = 0) const {
        return incr[(path * grid.n_steps + cell) * d + coord];
    }
};

inline BrownianPaths simulate_brownian(const TimeGrid& grid, std::size_t d, std::size_t n_paths,
                                       uint64_t seed, std::size_t n_threads = 1) {
    if (d < 1) throw ConfigError("brownian: dimension must be >= 1");
    if (n_paths < 1) throw ConfigError("brownian: need at least one path");
    BrownianPaths bp;
    bp.grid = grid;
    bp.d = d;
    bp.n_paths = n_paths;
    bp.incr.resize(n_paths * grid.n_steps * d);
    const double sdt = std::sqrt(grid.dt());
    parallel_for(
        n_paths,
        [&](std::size_t p) {
            RngStream stream(seed, rng_purpose::brownian, p);
            for (std::size_t i = 0; i < grid.n_steps; ++i)
                for (std::size_t c = 0; c < d; ++c)
                    bp.incr[(p * grid.n_steps + i) * d + c] = sdt * stream.normal(i * d + c);
        },
        n_threads);
    return bp;
}

// One Monte Carlo world: the common Brownian path, common jump events and the
// per-agent idiosyncratic jump events, all on one grid. Immutable once built.
struct PathBundle {
    TimeGrid grid;
    uint64_t master_seed = 0;
    std::size_t path_id = 0;
    std::size_t d = 1;
    std::vector<double> dw;                        // [cell][coord], flat
    std::vector<JumpEvent> common_jumps;           // sorted by time
    std::vector<std::vector<JumpEvent>> idio_jumps;  // [agent], sorted by time

    double dW(std::size_t cell, std::size_t coord = 0) const { return dw[cell * d + coord]; }

    std::size_t n_agents() const { return idio_jumps.size(); }
};

inline std::vector<PathBundle> simulate_bundles(const TimeGrid& grid, const JumpSpec& spec,
                                                std::size_t d, std::size_t n_agents,
                                                std::size_t n_paths, uint64_t seed,
                                                std::size_t n_threads = 1) {
    auto brownian = simulate_brownian(grid, d, n_paths, seed, n_threads);
    auto jumps = simulate_jump_measure(grid, spec, n_agents, n_paths, seed, n_threads);
    std::vector<PathBundle> bundles(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        auto& b = bundles[p];
        b.grid = grid;
        b.master_seed = seed;
        b.path_id = p;
        b.d = d;
        b.dw.assign(brownian.incr.begin() + static_cast<std::ptrdiff_t>(p * grid.n_steps * d),
                    brownian.incr.begin() + static_cast<std::ptrdiff_t>((p + 1) * grid.n_steps * d));
        b.common_jumps = std::move(jumps[p].common);
        b.idio_jumps = std::move(jumps[p].idio);
    }
    return bundles;
}

}  // namespace jumpmfg
