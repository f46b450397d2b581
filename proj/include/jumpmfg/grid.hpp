#pragma once

#include <cstddef>
#include <vector>

#include "jumpmfg/errors.hpp"

namespace jumpmfg {

// Uniform time grid on [0, T] with n_steps cells.
struct TimeGrid {
    double horizon = 0.0;
    std::size_t n_steps = 0;
    std::vector<double> nodes;  // n_steps + 1 values, nodes[0] = 0, back() = T

    double dt() const { return horizon / static_cast<double>(n_steps); }

    // Cell index containing time t, clamped to [0, n_steps - 1].
    std::size_t cell_of(double t) const {
        if (t <= 0.0) return 0;
        auto i = static_cast<std::size_t>(t / dt());
        return i >= n_steps ? n_steps - 1 : i;
    }
};

inline TimeGrid build_time_grid(double horizon, std::size_t n_steps) {
    if (!(horizon > 0.0)) throw ConfigError("time grid: horizon must be positive");
    if (n_steps < 1) throw ConfigError("time grid: need at least one step");
    TimeGrid g;
    g.horizon = horizon;
    g.n_steps = n_steps;
    g.nodes.resize(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i)
        g.nodes[i] = horizon * static_cast<double>(i) / static_cast<double>(n_steps);
    return g;
}

}  // namespace jumpmfg
