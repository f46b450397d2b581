#pragma once

// Bounded terminal claims read off the jump state: nothing (zero), a stop-loss
// layer min((L_T - K1)^+, K2) on a cumulative jump loss, or a capped linear
// function of the jump count. The claim declares which side of the noise split
// it reads so lattice conditioning stays exact.

#include <algorithm>
#include <cmath>
#include <vector>

#include "jumpmfg/errors.hpp"
#include "jumpmfg/jumps.hpp"

namespace jumpmfg {

struct ClaimSpec {
    enum class Kind { zero, stop_loss, capped_linear_count };
    enum class Source { all, common_only, idio_only };

    Kind kind = Kind::zero;
    Source source = Source::all;
    double k1 = 0.0;   // stop_loss retention
    double k2 = 0.0;   // stop_loss cap
    double unit = 0.0; // capped_linear_count: payoff per jump
    int count_cap = 0; // capped_linear_count: max counted jumps

    void validate() const {
        if (kind == Kind::stop_loss && (k1 < 0.0 || k2 < 0.0))
            throw ConfigError("claim: stop-loss needs K1 >= 0 and K2 >= 0");
        if (kind == Kind::capped_linear_count && count_cap < 0)
            throw ConfigError("claim: count cap must be nonnegative");
    }

    double bound() const {
        switch (kind) {
            case Kind::zero:
                return 0.0;
            case Kind::stop_loss:
                return k2;
            case Kind::capped_linear_count:
                return std::abs(unit) * count_cap;
        }
        return 0.0;
    }

    bool reads_atom(const JumpAtom& a) const {
        switch (source) {
            case Source::all:
                return true;
            case Source::common_only:
                return a.split == NoiseSplit::common;
            case Source::idio_only:
                return a.split == NoiseSplit::idiosyncratic;
        }
        return true;
    }

    // Terminal payoff from the per-atom jump counts of one agent's merged view.
    double evaluate(const std::vector<int>& counts, const JumpSpec& spec) const {
        if (kind == Kind::zero) return 0.0;
        double loss = 0.0;
        int n_counted = 0;
        for (std::size_t k = 0; k < spec.n_atoms(); ++k) {
            if (!reads_atom(spec.atoms[k])) continue;
            loss += counts[k] * std::abs(spec.atoms[k].mark[0]);
            n_counted += counts[k];
        }
        double b = 0.0;
        if (kind == Kind::stop_loss)
            b = std::min(std::max(loss - k1, 0.0), k2);
        else
            b = unit * std::min(n_counted, count_cap);
        if (std::abs(b) > bound() + 1e-12)
            throw ModelViolationError("claim: payoff exceeds its declared bound");
        return b;
    }
};

}  // namespace jumpmfg
