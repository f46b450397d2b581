#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "jumpmfg/grid.hpp"
#include "jumpmfg/jumps.hpp"
#include "jumpmfg/paths.hpp"

using namespace jumpmfg;

namespace {

JumpSpec one_atom_spec(double weight, double zeta = 1.0, NoiseSplit split = NoiseSplit::common) {
    JumpSpec spec;
    spec.atoms.push_back({{1.0}, weight, split});
    spec.zeta = ZetaForm::constant(zeta);
    spec.c_nu = std::max(1.0, zeta);
    return spec;
}

}  // namespace

TEST_CASE("build_time_grid produces uniform nodes") {
    const auto g = build_time_grid(1.0, 4);
    REQUIRE(g.nodes.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(g.nodes[i] == Catch::Approx(0.25 * i));
    const auto g1 = build_time_grid(1.0, 1);
    REQUIRE(g1.nodes == std::vector<double>{0.0, 1.0});
    REQUIRE_THROWS_AS(build_time_grid(0.0, 4), ConfigError);
    REQUIRE_THROWS_AS(build_time_grid(1.0, 0), ConfigError);
}

TEST_CASE("brownian increments: moments and determinism") {
    const auto g = build_time_grid(1.0, 4);
    const std::size_t n_paths = 100000;
    const auto bp = simulate_brownian(g, 1, n_paths, 42, 4);

    // ensemble mean ~ 0 and variance ~ dt, within 4 standard errors
    for (std::size_t cell = 0; cell < g.n_steps; ++cell) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t p = 0; p < n_paths; ++p) {
            const double x = bp.dW(p, cell);
            sum += x;
            sum2 += x * x;
        }
        const double mean = sum / n_paths;
        const double var = sum2 / n_paths - mean * mean;
        const double se_mean = std::sqrt(g.dt() / n_paths);
        const double se_var = g.dt() * std::sqrt(2.0 / n_paths);
        REQUIRE(std::abs(mean) < 4 * se_mean);
        REQUIRE(std::abs(var - g.dt()) < 4 * se_var);
    }

    // same seed twice -> bit-identical, independent of thread count
    const auto bp1 = simulate_brownian(g, 2, 1000, 7, 1);
    const auto bp4 = simulate_brownian(g, 2, 1000, 7, 4);
    REQUIRE(bp1.incr == bp4.incr);
}

TEST_CASE("jump simulation: Poisson mean for constant intensity") {
    const auto g = build_time_grid(1.0, 8);
    const auto spec = one_atom_spec(3.0);
    const std::size_t n_paths = 100000;
    const auto worlds = simulate_jump_measure(g, spec, 1, n_paths, 11, 4);
    double sum = 0.0, sum2 = 0.0;
    for (const auto& w : worlds) {
        const double c = static_cast<double>(w.common.size());
        sum += c;
        sum2 += c * c;
    }
    const double mean = sum / n_paths;
    const double var = sum2 / n_paths - mean * mean;
    const double se = std::sqrt(var / n_paths);
    REQUIRE(std::abs(mean - 3.0) < 4 * se);
}

TEST_CASE("jump simulation: null intensity yields no events") {
    const auto g = build_time_grid(1.0, 4);
    auto spec = one_atom_spec(3.0, 0.0);
    spec.c_nu = 1.0;
    const auto worlds = simulate_jump_measure(g, spec, 1, 1000, 3);
    for (const auto& w : worlds) REQUIRE(w.common.empty());
}

TEST_CASE("common events shared, idiosyncratic streams independent") {
    const auto g = build_time_grid(1.0, 8);
    JumpSpec spec;
    spec.atoms.push_back({{1.0}, 2.0, NoiseSplit::common});
    spec.atoms.push_back({{-1.0}, 2.0, NoiseSplit::idiosyncratic});
    spec.zeta = ZetaForm::constant(1.0);
    spec.c_nu = 1.0;
    const std::size_t n_paths = 100000;
    const auto worlds = simulate_jump_measure(g, spec, 2, n_paths, 5, 4);

    // sample correlation between the two agents' idiosyncratic counts -> 0
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (const auto& w : worlds) {
        const double x = static_cast<double>(w.idio[0].size());
        const double y = static_cast<double>(w.idio[1].size());
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    const double n = static_cast<double>(n_paths);
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double vx = sxx / n - (sx / n) * (sx / n);
    const double vy = syy / n - (sy / n) * (sy / n);
    const double corr = cov / std::sqrt(vx * vy);
    REQUIRE(std::abs(corr) < 4.0 / std::sqrt(n));

    // within a path, common events are the same object for every agent by
    // construction; check the count bound nu([0,T] x E) <= c_nu T lambda(E)
    double total = 0.0;
    for (const auto& w : worlds) total += static_cast<double>(w.common.size() + w.idio[0].size());
    REQUIRE(total / n <= spec.c_nu * g.horizon * spec.total_weight() + 4 * 2.0 / std::sqrt(n));
}

TEST_CASE("thinning respects a state-scaled intensity and event cell membership") {
    const auto g = build_time_grid(2.0, 8);
    JumpSpec spec;
    spec.atoms.push_back({{0.5}, 4.0, NoiseSplit::common});
    spec.zeta.kind = ZetaForm::Kind::state_scaled;
    spec.zeta.value = 0.5;
    spec.zeta.scale = -0.2;  // self-damping intensity
    spec.c_nu = 1.0;
    const auto worlds = simulate_jump_measure(g, spec, 1, 2000, 19);
    for (const auto& w : worlds) {
        for (const auto& e : w.common) {
            REQUIRE(e.time >= 0.0);
            REQUIRE(e.time <= g.horizon);
            REQUIRE(e.cell == g.cell_of(e.time));
            REQUIRE(e.time >= g.nodes[e.cell]);
            REQUIRE(e.time <= g.nodes[e.cell + 1]);
        }
    }
    // a zeta exceeding c_nu must be flagged as a model violation
    JumpSpec bad = spec;
    bad.zeta = ZetaForm::constant(5.0);
    bad.c_nu = 2.0;
    REQUIRE_THROWS_AS(simulate_jump_measure(g, bad, 1, 10, 1), ModelViolationError);
}

TEST_CASE("compensator integral is the weighted atom sum") {
    JumpSpec spec;
    spec.atoms.push_back({{1.0}, 1.0, NoiseSplit::common});
    spec.atoms.push_back({{2.0}, 2.0, NoiseSplit::common});
    spec.zeta = ZetaForm::constant(0.5);
    spec.c_nu = 1.0;
    MarkState st{{0, 0}};
    REQUIRE(compensator_integral(spec, [](std::size_t, const std::vector<double>&) { return 0.0; },
                                 0.0, st) == 0.0);
    REQUIRE(compensator_integral(spec, [](std::size_t, const std::vector<double>&) { return 1.0; },
                                 0.0, st) == Catch::Approx(1.5));

    JumpSpec one;
    one.atoms.push_back({{1.0}, 3.0, NoiseSplit::common});
    one.zeta = ZetaForm::constant(1.0);
    one.c_nu = 1.0;
    MarkState st1{{0}};
    REQUIRE(compensator_integral(one, [](std::size_t, const std::vector<double>&) { return 2.0; },
                                 0.0, st1) == Catch::Approx(6.0));
}

TEST_CASE("empirical compensator identity for a bounded integrand") {
    // E[ sum_events g(e) ] = int_0^T sum_k g(e_k) zeta lambda_k dt for
    // deterministic g and constant zeta
    const auto g = build_time_grid(1.5, 6);
    JumpSpec spec;
    spec.atoms.push_back({{1.0}, 1.0, NoiseSplit::common});
    spec.atoms.push_back({{-2.0}, 0.5, NoiseSplit::common});
    spec.zeta = ZetaForm::constant(0.8);
    spec.c_nu = 1.0;
    const auto payoff = [](std::size_t, const std::vector<double>& mark) {
        return 1.0 + std::abs(mark[0]);
    };
    const std::size_t n_paths = 100000;
    const auto worlds = simulate_jump_measure(g, spec, 1, n_paths, 23, 4);
    std::vector<double> sums(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        double s = 0.0;
        for (const auto& e : worlds[p].common) s += payoff(e.atom, spec.atoms[e.atom].mark);
        sums[p] = s;
    }
    const auto stat = mean_stat(sums);
    MarkState st{{0, 0}};
    const double expected = g.horizon * compensator_integral(spec, payoff, 0.0, st);
    REQUIRE(std::abs(stat.mean - expected) < 4 * stat.stderror);
}

TEST_CASE("bundle simulation is deterministic in (seed, config)") {
    const auto g = build_time_grid(1.0, 4);
    auto spec = one_atom_spec(2.0);
    spec.atoms.push_back({{1.0, 1.0}, 1.0, NoiseSplit::idiosyncratic});
    const auto b1 = simulate_bundles(g, spec, 1, 3, 50, 99, 1);
    const auto b2 = simulate_bundles(g, spec, 1, 3, 50, 99, 4);
    REQUIRE(b1.size() == b2.size());
    for (std::size_t p = 0; p < b1.size(); ++p) {
        REQUIRE(b1[p].dw == b2[p].dw);
        REQUIRE(b1[p].common_jumps.size() == b2[p].common_jumps.size());
        for (std::size_t e = 0; e < b1[p].common_jumps.size(); ++e)
            REQUIRE(b1[p].common_jumps[e].time == b2[p].common_jumps[e].time);
        for (std::size_t a = 0; a < 3; ++a)
            REQUIRE(b1[p].idio_jumps[a].size() == b2[p].idio_jumps[a].size());
    }
}
