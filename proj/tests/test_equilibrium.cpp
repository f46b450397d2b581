#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "jumpmfg/equilibrium.hpp"

using namespace jumpmfg;

namespace {

EquilibriumInput merton_input(double rho = 0.5, double alpha = 2.0) {
    EquilibriumInput in;
    in.grid = build_time_grid(1.0, 8);
    in.phi = [](double) { return 0.2; };
    in.pop.n_agents = 64;
    in.pop.x0_law = TypeLaw::constant(1.0);
    in.pop.alpha_law = TypeLaw::constant(alpha);
    in.pop.rho_law = TypeLaw::constant(rho);
    return in;
}

EquilibriumInput stoploss_input() {
    EquilibriumInput in;
    in.grid = build_time_grid(1.0, 6);
    in.phi = [](double) { return 0.2; };
    in.jumps.atoms.push_back({{0.4}, 0.8, NoiseSplit::common});
    in.jumps.atoms.push_back({{0.3}, 0.6, NoiseSplit::idiosyncratic});
    in.jumps.zeta = ZetaForm::constant(0.9);
    in.jumps.c_nu = 1.0;
    in.claim.kind = ClaimSpec::Kind::stop_loss;
    in.claim.k1 = 0.3;
    in.claim.k2 = 1.0;
    in.pop.x0_law = TypeLaw::constant(0.5);
    in.pop.alpha_law = TypeLaw::constant(2.0);
    in.pop.rho_law = TypeLaw::constant(0.4);
    return in;
}

}  // namespace

TEST_CASE("type enumeration from discrete laws") {
    PopulationSpec pop;
    pop.alpha_law = TypeLaw::two_point(1.0, 4.0, 0.5);
    pop.rho_law = TypeLaw::two_point(0.2, 0.6, 0.25);
    const auto types = enumerate_types(pop);
    REQUIRE(types.size() == 4);
    double w = 0.0;
    for (const auto& t : types) w += t.weight;
    REQUIRE(w == Catch::Approx(1.0));
    pop.alpha_law = TypeLaw{};
    pop.alpha_law.kind = TypeLaw::Kind::lognormal;
    REQUIRE_THROWS_AS(enumerate_types(pop), ConfigError);
}

TEST_CASE("constant-coefficient equilibrium: full pipeline closed forms") {
    const LatticeEquilibrium eq(merton_input());
    const auto root = LatticeState{0, {}};

    // reference value and strategy
    REQUIRE(lattice_y0(eq.model(), eq.reference(0)) == Catch::Approx(-0.01).margin(1e-6));
    REQUIRE(eq.theta_b(0, 0, root) == Catch::Approx(0.1).margin(1e-12));
    REQUIRE(eq.pi_theta_b(0, root) == Catch::Approx(0.1).margin(1e-12));

    // reconstruction arithmetic: Z = 0.5 (0 + 0.5*0.1)/0.5 + 0.5*0.1 = 0.1
    REQUIRE(eq.z_reconstructed(0, 0, root) == Catch::Approx(0.1).margin(1e-12));
    REQUIRE(eq.theta_tilde(0, 0, root) == Catch::Approx(0.2).margin(1e-3));
    REQUIRE(eq.theta_tilde(0, 0, root) ==
            Catch::Approx(closed_form_merton(0.2, 2.0, 0.5, 0.5, 0.5)).margin(1e-12));

    // auxiliary equation: constant terminal rho E[x0] = 0.5 solves to itself
    for (const auto& row : eq.auxiliary(0).Y)
        for (double y : row) REQUIRE(y == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(eq.auxiliary(0).diag.max_abs_u == 0.0);

    REQUIRE(eq.reconstruction_residual() < 1e-14);
}

TEST_CASE("heterogeneous risk aversion: per-type closed form") {
    auto in = merton_input();
    in.pop.alpha_law = TypeLaw::two_point(1.0, 4.0, 0.5);  // E[1/alpha] = 0.625
    const LatticeEquilibrium eq(in);
    REQUIRE(eq.types().size() == 2);
    const auto root = LatticeState{0, {}};
    for (std::size_t t = 0; t < 2; ++t) {
        const double alpha = eq.types()[t].alpha;
        REQUIRE(eq.theta_tilde(t, 0, root) ==
                Catch::Approx(0.2 / alpha + 0.125).margin(1e-3));
        REQUIRE(eq.theta_tilde(t, 0, root) ==
                Catch::Approx(closed_form_merton(0.2, alpha, 0.5, 0.625, 0.5)).margin(1e-12));
    }
}

TEST_CASE("no interaction: rho = 0 collapses to the single-agent strategy") {
    auto in = stoploss_input();
    in.pop.rho_law = TypeLaw::constant(0.0);
    const LatticeEquilibrium eq(in);
    const auto& model = eq.model();
    for (std::size_t i = 0; i < model.grid().n_steps; ++i)
        for (std::size_t s = 0; s < model.node_states(i); ++s) {
            const auto st = model.decode(s);
            int total = 0;
            for (int c : st.counts) total += c;
            if (total > static_cast<int>(i)) continue;
            REQUIRE(eq.z_reconstructed(0, i, st) == 0.0);
            REQUIRE(eq.theta_tilde(0, i, st) == eq.theta_b(0, i, st));
        }
}

TEST_CASE("common-claim collapse: strategies ignore idiosyncratic counts") {
    auto in = stoploss_input();
    in.claim.source = ClaimSpec::Source::common_only;
    const LatticeEquilibrium eq(in);
    const auto& model = eq.model();
    for (std::size_t i = 1; i < model.grid().n_steps; ++i)
        for (std::size_t s = 0; s < model.node_states(i); ++s) {
            auto st = model.decode(s);
            int total = 0;
            for (int c : st.counts) total += c;
            if (total > static_cast<int>(i)) continue;
            auto no_idio = st;
            no_idio.counts[1] = 0;
            REQUIRE(eq.theta_tilde(0, i, st) ==
                    Catch::Approx(eq.theta_tilde(0, i, no_idio)).margin(1e-12));
        }
}

TEST_CASE("stop-loss scenario: reconstruction round trip and terminal assembly") {
    const LatticeEquilibrium eq(stoploss_input());
    REQUIRE(eq.reconstruction_residual() < 1e-12);

    // terminal of the reference equation is B - rho E[B | common state]
    const auto& model = eq.model();
    const std::size_t n = model.grid().n_steps;
    for (std::size_t s = 0; s < model.node_states(n); ++s) {
        const auto st = model.decode(s);
        int total = 0;
        for (int c : st.counts) total += c;
        if (total > static_cast<int>(n)) continue;
        const double b = eq.claim_value(st);
        REQUIRE(eq.reference_terminal(0, st) ==
                Catch::Approx(b - 0.4 * eq.claim_common_expectation(st)).margin(1e-14));
        REQUIRE(std::abs(b) <= eq.input().claim.bound() + 1e-12);
    }
}

TEST_CASE("E[rho] = 1 is rejected with the singularity explanation") {
    auto in = merton_input(1.0);
    try {
        LatticeEquilibrium eq(in);
        FAIL("expected a configuration error");
    } catch (const ConfigError& e) {
        REQUIRE(std::string(e.what()).find("E[rho]") != std::string::npos);
    }
}

TEST_CASE("value function properties") {
    REQUIRE(value_function(1.0, 1.0, 2.0) == -1.0);
    REQUIRE(value_function(0.0, -0.01, 2.0) == Catch::Approx(-std::exp(-0.02)));
    // cash-translation covariance
    REQUIRE(value_function(0.7 + 0.3, -0.2 + 0.3, 1.7) ==
            Catch::Approx(value_function(0.7, -0.2, 1.7)).margin(1e-15));
}

TEST_CASE("mean-field diagnostics: constant-coefficient scenario") {
    const LatticeEquilibrium eq(merton_input());
    const auto diag = run_mfg_diagnostics(eq, 2000, 64, 9001, 4);

    // first-order optimality holds identically
    REQUIRE(diag.fixed_point_exponent < 1e-20);
    // population estimate of F matches the exact projection
    REQUIRE(std::abs(diag.f_residual.mean) < 4 * std::max(diag.f_residual.stderror, 1e-12));
    // Monte Carlo objective matches -exp(-alpha (x0 - Y_0))
    REQUIRE(std::abs(diag.utility_base.mean - diag.utility_formula) <
            3 * diag.utility_base.stderror);
    // no canned deviation improves the objective
    REQUIRE(diag.deviations.size() == 20);
    for (const auto& d : diag.deviations) REQUIRE(d.gap <= 2 * d.stderror);
}

TEST_CASE("mean-field diagnostics: jump-claim scenario") {
    const LatticeEquilibrium eq(stoploss_input());
    const auto diag = run_mfg_diagnostics(eq, 1500, 48, 9002, 4);
    REQUIRE(diag.fixed_point_exponent < 1e-20);
    REQUIRE(std::abs(diag.f_residual.mean) < 4 * std::max(diag.f_residual.stderror, 1e-12));
    REQUIRE(std::abs(diag.utility_base.mean - diag.utility_formula) <
            4 * diag.utility_base.stderror);
    for (const auto& d : diag.deviations) REQUIRE(d.gap <= 2 * d.stderror);
}

TEST_CASE("regression backend reproduces the constant-coefficient strategy") {
    const auto grid = build_time_grid(1.0, 10);
    PopulationSpec pop;
    pop.x0_law = TypeLaw::constant(0.0);
    pop.alpha_law = TypeLaw::constant(2.0);
    pop.rho_law = TypeLaw::constant(0.5);
    ClaimSpec claim;
    const auto eq = solve_mfg_lsmc(grid, 0.2, pop, claim, 32, 500, 4242, 4);
    for (std::size_t a = 0; a < eq.agents.size(); ++a) {
        const auto& st = eq.theta_tilde_by_agent[a];
        REQUIRE(std::abs(st.mean - 0.2) < 3 * std::max(st.stderror, 1e-4));
    }

    ClaimSpec sl;
    sl.kind = ClaimSpec::Kind::stop_loss;
    REQUIRE_THROWS_AS(solve_mfg_lsmc(grid, 0.2, pop, sl, 4, 10, 1), ConfigError);
}

TEST_CASE("regression backend: heterogeneous types") {
    const auto grid = build_time_grid(1.0, 10);
    PopulationSpec pop;
    pop.alpha_law = TypeLaw::two_point(1.0, 4.0, 0.5);
    pop.rho_law = TypeLaw::constant(0.5);
    const auto eq = solve_mfg_lsmc(grid, 0.2, pop, ClaimSpec{}, 64, 500, 777, 4);
    for (std::size_t a = 0; a < eq.agents.size(); ++a) {
        const double target = 0.2 / eq.agents[a].alpha + 0.125;
        const auto& st = eq.theta_tilde_by_agent[a];
        REQUIRE(std::abs(st.mean - target) < 3 * std::max(st.stderror, 2e-3));
    }
}
