#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "jumpmfg/measure.hpp"

using namespace jumpmfg;

namespace {

MarketSpec scalar_market(double phi) {
    MarketSpec m;
    m.d = 1;
    m.phi = PhiForm::constant({phi});
    m.phi_bound = std::max(1.0, 2.0 * std::abs(phi));
    m.sigma = Eigen::MatrixXd::Identity(1, 1);
    m.s0 = {1.0};
    return m;
}

JumpSpec one_common_atom(double weight, double zeta = 1.0) {
    JumpSpec spec;
    spec.atoms.push_back({{1.0}, weight, NoiseSplit::common});
    spec.zeta = ZetaForm::constant(zeta);
    spec.c_nu = std::max(1.0, zeta);
    return spec;
}

}  // namespace

TEST_CASE("doleans density: continuous part closed form and unit mean") {
    const auto grid = build_time_grid(1.0, 8);
    const auto market = scalar_market(0.4);
    JumpSpec empty;
    const std::size_t n_paths = 100000;
    const auto bundles = simulate_bundles(grid, empty, 1, 1, n_paths, 101, 4);
    DoleansConfig cfg;
    std::vector<double> dens(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        const auto parts = doleans_density(bundles[p], 0, &market, empty, cfg);
        // independent recomputation of the log density
        double ref = 0.0;
        for (std::size_t i = 0; i < grid.n_steps; ++i)
            ref += -0.4 * bundles[p].dW(i) - 0.5 * 0.16 * grid.dt();
        REQUIRE(parts.log_value() == Catch::Approx(ref).margin(1e-12));
        dens[p] = parts.value();
        REQUIRE(dens[p] > 0.0);
    }
    const auto stat = mean_stat(dens);
    REQUIRE(std::abs(stat.mean - 1.0) < 4 * stat.stderror);
}

TEST_CASE("doleans density: trivial data gives the constant one") {
    const auto grid = build_time_grid(1.0, 4);
    const auto spec = one_common_atom(2.0);
    const auto bundles = simulate_bundles(grid, spec, 1, 1, 50, 9);
    for (auto mode : {DoleansMode::cell_frozen, DoleansMode::event_refined}) {
        DoleansConfig cfg;
        cfg.mode = mode;
        for (const auto& b : bundles)
            REQUIRE(doleans_density(b, 0, nullptr, spec, cfg).value() == 1.0);
    }
}

TEST_CASE("doleans density: constant jump tilt matches the closed form") {
    // U = u0 constant: log density = alpha u0 N_T - (e^{alpha u0}-1) zeta lambda T
    const auto grid = build_time_grid(1.0, 8);
    const auto spec = one_common_atom(2.0, 0.75);
    const double alpha = 2.0, u0 = 0.3;
    DoleansConfig cfg;
    cfg.alpha = alpha;
    cfg.u = [u0](double, const MarkState&, std::size_t) { return u0; };
    const std::size_t n_paths = 100000;
    const auto bundles = simulate_bundles(grid, spec, 1, 1, n_paths, 55, 4);
    std::vector<double> dens(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        const double n_jumps = static_cast<double>(bundles[p].common_jumps.size());
        const double ref = alpha * u0 * n_jumps - std::expm1(alpha * u0) * 0.75 * 2.0;
        for (auto mode : {DoleansMode::cell_frozen, DoleansMode::event_refined}) {
            cfg.mode = mode;
            const auto parts = doleans_density(bundles[p], 0, nullptr, spec, cfg);
            REQUIRE(parts.log_value() == Catch::Approx(ref).margin(1e-10));
        }
        dens[p] = std::exp(ref);
    }
    const auto stat = mean_stat(dens);
    REQUIRE(std::abs(stat.mean - 1.0) < 4 * stat.stderror);
}

TEST_CASE("doleans density: event-refined mode is unbiased for state-driven data") {
    // self-damping intensity and a count-dependent U; the exact compensator
    // integral makes the density mean one
    const auto grid = build_time_grid(1.0, 4);
    JumpSpec spec;
    spec.atoms.push_back({{1.0}, 2.0, NoiseSplit::common});
    spec.zeta.kind = ZetaForm::Kind::state_scaled;
    spec.zeta.value = 0.8;
    spec.zeta.scale = -0.25;
    spec.c_nu = 1.0;
    DoleansConfig cfg;
    cfg.mode = DoleansMode::event_refined;
    cfg.alpha = 1.5;
    cfg.u = [](double, const MarkState& st, std::size_t) {
        return 0.2 / (1.0 + st.total());
    };
    const std::size_t n_paths = 200000;
    const auto bundles = simulate_bundles(grid, spec, 1, 1, n_paths, 77, 4);
    std::vector<double> dens(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p)
        dens[p] = doleans_density(bundles[p], 0, nullptr, spec, cfg).value();
    const auto stat = mean_stat(dens);
    REQUIRE(std::abs(stat.mean - 1.0) < 4 * stat.stderror);
}

TEST_CASE("reweighting the base measure agrees with simulating the tilt") {
    // E-hat[N_T] via density weights vs direct simulation under zeta-hat
    const auto grid = build_time_grid(1.0, 8);
    const auto spec = one_common_atom(1.5, 0.6);
    const double alpha = 2.0, u0 = 0.25;
    const auto u_fn = [u0](double, const MarkState&, std::size_t) { return u0; };
    const std::size_t n_paths = 200000;

    const auto base = simulate_bundles(grid, spec, 1, 1, n_paths, 201, 4);
    DoleansConfig cfg;
    cfg.alpha = alpha;
    cfg.u = u_fn;
    std::vector<double> counts(n_paths), dens(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        counts[p] = static_cast<double>(base[p].common_jumps.size());
        dens[p] = doleans_density(base[p], 0, nullptr, spec, cfg).value();
    }
    const auto reweighted = phat_expectation(counts, dens);

    const auto tilted_spec = tilt_compensator(spec, alpha, u_fn, u0);
    REQUIRE(tilted_spec.c_nu == Catch::Approx(spec.c_nu * std::exp(alpha * u0)));
    const auto tilted = simulate_bundles(grid, tilted_spec, 1, 1, n_paths, 202, 4);
    std::vector<double> tcounts(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p)
        tcounts[p] = static_cast<double>(tilted[p].common_jumps.size());
    const auto direct = mean_stat(tcounts);

    const double expect = 0.6 * 1.5 * std::exp(alpha * u0);  // zeta-hat lambda T
    REQUIRE(std::abs(direct.mean - expect) < 4 * direct.stderror);
    const double se = std::hypot(reweighted.stderror, direct.stderror);
    REQUIRE(std::abs(reweighted.mean - direct.mean) < 4 * se);
}

TEST_CASE("phat_expectation validates its inputs") {
    REQUIRE_THROWS_AS(phat_expectation({1.0, 2.0}, {1.0}), SizeError);
    const auto s = phat_expectation({2.0, 4.0}, {1.0, 1.0});
    REQUIRE(s.mean == Catch::Approx(3.0));
}

TEST_CASE("lattice density is an exact martingale change of measure") {
    const auto grid = build_time_grid(1.0, 8);
    const auto spec = one_common_atom(1.0, 0.8);
    LatticeModel model(grid, spec);
    const double phi = 0.3, alpha = 2.0, u0 = 0.4;
    const auto phi_fn = [phi](double) { return phi; };
    const auto u_fn = [u0](std::size_t, const LatticeState&, std::size_t) { return u0; };

    const std::size_t n_paths = 100000;
    std::vector<double> dens(n_paths), dens_w(n_paths), dens_n(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        const auto world = sample_lattice_world(model, 1, 303, p);
        const double d = lattice_density(model, world, 0, phi_fn, u_fn, alpha);
        REQUIRE(d > 0.0);
        double w_T = 0.0;
        double n_T = 0.0;
        for (std::size_t i = 0; i < grid.n_steps; ++i) {
            w_T += world.dw_sign[i] * std::sqrt(grid.dt());
            if (world.common_jump[i] >= 0) n_T += 1.0;
        }
        dens[p] = d;
        dens_w[p] = d * w_T;
        dens_n[p] = d * n_T;
    }
    const auto m1 = mean_stat(dens);
    REQUIRE(std::abs(m1.mean - 1.0) < 4 * m1.stderror);
    // under the tilted measure W gains drift -phi (exactly, per cell)
    const auto mw = mean_stat(dens_w);
    REQUIRE(std::abs(mw.mean + phi * grid.horizon) < 4 * mw.stderror);
    // and the jump count mean is scaled by exp(alpha u0)
    const auto mn = mean_stat(dens_n);
    const double expect = 0.8 * 1.0 * std::exp(alpha * u0) * grid.horizon;
    REQUIRE(std::abs(mn.mean - expect) < 4 * mn.stderror);
}
