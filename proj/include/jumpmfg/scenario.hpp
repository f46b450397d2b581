#pragma once

// Scenario files: the declarative description of one experiment (time grid,
// market, jump measure, population, claim, solver and verification settings),
// loaded from TOML-grammar text and validated against the model assumptions.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "jumpmfg/claims.hpp"
#include "jumpmfg/grid.hpp"
#include "jumpmfg/jumps.hpp"
#include "jumpmfg/market.hpp"
#include "jumpmfg/projection.hpp"
#include "jumpmfg/toml.hpp"

namespace jumpmfg {

struct SolverSpec {
    enum class Backend { lattice, lsmc };

    Backend backend = Backend::lattice;
    std::size_t n_paths = 4000;
    int degree = 2;              // regression basis degree
    double theta_lo = -1.0;      // brute-force strategy grid
    double theta_hi = 1.0;
    double theta_step = 0.01;
    double u_max = 0.0;          // generator truncation override (0 = default)
};

struct VerifySpec {
    std::vector<std::string> suites;  // subset of the registered suite names
    std::size_t worlds = 2000;        // Monte Carlo worlds for sampled checks
    double tilt_u = 0.25;             // constant jump integrand for density checks
};

struct Scenario {
    std::string name;
    std::string source_path;
    TimeGrid grid;
    MarketSpec market;
    double phi_scalar = 0.0;  // d = 1 market price of risk for the solvers
    JumpSpec jumps;
    PopulationSpec pop;
    ClaimSpec claim;
    SolverSpec solver;
    VerifySpec verify;

    std::function<double(double)> phi_fn() const {
        const MarketSpec m = market;
        return [m](double t) { return m.phi_at(t)[0]; };
    }
};

namespace detail_scenario {

inline double number(const toml::Value& t, const std::string& key, double fallback,
                     std::vector<std::string>& errors, bool required = false) {
    const toml::Value* v = t.find(key);
    if (v == nullptr) {
        if (required) errors.push_back("missing required key '" + key + "'");
        return fallback;
    }
    if (v->kind != toml::Value::Kind::number) {
        errors.push_back("key '" + key + "' must be a number");
        return fallback;
    }
    return v->num;
}

inline std::string text(const toml::Value& t, const std::string& key, const std::string& fallback,
                        std::vector<std::string>& errors, bool required = false) {
    const toml::Value* v = t.find(key);
    if (v == nullptr) {
        if (required) errors.push_back("missing required key '" + key + "'");
        return fallback;
    }
    if (v->kind != toml::Value::Kind::string) {
        errors.push_back("key '" + key + "' must be a string");
        return fallback;
    }
    return v->str;
}

inline std::vector<double> number_array(const toml::Value& t, const std::string& key,
                                        std::vector<std::string>& errors) {
    std::vector<double> out;
    const toml::Value* v = t.find(key);
    if (v == nullptr) return out;
    if (v->kind != toml::Value::Kind::array) {
        errors.push_back("key '" + key + "' must be an array of numbers");
        return out;
    }
    for (const auto& item : v->items) {
        if (item.kind != toml::Value::Kind::number) {
            errors.push_back("key '" + key + "' must contain only numbers");
            return {};
        }
        out.push_back(item.num);
    }
    return out;
}

inline TypeLaw parse_law(const toml::Value& parent, const std::string& key, double fallback,
                         std::vector<std::string>& errors) {
    TypeLaw law = TypeLaw::constant(fallback);
    const toml::Value* t = parent.find(key);
    if (t == nullptr) return law;
    if (!t->is_table()) {
        errors.push_back("population." + key + " must be a table");
        return law;
    }
    const std::string kind = text(*t, "law", "constant", errors, true);
    if (kind == "constant") {
        law = TypeLaw::constant(number(*t, "value", fallback, errors, true));
    } else if (kind == "two_point") {
        law = TypeLaw::two_point(number(*t, "lo", 0.0, errors, true),
                                 number(*t, "hi", 0.0, errors, true),
                                 number(*t, "p_hi", 0.5, errors));
    } else if (kind == "normal" || kind == "lognormal") {
        law.kind = kind == "normal" ? TypeLaw::Kind::normal : TypeLaw::Kind::lognormal;
        law.mu = number(*t, "mu", 0.0, errors, true);
        law.sd = number(*t, "sd", 1.0, errors, true);
        law.clip_min = number(*t, "clip_min", law.clip_min, errors);
        law.clip_max = number(*t, "clip_max", law.clip_max, errors);
    } else {
        errors.push_back("population." + key + ": unknown law '" + kind +
                         "' (constant, two_point, normal, lognormal)");
    }
    return law;
}

inline double zeta_max(const ZetaForm& z) {
    switch (z.kind) {
        case ZetaForm::Kind::constant:
            return z.value;
        case ZetaForm::Kind::piecewise_time: {
            double m = z.values.empty() ? z.value : z.values.front();
            for (double v : z.values) m = std::max(m, v);
            return m;
        }
        case ZetaForm::Kind::state_scaled:
            return z.value;  // runtime-checked; the static bound covers count 0
    }
    return z.value;
}

}  // namespace detail_scenario

// Build a Scenario from parsed configuration text; collects every validation
// failure and throws one ConfigError listing them all.
inline Scenario scenario_from_toml(const toml::Value& root, const std::string& source_path) {
    using namespace detail_scenario;
    std::vector<std::string> errors;
    Scenario sc;
    sc.source_path = source_path;
    sc.name = text(root, "name", "unnamed", errors);

    // grid
    if (const toml::Value* g = root.find("grid"); g != nullptr && g->is_table()) {
        const double horizon = number(*g, "horizon", 1.0, errors, true);
        const double steps = number(*g, "steps", 1.0, errors, true);
        try {
            sc.grid = build_time_grid(horizon, static_cast<std::size_t>(steps));
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    } else {
        errors.emplace_back("missing [grid] table");
    }

    // market (scalar, d = 1: the solvers work in the theta/W-hat parametrization)
    sc.market.d = 1;
    sc.market.sigma = Eigen::MatrixXd::Identity(1, 1);
    sc.market.s0 = {1.0};
    if (const toml::Value* m = root.find("market"); m != nullptr && m->is_table()) {
        if (number(*m, "d", 1.0, errors) != 1.0)
            errors.emplace_back("market.d must be 1: the pipeline solves the scalar-driver game");
        sc.phi_scalar = number(*m, "phi", 0.0, errors, true);
        sc.market.phi = PhiForm::constant({sc.phi_scalar});
        sc.market.phi_bound = number(*m, "phi_bound", std::abs(sc.phi_scalar) + 1.0, errors);
        sc.market.sigma(0, 0) = number(*m, "sigma", 1.0, errors);
        sc.market.s0 = {number(*m, "s0", 1.0, errors)};
    } else {
        errors.emplace_back("missing [market] table");
    }

    // jumps (optional; absent means no jump noise)
    if (const toml::Value* j = root.find("jumps"); j != nullptr && j->is_table()) {
        const std::string zeta_kind = text(*j, "zeta", "constant", errors);
        if (zeta_kind == "constant") {
            sc.jumps.zeta = ZetaForm::constant(number(*j, "zeta_value", 1.0, errors));
        } else if (zeta_kind == "piecewise") {
            sc.jumps.zeta.kind = ZetaForm::Kind::piecewise_time;
            sc.jumps.zeta.times = number_array(*j, "zeta_times", errors);
            sc.jumps.zeta.values = number_array(*j, "zeta_values", errors);
            if (sc.jumps.zeta.times.size() != sc.jumps.zeta.values.size())
                errors.emplace_back("jumps: zeta_times and zeta_values must have equal length");
        } else if (zeta_kind == "state_scaled") {
            sc.jumps.zeta.kind = ZetaForm::Kind::state_scaled;
            sc.jumps.zeta.value = number(*j, "zeta_value", 1.0, errors);
            sc.jumps.zeta.scale = number(*j, "zeta_scale", 0.0, errors);
        } else {
            errors.push_back("jumps: unknown zeta form '" + zeta_kind +
                             "' (constant, piecewise, state_scaled)");
        }
        sc.jumps.c_nu = number(*j, "c_nu", 1.0, errors);
        if (const toml::Value* atoms = j->find("atoms");
            atoms != nullptr && atoms->kind == toml::Value::Kind::table_array) {
            for (const auto& at : atoms->items) {
                JumpAtom a;
                a.mark = number_array(at, "mark", errors);
                a.weight = number(at, "weight", 0.0, errors, true);
                const std::string split = text(at, "split", "common", errors, true);
                if (split == "common")
                    a.split = NoiseSplit::common;
                else if (split == "idiosyncratic")
                    a.split = NoiseSplit::idiosyncratic;
                else
                    errors.push_back("jump atom: unknown split '" + split + "'");
                sc.jumps.atoms.push_back(std::move(a));
            }
        }
        const double zmax = detail_scenario::zeta_max(sc.jumps.zeta);
        if (zmax > sc.jumps.c_nu)
            errors.push_back("jumps: intensity density reaches " + std::to_string(zmax) +
                             " > c_nu = " + std::to_string(sc.jumps.c_nu) +
                             "; the compensator bound requires 0 <= zeta <= c_nu");
        try {
            sc.jumps.validate();
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    }

    // population
    if (const toml::Value* p = root.find("population"); p != nullptr && p->is_table()) {
        sc.pop.n_agents = static_cast<std::size_t>(number(*p, "agents", 64.0, errors));
        sc.pop.x0_law = parse_law(*p, "x0", 0.0, errors);
        sc.pop.alpha_law = parse_law(*p, "alpha", 1.0, errors);
        sc.pop.rho_law = parse_law(*p, "rho", 0.0, errors);
        try {
            sc.pop.validate();
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    } else {
        errors.emplace_back("missing [population] table");
    }

    // claim
    if (const toml::Value* c = root.find("claim"); c != nullptr && c->is_table()) {
        const std::string kind = text(*c, "kind", "zero", errors);
        if (kind == "zero") {
            sc.claim.kind = ClaimSpec::Kind::zero;
        } else if (kind == "stop_loss") {
            sc.claim.kind = ClaimSpec::Kind::stop_loss;
            sc.claim.k1 = number(*c, "k1", 0.0, errors, true);
            sc.claim.k2 = number(*c, "k2", 0.0, errors, true);
        } else if (kind == "capped_linear_count") {
            sc.claim.kind = ClaimSpec::Kind::capped_linear_count;
            sc.claim.unit = number(*c, "unit", 0.0, errors, true);
            sc.claim.count_cap = static_cast<int>(number(*c, "count_cap", 0.0, errors, true));
        } else {
            errors.push_back("claim: unknown kind '" + kind +
                             "'; only bounded claim forms are supported "
                             "(zero, stop_loss, capped_linear_count)");
        }
        const std::string source = text(*c, "source", "all", errors);
        if (source == "all")
            sc.claim.source = ClaimSpec::Source::all;
        else if (source == "common_only")
            sc.claim.source = ClaimSpec::Source::common_only;
        else if (source == "idio_only")
            sc.claim.source = ClaimSpec::Source::idio_only;
        else
            errors.push_back("claim: unknown source '" + source + "'");
        try {
            sc.claim.validate();
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
        if (sc.claim.kind != ClaimSpec::Kind::zero && sc.jumps.n_atoms() == 0)
            errors.emplace_back("claim: a jump-count claim needs at least one jump atom");
    }

    // solver
    if (const toml::Value* s = root.find("solver"); s != nullptr && s->is_table()) {
        const std::string backend = text(*s, "backend", "lattice", errors);
        if (backend == "lattice")
            sc.solver.backend = SolverSpec::Backend::lattice;
        else if (backend == "lsmc")
            sc.solver.backend = SolverSpec::Backend::lsmc;
        else
            errors.push_back("solver: unknown backend '" + backend + "' (lattice, lsmc)");
        sc.solver.n_paths =
            static_cast<std::size_t>(number(*s, "paths", static_cast<double>(sc.solver.n_paths),
                                            errors));
        sc.solver.degree = static_cast<int>(number(*s, "degree", 2.0, errors));
        sc.solver.theta_lo = number(*s, "theta_lo", sc.solver.theta_lo, errors);
        sc.solver.theta_hi = number(*s, "theta_hi", sc.solver.theta_hi, errors);
        sc.solver.theta_step = number(*s, "theta_step", sc.solver.theta_step, errors);
        sc.solver.u_max = number(*s, "u_max", 0.0, errors);
    }

    // verify
    if (const toml::Value* v = root.find("verify"); v != nullptr && v->is_table()) {
        if (const toml::Value* suites = v->find("suites");
            suites != nullptr && suites->kind == toml::Value::Kind::array) {
            for (const auto& item : suites->items) {
                if (item.kind == toml::Value::Kind::string)
                    sc.verify.suites.push_back(item.str);
                else
                    errors.emplace_back("verify.suites must contain strings");
            }
        }
        sc.verify.worlds = static_cast<std::size_t>(
            number(*v, "worlds", static_cast<double>(sc.verify.worlds), errors));
        sc.verify.tilt_u = number(*v, "tilt_u", sc.verify.tilt_u, errors);
    }

    if (!errors.empty()) {
        std::string msg = "scenario '" + source_path + "' is invalid:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return scenario_from_toml(toml::parse(buf.str()), path);
}

}  // namespace jumpmfg
