#pragma once

// The projection operator onto the common-noise predictable sigma-field,
// rendered as a cross-agent average per common path, together with the agent
// type laws (x0, alpha, rho) of the heterogeneous population.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "jumpmfg/errors.hpp"
#include "jumpmfg/rng.hpp"

namespace jumpmfg {

// Distribution of one scalar agent characteristic.
struct TypeLaw {
    enum class Kind { constant, two_point, normal, lognormal };
    Kind kind = Kind::constant;
    double value = 0.0;          // constant
    double lo = 0.0, hi = 0.0;   // two_point levels
    double p_hi = 0.5;           // two_point: probability of `hi`
    double mu = 0.0, sd = 1.0;   // normal / lognormal parameters
    double clip_min = -1e300, clip_max = 1e300;

    static TypeLaw constant(double v) {
        TypeLaw l;
        l.value = v;
        return l;
    }
    static TypeLaw two_point(double lo, double hi, double p_hi = 0.5) {
        TypeLaw l;
        l.kind = Kind::two_point;
        l.lo = lo;
        l.hi = hi;
        l.p_hi = p_hi;
        return l;
    }

    double clip(double x) const { return std::min(clip_max, std::max(clip_min, x)); }

    double sample(double u01, double n01) const {
        switch (kind) {
            case Kind::constant:
                return value;
            case Kind::two_point:
                return u01 < p_hi ? hi : lo;
            case Kind::normal:
                return clip(mu + sd * n01);
            case Kind::lognormal:
                return clip(std::exp(mu + sd * n01));
        }
        return value;
    }

    double mean() const {
        switch (kind) {
            case Kind::constant:
                return value;
            case Kind::two_point:
                return p_hi * hi + (1.0 - p_hi) * lo;
            case Kind::normal:
                return quadrature([](double x) { return x; });
            case Kind::lognormal:
                return quadrature([](double x) { return x; });
        }
        return value;
    }

    double mean_inverse() const {
        switch (kind) {
            case Kind::constant:
                return 1.0 / value;
            case Kind::two_point:
                return p_hi / hi + (1.0 - p_hi) / lo;
            default:
                return quadrature([](double x) { return 1.0 / x; });
        }
    }

    // mean of f(X) for the clipped normal/lognormal kinds by fine trapezoidal
    // quadrature over +-10 standard normal deviations
    template <typename F>
    double quadrature(F&& f) const {
        const int n = 4001;
        const double lo_n = -10.0, hi_n = 10.0;
        const double h = (hi_n - lo_n) / (n - 1);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double z = lo_n + h * i;
            const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
            const double x =
                kind == Kind::lognormal ? clip(std::exp(mu + sd * z)) : clip(mu + sd * z);
            acc += w * f(x) * std::exp(-0.5 * z * z);
        }
        return acc * h / std::sqrt(2.0 * std::acos(-1.0));
    }

    // smallest value the law can produce (used to keep alpha away from zero)
    double min_support() const {
        switch (kind) {
            case Kind::constant:
                return value;
            case Kind::two_point:
                return std::min(lo, hi);
            case Kind::normal:
                return std::max(clip_min, -1e300);
            case Kind::lognormal:
                return std::max(clip_min, 0.0);
        }
        return value;
    }
};

struct AgentSample {
    double x0 = 0.0;
    double alpha = 1.0;
    double rho = 0.0;
};

struct PopulationSpec {
    std::size_t n_agents = 1000;
    TypeLaw x0_law = TypeLaw::constant(0.0);
    TypeLaw alpha_law = TypeLaw::constant(1.0);
    TypeLaw rho_law = TypeLaw::constant(0.0);

    void validate() const {
        if (n_agents == 0) throw ConfigError("population: need at least one agent");
        if (alpha_law.kind == TypeLaw::Kind::normal)
            throw ConfigError("population: alpha law must be bounded away from zero "
                              "(constant, two-point or clipped lognormal)");
        if (!(alpha_law.min_support() > 0.0))
            throw ConfigError("population: alpha law must be bounded away from zero; set a "
                              "positive clip or positive levels");
        if (rho_law.kind != TypeLaw::Kind::constant && rho_law.kind != TypeLaw::Kind::two_point)
            throw ConfigError("population: rho law must be constant or two-point");
        const double lo = rho_law.kind == TypeLaw::Kind::constant ? rho_law.value
                                                                  : std::min(rho_law.lo, rho_law.hi);
        const double hi = rho_law.kind == TypeLaw::Kind::constant ? rho_law.value
                                                                  : std::max(rho_law.lo, rho_law.hi);
        if (lo < 0.0 || hi > 1.0) throw ConfigError("population: rho must lie in [0, 1]");
        if (std::abs(rho_law.mean() - 1.0) < 1e-12)
            throw ConfigError(
                "population: E[rho] = 1 is excluded; the mean-field projection fixed point "
                "divides by 1 - E[rho]");
    }
};

inline std::vector<AgentSample> sample_agents(const PopulationSpec& pop, uint64_t seed) {
    pop.validate();
    std::vector<AgentSample> agents(pop.n_agents);
    for (std::size_t a = 0; a < pop.n_agents; ++a) {
        RngStream stream(seed, rng_purpose::agent_types, a);
        AgentSample s;
        s.x0 = pop.x0_law.sample(stream.uniform(0), stream.normal(1));
        s.alpha = pop.alpha_law.sample(stream.uniform(2), stream.normal(3));
        s.rho = pop.rho_law.sample(stream.uniform(4), stream.normal(5));
        agents[a] = s;
    }
    return agents;
}

// Cross-agent average: the law-of-large-numbers estimate of the conditional
// expectation given the common noise.
inline double project_mean(std::span<const double> per_agent) {
    if (per_agent.empty()) throw ConfigError("projection: empty population");
    double s = 0.0;
    for (double v : per_agent) s += v;
    return s / static_cast<double>(per_agent.size());
}

// values laid out [cell][agent]; returns the per-cell projection.
inline std::vector<double> project_pi(std::span<const double> values, std::size_t n_cells,
                                      std::size_t n_agents) {
    if (n_agents == 0) throw ConfigError("projection: empty population");
    if (values.size() != n_cells * n_agents)
        throw SizeError("projection: values size does not match cells x agents");
    std::vector<double> out(n_cells, 0.0);
    for (std::size_t i = 0; i < n_cells; ++i) {
        double s = 0.0;
        for (std::size_t a = 0; a < n_agents; ++a) s += values[i * n_agents + a];
        out[i] = s / static_cast<double>(n_agents);
    }
    return out;
}

// Both renderings of E[int theta dW-hat | F^0]: the cross-agent average of the
// per-agent integrals (left) and the integral of the projected integrand
// against the common increments (right). They agree in the mean-field limit.
struct ProjectedIntegral {
    double lhs = 0.0;
    double rhs = 0.0;
};

// `pi_theta` is the projected integrand per cell; pass an empty span to use
// the in-sample cross-agent average (then the two sides agree by algebra; a
// nontrivial check supplies an analytic projection or one from an independent
// population).
inline ProjectedIntegral project_wealth_integral(std::span<const double> theta,
                                                 std::span<const double> pi_theta,
                                                 std::span<const double> dw_common,
                                                 std::size_t n_agents) {
    const std::size_t n_cells = dw_common.size();
    if (n_agents == 0) throw ConfigError("projection: empty population");
    if (theta.size() != n_cells * n_agents)
        throw SizeError("projection: theta size does not match cells x agents");
    if (!pi_theta.empty() && pi_theta.size() != n_cells)
        throw SizeError("projection: pi_theta size does not match the cell count");
    ProjectedIntegral out;
    for (std::size_t i = 0; i < n_cells; ++i) {
        double pi_i;
        if (pi_theta.empty()) {
            double s = 0.0;
            for (std::size_t a = 0; a < n_agents; ++a) s += theta[i * n_agents + a];
            pi_i = s / static_cast<double>(n_agents);
        } else {
            pi_i = pi_theta[i];
        }
        out.rhs += pi_i * dw_common[i];
    }
    for (std::size_t a = 0; a < n_agents; ++a) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n_cells; ++i) acc += theta[i * n_agents + a] * dw_common[i];
        out.lhs += acc / static_cast<double>(n_agents);
    }
    return out;
}

// Discrete surrogate of the BMO energy int_0^T |z|^2 dt for one trajectory.
inline double bmo_energy(std::span<const double> z_cells, double dt) {
    double s = 0.0;
    for (double z : z_cells) s += z * z * dt;
    return s;
}

}  // namespace jumpmfg
