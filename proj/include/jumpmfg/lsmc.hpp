#pragma once

// Least-squares Monte Carlo backward solver for the same jump-BSDEs as the
// lattice recursion, on simulated path bundles. Samples are (path, agent)
// pairs regressed jointly; heterogeneity enters through per-agent features
// (e.g. 1/alpha, rho) appended to the state basis.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "jumpmfg/errors.hpp"
#include "jumpmfg/jbsde.hpp"
#include "jumpmfg/paths.hpp"

namespace jumpmfg {

struct LsmcConfig {
    int degree = 2;                        // polynomial degree in the Brownian state
    bool count_features = true;            // include per-atom jump counts
    bool allow_ridge_fallback = true;      // ridge-regularize on rank deficiency
    double ridge = 1e-8;
    // per-agent features appended to the basis (and interacted with W)
    std::vector<std::vector<double>> agent_features;
};

struct LsmcSolution {
    std::size_t n_paths = 0, n_agents = 0, n_cells = 0, n_atoms = 0;
    std::vector<double> y0;  // [path][agent]: time-0 value per sample
    std::vector<double> Z;   // [cell][path][agent]
    std::vector<double> U;   // [cell][path][agent][atom]
    BsdeDiagnostics diag;

    double y0_at(std::size_t p, std::size_t a) const { return y0[p * n_agents + a]; }
    double z_at(std::size_t cell, std::size_t p, std::size_t a) const {
        return Z[(cell * n_paths + p) * n_agents + a];
    }
    double u_at(std::size_t cell, std::size_t p, std::size_t a, std::size_t k) const {
        return U[((cell * n_paths + p) * n_agents + a) * n_atoms + k];
    }
};

namespace detail {

// Least-squares fit with a rank check; falls back to ridge when the normal
// equations are rank deficient.
inline Eigen::VectorXd fit_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         const LsmcConfig& cfg, BsdeDiagnostics& diag) {
    Eigen::MatrixXd gram = X.transpose() * X;
    Eigen::VectorXd rhs = X.transpose() * y;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
    if (qr.rank() == gram.rows()) return qr.solve(rhs);
    if (!cfg.allow_ridge_fallback)
        throw LinalgError("lsmc regression: rank-deficient design matrix");
    diag.ridge_fallback = true;
    const double tau = cfg.ridge * std::max(1.0, gram.trace() / gram.rows());
    gram.diagonal().array() += tau;
    return Eigen::LDLT<Eigen::MatrixXd>(gram).solve(rhs);
}

}  // namespace detail

// Backward LSMC pass. `gens` holds one generator per agent; `terminal` maps a
// (path, agent) sample to its terminal value. Brownian dimension must be 1.
inline LsmcSolution solve_lsmc(const std::vector<PathBundle>& bundles, const JumpSpec& spec,
                               const std::vector<GeneratorSpec>& gens,
                               const std::function<double(std::size_t, std::size_t)>& terminal,
                               const LsmcConfig& cfg = {}) {
    if (bundles.empty()) throw ConfigError("lsmc: need at least one path");
    if (bundles.front().d != 1) throw ConfigError("lsmc: only a 1-dim Brownian state is supported");
    const TimeGrid grid = bundles.front().grid;
    const std::size_t n = grid.n_steps;
    const std::size_t n_paths = bundles.size();
    const std::size_t n_agents = gens.size();
    const std::size_t n_atoms = spec.n_atoms();
    const std::size_t n_samples = n_paths * n_agents;
    const double dt = grid.dt();
    if (!cfg.agent_features.empty() && cfg.agent_features.size() != n_agents)
        throw ConfigError("lsmc: agent_features size must match the number of agents");

    // cumulative Brownian value at each node (per path) and per-sample jump
    // counts at the left endpoint of each cell
    std::vector<std::vector<double>> wpath(n_paths, std::vector<double>(n + 1, 0.0));
    for (std::size_t p = 0; p < n_paths; ++p)
        for (std::size_t i = 0; i < n; ++i) wpath[p][i + 1] = wpath[p][i] + bundles[p].dW(i);
    std::vector<std::vector<std::vector<int>>> counts(n_samples);
    for (std::size_t p = 0; p < n_paths; ++p)
        for (std::size_t a = 0; a < n_agents; ++a) {
            const auto merged =
                merge_events(bundles[p].common_jumps,
                             n_atoms == 0 || bundles[p].idio_jumps.empty()
                                 ? std::vector<JumpEvent>{}
                                 : bundles[p].idio_jumps[a]);
            counts[p * n_agents + a] = counts_by_node(grid, merged, n_atoms);
        }

    const std::size_t n_extra = cfg.agent_features.empty() ? 0 : cfg.agent_features.front().size();
    const std::size_t n_feat = 1 + static_cast<std::size_t>(cfg.degree) +
                               (cfg.count_features ? n_atoms : 0) + 2 * n_extra;
    const auto fill_features = [&](std::size_t node, Eigen::MatrixXd& X) {
        for (std::size_t p = 0; p < n_paths; ++p)
            for (std::size_t a = 0; a < n_agents; ++a) {
                const std::size_t s = p * n_agents + a;
                const double w = wpath[p][node];
                Eigen::Index j = 0;
                X(static_cast<Eigen::Index>(s), j++) = 1.0;
                double wp = 1.0;
                for (int d = 0; d < cfg.degree; ++d) {
                    wp *= w;
                    X(static_cast<Eigen::Index>(s), j++) = wp;
                }
                if (cfg.count_features)
                    for (std::size_t k = 0; k < n_atoms; ++k)
                        X(static_cast<Eigen::Index>(s), j++) =
                            static_cast<double>(counts[s][node][k]);
                for (std::size_t e = 0; e < n_extra; ++e) {
                    const double f = cfg.agent_features[a][e];
                    X(static_cast<Eigen::Index>(s), j++) = f;
                    X(static_cast<Eigen::Index>(s), j++) = f * w;
                }
            }
    };

    LsmcSolution sol;
    sol.n_paths = n_paths;
    sol.n_agents = n_agents;
    sol.n_cells = n;
    sol.n_atoms = n_atoms;
    sol.Z.assign(n * n_samples, 0.0);
    sol.U.assign(n * n_samples * n_atoms, 0.0);

    Eigen::VectorXd y(static_cast<Eigen::Index>(n_samples));
    for (std::size_t p = 0; p < n_paths; ++p)
        for (std::size_t a = 0; a < n_agents; ++a)
            y(static_cast<Eigen::Index>(p * n_agents + a)) = terminal(p, a);

    Eigen::MatrixXd X(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(n_feat));
    std::vector<double> u(n_atoms), intens(n_atoms);
    Eigen::VectorXd resp(static_cast<Eigen::Index>(n_samples));
    for (std::size_t i = n; i-- > 0;) {
        const double t = grid.nodes[i];
        fill_features(i, X);

        const Eigen::VectorXd c_exp = detail::fit_least_squares(X, y, cfg, sol.diag);
        const Eigen::VectorXd fitted = X * c_exp;
        const double denom = std::max(1e-300, y.squaredNorm());
        sol.diag.regression_residual = std::max(
            sol.diag.regression_residual, std::sqrt((y - fitted).squaredNorm() / denom));

        // Z: regress Y_{i+1} dW / dt on the same basis
        for (std::size_t p = 0; p < n_paths; ++p) {
            const double dw = bundles[p].dW(i);
            for (std::size_t a = 0; a < n_agents; ++a)
                resp(static_cast<Eigen::Index>(p * n_agents + a)) =
                    y(static_cast<Eigen::Index>(p * n_agents + a)) * dw / dt;
        }
        const Eigen::VectorXd c_z = detail::fit_least_squares(X, resp, cfg, sol.diag);
        const Eigen::VectorXd fitted_z = X * c_z;

        // U_k: regress the jump pseudo-response Y_{i+1}(dN_k - p_k)/(p_k(1-p_k))
        std::vector<Eigen::VectorXd> fitted_u(n_atoms);
        for (std::size_t k = 0; k < n_atoms; ++k) {
            bool any = false;
            for (std::size_t p = 0; p < n_paths && !any; ++p)
                for (std::size_t a = 0; a < n_agents && !any; ++a) {
                    const std::size_t s = p * n_agents + a;
                    MarkState st{counts[s][i]};
                    any = spec.zeta_at(t, st, k) * spec.atoms[k].weight * dt > 0.0;
                }
            if (!any) {
                fitted_u[k] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_samples));
                continue;
            }
            for (std::size_t p = 0; p < n_paths; ++p)
                for (std::size_t a = 0; a < n_agents; ++a) {
                    const std::size_t s = p * n_agents + a;
                    MarkState st{counts[s][i]};
                    const double pk = spec.zeta_at(t, st, k) * spec.atoms[k].weight * dt;
                    if (pk <= 0.0 || pk >= 1.0) {
                        resp(static_cast<Eigen::Index>(s)) = 0.0;
                        continue;
                    }
                    const int dn = counts[s][i + 1][k] - counts[s][i][k];
                    resp(static_cast<Eigen::Index>(s)) =
                        y(static_cast<Eigen::Index>(s)) * (dn - pk) / (pk * (1.0 - pk));
                }
            const Eigen::VectorXd c_u = detail::fit_least_squares(X, resp, cfg, sol.diag);
            fitted_u[k] = X * c_u;
        }

        // backward step per sample
        for (std::size_t p = 0; p < n_paths; ++p)
            for (std::size_t a = 0; a < n_agents; ++a) {
                const std::size_t s = p * n_agents + a;
                MarkState st{counts[s][i]};
                for (std::size_t k = 0; k < n_atoms; ++k) {
                    u[k] = fitted_u[k](static_cast<Eigen::Index>(s));
                    intens[k] = spec.zeta_at(t, st, k) * spec.atoms[k].weight;
                    sol.U[((i * n_paths + p) * n_agents + a) * n_atoms + k] = u[k];
                    sol.diag.max_abs_u = std::max(sol.diag.max_abs_u, std::abs(u[k]));
                }
                const double z = fitted_z(static_cast<Eigen::Index>(s));
                sol.Z[(i * n_paths + p) * n_agents + a] = z;
                y(static_cast<Eigen::Index>(s)) =
                    fitted(static_cast<Eigen::Index>(s)) - gens[a].drift(t, z, u, intens) * dt;
            }
    }
    sol.y0.assign(y.data(), y.data() + y.size());
    return sol;
}

}  // namespace jumpmfg
