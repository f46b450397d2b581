#pragma once

// Market model: market price of risk, volatility, the drift-adjusted driver
// W_hat = W + int phi dt, the theta = Sigma^T vartheta reparametrization and
// discrete wealth accumulation X_{i+1} = X_i + theta_i . (phi_i dt + dW_i).

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "jumpmfg/errors.hpp"
#include "jumpmfg/paths.hpp"

namespace jumpmfg {

struct PhiForm {
    enum class Kind { constant, piecewise_time };
    Kind kind = Kind::constant;
    std::vector<double> value;                // d entries
    std::vector<double> times;                // piecewise breakpoints
    std::vector<std::vector<double>> levels;  // piecewise levels, d entries each

    std::vector<double> at(double t) const {
        if (kind == Kind::constant) return value;
        std::vector<double> v = levels.empty() ? value : levels.front();
        for (std::size_t i = 0; i < times.size(); ++i)
            if (t >= times[i]) v = levels[i];
        return v;
    }

    static PhiForm constant(std::vector<double> v) {
        PhiForm f;
        f.value = std::move(v);
        return f;
    }
};

struct MarketSpec {
    std::size_t d = 1;
    PhiForm phi;
    double phi_bound = 1.0;          // declared bound on |phi|
    Eigen::MatrixXd sigma;           // constant d x d volatility
    std::vector<double> s0;          // initial prices, positive

    // Left-endpoint evaluation with bound check.
    std::vector<double> phi_at(double t) const {
        auto v = phi.at(t);
        if (v.size() != d) throw ConfigError("market: phi dimension mismatch");
        double norm2 = 0.0;
        for (double x : v) norm2 += x * x;
        if (norm2 > phi_bound * phi_bound * (1.0 + 1e-12))
            throw ModelViolationError("market price of risk exceeds declared bound at t=" +
                                      std::to_string(t));
        return v;
    }

    void validate() const {
        if (d < 1) throw ConfigError("market: d must be >= 1");
        if (sigma.rows() != static_cast<Eigen::Index>(d) ||
            sigma.cols() != static_cast<Eigen::Index>(d))
            throw ConfigError("market: sigma must be d x d");
        for (double s : s0)
            if (!(s > 0.0)) throw ConfigError("market: initial prices must be positive");
        phi_at(0.0);
    }
};

enum class StrategyParam { theta, vartheta };

// Per-cell strategy values on one path; values for cell i are computed from
// information up to node i (left endpoint).
struct StrategyPath {
    std::size_t d = 1;
    std::vector<double> values;  // [cell][coord], flat
    StrategyParam param = StrategyParam::theta;

    std::size_t n_cells() const { return d == 0 ? 0 : values.size() / d; }

    double at(std::size_t cell, std::size_t coord = 0) const { return values[cell * d + coord]; }
};

namespace detail {
inline Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m, const char* what) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible()) throw LinalgError(std::string(what) + ": singular matrix");
    return lu.inverse();
}
}  // namespace detail

// theta = Sigma^T vartheta  /  vartheta = (Sigma^T)^{-1} theta, constant Sigma.
inline StrategyPath reparametrize(const StrategyPath& s, const Eigen::MatrixXd& sigma) {
    const auto d = static_cast<Eigen::Index>(s.d);
    if (sigma.rows() != d || sigma.cols() != d)
        throw ConfigError("reparametrize: sigma dimension mismatch");
    Eigen::MatrixXd map;
    StrategyPath out = s;
    if (s.param == StrategyParam::vartheta) {
        map = sigma.transpose();
        out.param = StrategyParam::theta;
    } else {
        map = detail::checked_inverse(sigma.transpose(), "reparametrize");
        out.param = StrategyParam::vartheta;
    }
    const std::size_t n = s.n_cells();
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd v(d);
        for (Eigen::Index c = 0; c < d; ++c) v[c] = s.at(i, static_cast<std::size_t>(c));
        const Eigen::VectorXd w = map * v;
        for (Eigen::Index c = 0; c < d; ++c)
            out.values[i * s.d + static_cast<std::size_t>(c)] = w[c];
    }
    return out;
}

// Per-cell increments of W_hat = W + int phi dt on one path.
inline std::vector<double> w_hat_increments(const PathBundle& bundle, const MarketSpec& market) {
    const std::size_t n = bundle.grid.n_steps, d = market.d;
    const double dt = bundle.grid.dt();
    std::vector<double> dwh(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto phi = market.phi_at(bundle.grid.nodes[i]);
        for (std::size_t c = 0; c < d; ++c) dwh[i * d + c] = bundle.dW(i, c) + phi[c] * dt;
    }
    return dwh;
}

// Exact discrete accumulation: X_T = x0 + sum_i theta_i . dWhat_i.
inline std::vector<double> wealth_path(double x0, const StrategyPath& theta,
                                       const MarketSpec& market, const PathBundle& bundle) {
    if (theta.param != StrategyParam::theta)
        throw ConfigError("wealth_path: strategy must be in the theta parametrization");
    const std::size_t n = bundle.grid.n_steps;
    if (theta.n_cells() != n) throw ConfigError("wealth_path: strategy/grid cell mismatch");
    const auto dwh = w_hat_increments(bundle, market);
    std::vector<double> x(n + 1);
    x[0] = x0;
    for (std::size_t i = 0; i < n; ++i) {
        double gain = 0.0;
        for (std::size_t c = 0; c < market.d; ++c) gain += theta.at(i, c) * dwh[i * market.d + c];
        x[i + 1] = x[i] + gain;
    }
    return x;
}

}  // namespace jumpmfg
