#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "chaosrc/errors.hpp"
#include "chaosrc/random.hpp"
#include "chaosrc/time_series.hpp"

namespace chaosrc {

/// States with any |u_k| beyond this are treated as numerical blow-up rather
/// than letting NaNs propagate silently.
inline constexpr double kDivergenceBound = 1e6;

enum class SystemKind { Lorenz96, Lorenz63 };

/// Ground-truth ODE system. Lorenz 96 is the working benchmark; Lorenz 63 is
/// a small cross-check system whose exponents are well separated and easy to
/// verify independently.
struct SystemSpec {
    SystemKind kind = SystemKind::Lorenz96;
    int dimension = 10;
    double forcing = 8.0;  // Lorenz 96 only

    // Lorenz 63 only
    double sigma = 10.0;
    double rho = 28.0;
    double b = 8.0 / 3.0;

    static SystemSpec lorenz96(int dimension, double forcing) {
        SystemSpec s;
        s.kind = SystemKind::Lorenz96;
        s.dimension = dimension;
        s.forcing = forcing;
        s.validate();
        return s;
    }

    static SystemSpec lorenz63(double sigma = 10.0, double rho = 28.0, double b = 8.0 / 3.0) {
        SystemSpec s;
        s.kind = SystemKind::Lorenz63;
        s.dimension = 3;
        s.sigma = sigma;
        s.rho = rho;
        s.b = b;
        return s;
    }

    void validate() const {
        if (kind == SystemKind::Lorenz96 && dimension < 4)
            throw std::invalid_argument("SystemSpec: Lorenz 96 needs dimension >= 4 (cyclic indexing)");
        if (kind == SystemKind::Lorenz63 && dimension != 3)
            throw std::invalid_argument("SystemSpec: Lorenz 63 is three-dimensional");
    }
};

struct IntegrationConfig {
    double dt = 0.01;
    long n_steps = 0;
    long n_transient = 0;  // integrated but never recorded
    std::uint64_t seed = 0;
};

/// du_k/dt = -u_{k-1} (u_{k-2} - u_{k+1}) - u_k + F, indices cyclic.
inline Eigen::VectorXd l96_rhs(const Eigen::VectorXd& u, double F) {
    const long D = u.size();
    if (D < 4) throw std::invalid_argument("l96_rhs: dimension must be >= 4");
    Eigen::VectorXd du(D);
    for (long k = 0; k < D; ++k) {
        const long km1 = (k - 1 + D) % D;
        const long km2 = (k - 2 + D) % D;
        const long kp1 = (k + 1) % D;
        du[k] = -u[km1] * (u[km2] - u[kp1]) - u[k] + F;
    }
    return du;
}

/// Tangent-linear of l96_rhs. For D >= 4 the four column indices per row are
/// distinct, so plain assignment is safe. trace = -D for every state.
inline Eigen::MatrixXd l96_jacobian(const Eigen::VectorXd& u, double /*F*/) {
    const long D = u.size();
    if (D < 4) throw std::invalid_argument("l96_jacobian: dimension must be >= 4");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(D, D);
    for (long k = 0; k < D; ++k) {
        const long km1 = (k - 1 + D) % D;
        const long km2 = (k - 2 + D) % D;
        const long kp1 = (k + 1) % D;
        J(k, km1) = -(u[km2] - u[kp1]);
        J(k, km2) = -u[km1];
        J(k, kp1) = u[km1];
        J(k, k) = -1.0;
    }
    return J;
}

inline Eigen::VectorXd l63_rhs(const Eigen::VectorXd& u, double sigma, double rho, double b) {
    if (u.size() != 3) throw std::invalid_argument("l63_rhs: state must be three-dimensional");
    Eigen::VectorXd du(3);
    du[0] = sigma * (u[1] - u[0]);
    du[1] = u[0] * (rho - u[2]) - u[1];
    du[2] = u[0] * u[1] - b * u[2];
    return du;
}

inline Eigen::MatrixXd l63_jacobian(const Eigen::VectorXd& u, double sigma, double rho, double b) {
    if (u.size() != 3) throw std::invalid_argument("l63_jacobian: state must be three-dimensional");
    Eigen::MatrixXd J(3, 3);
    J << -sigma, sigma, 0.0,
         rho - u[2], -1.0, -u[0],
         u[1], u[0], -b;
    return J;
}

inline Eigen::VectorXd system_rhs(const SystemSpec& spec, const Eigen::VectorXd& u) {
    return spec.kind == SystemKind::Lorenz96 ? l96_rhs(u, spec.forcing)
                                             : l63_rhs(u, spec.sigma, spec.rho, spec.b);
}

inline Eigen::MatrixXd system_jacobian(const SystemSpec& spec, const Eigen::VectorXd& u) {
    return spec.kind == SystemKind::Lorenz96 ? l96_jacobian(u, spec.forcing)
                                             : l63_jacobian(u, spec.sigma, spec.rho, spec.b);
}

/// Classical fourth-order Runge-Kutta update. Deterministic; divergence
/// checks belong to the integration drivers, which know the step index.
template <class Rhs>
Eigen::VectorXd rk4_step(Rhs&& rhs, const Eigen::VectorXd& u, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be positive");
    const Eigen::VectorXd k1 = rhs(u);
    const Eigen::VectorXd k2 = rhs(u + (0.5 * dt) * k1);
    const Eigen::VectorXd k3 = rhs(u + (0.5 * dt) * k2);
    const Eigen::VectorXd k4 = rhs(u + dt * k3);
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline bool state_diverged(const Eigen::VectorXd& u) {
    return !u.allFinite() || u.cwiseAbs().maxCoeff() > kDivergenceBound;
}

/// Initial condition near the attractor basin: component-wise uniform around
/// the L96 fixed point (F,...,F), or around a point inside the L63 wings.
/// Always follow with a transient long enough to land on the attractor.
inline Eigen::VectorXd random_initial_condition(const SystemSpec& spec, Rng& rng) {
    Eigen::VectorXd u0(spec.dimension);
    if (spec.kind == SystemKind::Lorenz96) {
        for (int k = 0; k < spec.dimension; ++k) u0[k] = spec.forcing + rng.uniform(-1.0, 1.0);
    } else {
        u0[0] = 1.0 + rng.uniform(-1.0, 1.0);
        u0[1] = 1.0 + rng.uniform(-1.0, 1.0);
        u0[2] = 25.0 + rng.uniform(-1.0, 1.0);
    }
    return u0;
}

/// Integrate n_transient + n_steps RK4 steps and return the final n_steps
/// states; the transient never appears in the output. Row t of the result is
/// the state after (n_transient + t + 1) steps from u0.
inline TimeSeries generate_trajectory(const SystemSpec& spec, const Eigen::VectorXd& u0,
                                      const IntegrationConfig& cfg) {
    spec.validate();
    if (u0.size() != spec.dimension)
        throw std::invalid_argument("generate_trajectory: initial condition has wrong dimension");
    if (!u0.allFinite()) throw std::invalid_argument("generate_trajectory: initial condition not finite");
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("generate_trajectory: dt must be positive");
    if (cfg.n_steps < 0 || cfg.n_transient < 0)
        throw std::invalid_argument("generate_trajectory: negative step count");

    auto rhs = [&spec](const Eigen::VectorXd& u) { return system_rhs(spec, u); };

    Eigen::VectorXd u = u0;
    for (long s = 0; s < cfg.n_transient; ++s) {
        u = rk4_step(rhs, u, cfg.dt);
        if (state_diverged(u)) throw DivergenceError("generate_trajectory: diverged during transient", s);
    }

    TimeSeries out;
    out.dt = cfg.dt;
    out.data.resize(cfg.n_steps, spec.dimension);
    for (long s = 0; s < cfg.n_steps; ++s) {
        u = rk4_step(rhs, u, cfg.dt);
        if (state_diverged(u)) throw DivergenceError("generate_trajectory: diverged", cfg.n_transient + s);
        out.data.row(s) = u.transpose();
    }
    return out;
}

}  // namespace chaosrc
