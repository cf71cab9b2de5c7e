#pragma once

// Test-only oracles. Each one is an independent route to a quantity the
// library computes some other way; none of them call the implementation
// they are used to check.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace oracles {

/// Central finite-difference Jacobian of a vector field or map.
template <class F>
Eigen::MatrixXd fd_jacobian(F&& f, const Eigen::VectorXd& x, double h = 1e-6) {
    const Eigen::VectorXd f0 = f(x);
    Eigen::MatrixXd j(f0.size(), x.size());
    for (long c = 0; c < x.size(); ++c) {
        Eigen::VectorXd xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        j.col(c) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return j;
}

/// Kaplan-Yorke dimension by a plain cumulative-sum scan over the whole
/// spectrum (no early exit), clamped to [0, n].
inline double ky_by_cumsum(const std::vector<double>& descending) {
    const long n = static_cast<long>(descending.size());
    std::vector<double> prefix(n);
    double s = 0.0;
    for (long i = 0; i < n; ++i) {
        s += descending[i];
        prefix[i] = s;
    }
    long alpha = 0;
    for (long i = 0; i < n; ++i)
        if (prefix[i] >= 0.0) alpha = i + 1;
    if (alpha == 0) return 0.0;
    if (alpha == n) return static_cast<double>(n);
    double dim = static_cast<double>(alpha) + prefix[alpha - 1] / std::abs(descending[alpha]);
    if (dim < 0.0) dim = 0.0;
    if (dim > static_cast<double>(n)) dim = static_cast<double>(n);
    return dim;
}

/// Brute-force ridge readout through an explicit matrix inverse:
/// W = U R^T (R R^T + beta I)^{-1}.
inline Eigen::MatrixXd dense_ridge(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets,
                                   double beta) {
    const long n = states.rows();
    Eigen::MatrixXd gram = states * states.transpose();
    gram += beta * Eigen::MatrixXd::Identity(n, n);
    return targets * states.transpose() * gram.inverse();
}

/// Largest Lyapunov exponent of a map from two nearby trajectories: perturb
/// the start by `delta`, renormalize whenever the gap grows past a ceiling,
/// and average the logarithmic growth.
template <class Step>
double divergence_lambda1(Step&& step, const Eigen::VectorXd& r0, double dt, long n_steps,
                          double delta = 1e-8, double ceiling = 1e-3) {
    Eigen::VectorXd a = r0;
    Eigen::VectorXd b = r0;
    b[0] += delta;
    double total_log = 0.0;
    double ref = delta;
    long steps_done = 0;
    for (long s = 0; s < n_steps; ++s) {
        a = step(a);
        b = step(b);
        const double gap = (a - b).norm();
        if (!(gap > 0.0)) {  // perturbation collapsed; re-seed it
            b = a;
            b[0] += delta;
            ref = delta;
            continue;
        }
        total_log += std::log(gap / ref);
        ++steps_done;
        if (gap > ceiling || gap < delta * 1e-3) {  // renormalize before saturation
            b = a + (delta / gap) * (b - a);
            ref = delta;
        } else {
            ref = gap;
        }
    }
    return steps_done > 0 ? total_log / (static_cast<double>(steps_done) * dt) : 0.0;
}

}  // namespace oracles
