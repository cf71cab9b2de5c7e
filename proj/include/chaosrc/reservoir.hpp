#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "chaosrc/errors.hpp"
#include "chaosrc/random.hpp"
#include "chaosrc/time_series.hpp"

namespace chaosrc {

/// The searchable reservoir hyperparameters.
struct ReservoirParams {
    int size = 400;          // N
    double rho_A = 0.02;     // adjacency density in (0, 1]
    double rho_SR = 0.9;     // target spectral radius
    double sigma = 0.1;      // input scale; W_in entries uniform on [-sigma, sigma]
    double sigma_b = 0.0;    // input bias added to every unit
    double leak_rate = 1.0;  // alpha in (0, 1]
    double beta = 1e-6;      // ridge regularizer >= 0

    void validate() const {
        if (size < 10) throw std::invalid_argument("ReservoirParams: size must be >= 10");
        if (!(rho_A > 0.0 && rho_A <= 1.0)) throw std::invalid_argument("ReservoirParams: rho_A must be in (0, 1]");
        if (!(rho_SR > 0.0)) throw std::invalid_argument("ReservoirParams: rho_SR must be positive");
        if (!(sigma > 0.0)) throw std::invalid_argument("ReservoirParams: sigma must be positive");
        if (!std::isfinite(sigma_b)) throw std::invalid_argument("ReservoirParams: sigma_b must be finite");
        if (!(leak_rate > 0.0 && leak_rate <= 1.0))
            throw std::invalid_argument("ReservoirParams: leak_rate must be in (0, 1]");
        if (!(beta >= 0.0)) throw std::invalid_argument("ReservoirParams: beta must be >= 0");
    }
};

/// Instantiated network. A and W_in are fixed at construction and never
/// trained; the whole object is a pure function of (params, input_dim, seed).
struct Reservoir {
    Eigen::SparseMatrix<double> A;  // N x N
    Eigen::MatrixXd W_in;           // N x D
    ReservoirParams params;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(A.rows()); }
    int input_dim() const { return static_cast<int>(W_in.cols()); }
};

/// Trained linear readout, D x N.
struct ReadoutMatrix {
    Eigen::MatrixXd W_out;
};

/// Largest eigenvalue magnitude estimated by block power iteration. A
/// two-column block is carried so that a dominant complex-conjugate pair
/// (common for random sparse matrices) converges as well as a real leader.
inline double spectral_radius(const Eigen::SparseMatrix<double>& A, int max_iters = 1000,
                              double tol = 1e-6, std::uint64_t seed = 0x5eed) {
    const long n = A.rows();
    if (n == 0 || A.nonZeros() == 0) return 0.0;

    Rng rng(seed);
    Eigen::MatrixXd v(n, 2);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j) v(i, j) = rng.uniform(-1.0, 1.0);

    double estimate = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Eigen::MatrixXd w = A * v;
        if (w.norm() < 1e-290) return 0.0;
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
        v = qr.householderQ() * Eigen::MatrixXd::Identity(n, 2);

        // Modulus of the dominant eigenvalue of the 2x2 projected matrix.
        const Eigen::Matrix2d h = v.transpose() * (A * v);
        const double tr = h.trace();
        const double det = h.determinant();
        const double disc = tr * tr - 4.0 * det;
        double current;
        if (disc >= 0.0) {
            const double root = std::sqrt(disc);
            current = std::max(std::abs(0.5 * (tr + root)), std::abs(0.5 * (tr - root)));
        } else {
            current = std::sqrt(det);  // complex pair: |lambda|^2 = det
        }
        if (it > 0 && std::abs(current - estimate) <= tol * std::max(current, 1e-30)) return current;
        estimate = current;
    }
    return estimate;
}

/// Sample the network: Erdos-Renyi adjacency with density rho_A and uniform
/// [-1, 1] weights, rescaled to the target spectral radius; dense W_in
/// uniform on [-sigma, sigma]. Deterministic in (params, input_dim, seed).
/// A pathologically sparse draw whose spectral radius vanishes is retried
/// with seed+1, up to five retries.
inline Reservoir build_reservoir(const ReservoirParams& params, int input_dim, std::uint64_t seed) {
    params.validate();
    if (input_dim < 1) throw std::invalid_argument("build_reservoir: input_dim must be >= 1");
    const int n = params.size;

    for (int attempt = 0; attempt <= 5; ++attempt) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(attempt);

        Rng rng_a(derive_seed(s, "adjacency"));
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(static_cast<std::size_t>(params.rho_A * n * n * 1.2) + 16);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (rng_a.uniform01() < params.rho_A) triplets.emplace_back(i, j, rng_a.uniform(-1.0, 1.0));

        Eigen::SparseMatrix<double> a(n, n);
        a.setFromTriplets(triplets.begin(), triplets.end());
        a.makeCompressed();

        const double sr = spectral_radius(a, 1000, 1e-6, derive_seed(s, "sr-probe"));
        if (sr <= 1e-12) continue;
        a *= params.rho_SR / sr;

        Rng rng_w(derive_seed(s, "input-weights"));
        Eigen::MatrixXd w_in(n, input_dim);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < input_dim; ++j) w_in(i, j) = rng_w.uniform(-params.sigma, params.sigma);

        return Reservoir{std::move(a), std::move(w_in), params, s};
    }
    throw std::runtime_error("build_reservoir: adjacency spectral radius vanished for 6 consecutive seeds");
}

namespace detail {

/// One leaky-tanh update without argument checking; shared by the public
/// entry points and the autonomous hot loops.
inline Eigen::VectorXd drive_step(const Reservoir& res, const Eigen::VectorXd& r_prev,
                                  const Eigen::VectorXd& u_prev) {
    const double a = res.params.leak_rate;
    Eigen::VectorXd z = res.A * r_prev;
    z.noalias() += res.W_in * u_prev;
    z.array() += res.params.sigma_b;
    return a * z.array().tanh().matrix() + (1.0 - a) * r_prev;
}

}  // namespace detail

/// r = alpha tanh(A r_prev + W_in u_prev + sigma_b) + (1 - alpha) r_prev.
inline Eigen::VectorXd drive(const Reservoir& res, const Eigen::VectorXd& r_prev,
                             const Eigen::VectorXd& u_prev) {
    if (r_prev.size() != res.size()) throw std::invalid_argument("drive: reservoir state has wrong size");
    if (u_prev.size() != res.input_dim()) throw std::invalid_argument("drive: input has wrong dimension");
    if (!r_prev.allFinite() || !u_prev.allFinite()) throw std::invalid_argument("drive: non-finite input");
    return detail::drive_step(res, r_prev, u_prev);
}

/// Open-loop washout: drive the reservoir through the whole series and
/// return the final state. An empty series returns r_init unchanged.
inline Eigen::VectorXd synchronize(const Reservoir& res, const TimeSeries& series,
                                   const Eigen::VectorXd& r_init) {
    if (series.steps() > 0 && series.dim() != res.input_dim())
        throw std::invalid_argument("synchronize: series dimension does not match reservoir input");
    Eigen::VectorXd r = r_init;
    for (long t = 0; t < series.steps(); ++t) r = drive(res, r, series.data.row(t).transpose());
    return r;
}

/// Reservoir states aligned with their regression targets: column t holds
/// the state that has consumed u(0..t-1), to be mapped onto u(t). The first
/// `washout` states are discarded. `final_state` has consumed the whole
/// series, i.e. it is aligned one row past the end.
struct StateCollection {
    Eigen::MatrixXd states;   // N x (T - washout)
    Eigen::MatrixXd targets;  // D x (T - washout)
    Eigen::VectorXd final_state;
};

inline StateCollection collect_states(const Reservoir& res, const TimeSeries& series, long washout) {
    const long T = series.steps();
    if (washout < 0 || washout >= T)
        throw std::invalid_argument("collect_states: washout must be non-negative and < series length");
    if (series.dim() != res.input_dim())
        throw std::invalid_argument("collect_states: series dimension does not match reservoir input");

    const long n_cols = T - washout;
    StateCollection out;
    out.states.resize(res.size(), n_cols);
    out.targets.resize(series.dim(), n_cols);

    Eigen::VectorXd r = Eigen::VectorXd::Zero(res.size());
    long col = 0;
    if (washout == 0) {  // degenerate alignment: the initial state pairs with u(0)
        out.states.col(0) = r;
        out.targets.col(0) = series.data.row(0).transpose();
        col = 1;
    }
    for (long t = 1; t < T; ++t) {
        r = detail::drive_step(res, r, series.data.row(t - 1).transpose());
        if (t >= washout) {
            out.states.col(col) = r;
            out.targets.col(col) = series.data.row(t).transpose();
            ++col;
        }
    }
    out.final_state = detail::drive_step(res, r, series.data.row(T - 1).transpose());
    return out;
}

/// Ridge readout W_out = U R^T (R R^T + beta I)^{-1}, solved through an LDLT
/// factorization of the Gram matrix rather than an explicit inverse.
inline ReadoutMatrix train_readout(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets,
                                   double beta) {
    if (states.cols() != targets.cols())
        throw std::invalid_argument("train_readout: states and targets must have equal column counts");
    if (states.cols() < 1) throw std::invalid_argument("train_readout: need at least one sample");
    if (!(beta >= 0.0)) throw std::invalid_argument("train_readout: beta must be >= 0");

    const long n = states.rows();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(states);
    gram.diagonal().array() += beta;

    Eigen::LDLT<Eigen::MatrixXd, Eigen::Lower> ldlt(gram);
    const Eigen::VectorXd d = ldlt.vectorD();
    const double d_max = d.cwiseAbs().maxCoeff();
    const double d_min = d.minCoeff();
    const bool unreliable = !(d_min > 0.0) || (beta == 0.0 && d_min <= d_max * 1e-13);
    if (unreliable)
        throw IllConditionedError(
            "train_readout: state Gram matrix is numerically singular; use beta > 0");

    ReadoutMatrix out;
    out.W_out = ldlt.solve(states * targets.transpose()).transpose();
    if (!out.W_out.allFinite()) throw IllConditionedError("train_readout: solve produced non-finite readout");
    return out;
}

/// One step of the closed-loop (autonomous) map r -> drive(r, W_out r).
inline Eigen::VectorXd autonomous_step(const Reservoir& res, const ReadoutMatrix& readout,
                                       const Eigen::VectorXd& r) {
    return detail::drive_step(res, r, readout.W_out * r);
}

/// Run the autonomous map for n_steps; output row t is W_out r(t+1), i.e.
/// the first row equals W_out drive(r0, W_out r0).
inline TimeSeries forecast(const Reservoir& res, const ReadoutMatrix& readout,
                           const Eigen::VectorXd& r0, long n_steps, double dt) {
    if (r0.size() != res.size()) throw std::invalid_argument("forecast: reservoir state has wrong size");
    if (n_steps < 0) throw std::invalid_argument("forecast: n_steps must be non-negative");
    const long d = readout.W_out.rows();

    TimeSeries out;
    out.dt = dt;
    out.data.resize(n_steps, d);

    Eigen::VectorXd r = r0;
    Eigen::VectorXd u = readout.W_out * r;
    for (long s = 0; s < n_steps; ++s) {
        r = detail::drive_step(res, r, u);
        u.noalias() = readout.W_out * r;
        if (!u.allFinite() || u.cwiseAbs().maxCoeff() > kDivergenceBound)
            throw DivergenceError("forecast: autonomous run diverged", s);
        out.data.row(s) = u.transpose();
    }
    return out;
}

/// Derivative of the autonomous map at r:
///   J = alpha diag(1 - tanh^2(z)) (A + W_in W_out) + (1 - alpha) I,
///   z = A r + W_in (W_out r) + sigma_b.
inline Eigen::MatrixXd rc_jacobian(const Reservoir& res, const ReadoutMatrix& readout,
                                   const Eigen::VectorXd& r) {
    if (r.size() != res.size()) throw std::invalid_argument("rc_jacobian: reservoir state has wrong size");
    const double a = res.params.leak_rate;
    Eigen::VectorXd z = res.A * r;
    z.noalias() += res.W_in * (readout.W_out * r);
    z.array() += res.params.sigma_b;
    const Eigen::ArrayXd gain = 1.0 - z.array().tanh().square();

    Eigen::MatrixXd j = Eigen::MatrixXd(res.A) + res.W_in * readout.W_out;
    j = (a * gain).matrix().asDiagonal() * j;
    j.diagonal().array() += 1.0 - a;
    return j;
}

/// rc_jacobian(r) * V without forming the N x N matrix; this is what makes
/// Lyapunov spectra of large reservoirs affordable.
inline Eigen::MatrixXd rc_tangent_apply(const Reservoir& res, const ReadoutMatrix& readout,
                                        const Eigen::VectorXd& r, const Eigen::MatrixXd& tangents) {
    const double a = res.params.leak_rate;
    Eigen::VectorXd z = res.A * r;
    z.noalias() += res.W_in * (readout.W_out * r);
    z.array() += res.params.sigma_b;
    const Eigen::ArrayXd gain = a * (1.0 - z.array().tanh().square());

    Eigen::MatrixXd av = res.A * tangents;
    av.noalias() += res.W_in * (readout.W_out * tangents);
    return gain.matrix().asDiagonal() * av + (1.0 - a) * tangents;
}

}  // namespace chaosrc
