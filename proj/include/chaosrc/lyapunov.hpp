#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "chaosrc/dynamics.hpp"
#include "chaosrc/errors.hpp"
#include "chaosrc/time_series.hpp"

namespace chaosrc {

/// Lyapunov exponents in descending order, units 1/time.
struct LyapunovSpectrum {
    Eigen::VectorXd exponents;
    long n_steps_used = 0;
    double dt = 0.0;
};

struct LeConfig {
    long n_steps = 100000;
    long n_transient = 2000;  // trajectory spin-up before tangent vectors attach
    int qr_interval = 10;     // steps between re-orthonormalizations
    int n_exponents = 0;      // 0 = full state dimension
};

namespace detail {

/// Shared QR bookkeeping for the Benettin-style methods. Tangent blocks are
/// re-orthonormalized every qr_interval steps; the first 10% of the blocks
/// are kept out of the running log-R sums so the tangent frame can align
/// with the leading directions first.
class QrAccumulator {
public:
    QrAccumulator(long state_dim, int m, long n_steps, int qr_interval)
        : m_(m),
          qr_interval_(qr_interval),
          basis_(Eigen::MatrixXd::Identity(state_dim, m)),
          log_sums_(Eigen::VectorXd::Zero(m)) {
        const long n_blocks = (n_steps + qr_interval - 1) / qr_interval;
        skip_blocks_ = n_blocks / 10;
    }

    Eigen::MatrixXd& basis() { return basis_; }

    /// Call after each propagated step; re-orthonormalizes on block
    /// boundaries and accumulates log |diag R| once past the skip region.
    void step_done(long step_index, long block_steps_so_far) {
        if (block_steps_so_far < qr_interval_) return;
        orthonormalize(step_index);
    }

    void orthonormalize(long step_index) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis_);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(basis_.rows(), m_);
        const Eigen::MatrixXd r = qr.matrixQR().topRows(m_).template triangularView<Eigen::Upper>();
        Eigen::VectorXd diag = r.diagonal();
        for (int i = 0; i < m_; ++i) {
            const double d = std::abs(diag[i]);
            if (!(d > 0.0) || !std::isfinite(d))
                throw IllConditionedError("lyapunov spectrum: degenerate R diagonal at step " +
                                          std::to_string(step_index));
            if (diag[i] < 0.0) q.col(i) = -q.col(i);  // keep tangent orientation continuous
        }
        ++blocks_done_;
        if (blocks_done_ > skip_blocks_) {
            log_sums_ += diag.cwiseAbs().array().log().matrix();
            steps_used_ += block_len_;
        }
        basis_ = q;
        block_len_ = 0;
    }

    void count_step() { ++block_len_; }
    long block_len() const { return block_len_; }
    long steps_used() const { return steps_used_; }
    const Eigen::VectorXd& log_sums() const { return log_sums_; }

private:
    int m_;
    int qr_interval_;
    long skip_blocks_ = 0;
    long blocks_done_ = 0;
    long block_len_ = 0;
    long steps_used_ = 0;
    Eigen::MatrixXd basis_;
    Eigen::VectorXd log_sums_;
};

inline LyapunovSpectrum finish_spectrum(QrAccumulator& acc, double dt) {
    if (acc.block_len() > 0) acc.orthonormalize(-1);
    if (acc.steps_used() <= 0)
        throw std::invalid_argument("lyapunov spectrum: no steps accumulated (n_steps too small)");
    LyapunovSpectrum out;
    out.n_steps_used = acc.steps_used();
    out.dt = dt;
    out.exponents = acc.log_sums() / (static_cast<double>(acc.steps_used()) * dt);
    std::sort(out.exponents.data(), out.exponents.data() + out.exponents.size(),
              [](double a, double b) { return a > b; });
    return out;
}

}  // namespace detail

/// Benettin/QR spectrum of a continuous system: co-integrate n_exponents
/// tangent vectors with the RK4 trajectory using the tangent-linear
/// equations. The augmented scheme below is the exact derivative of the RK4
/// one-step map, so the map and ODE routes agree to integrator accuracy.
/// Exponents are per unit model time.
template <class Rhs, class Jac>
LyapunovSpectrum lyapunov_spectrum_ode_generic(Rhs&& rhs, Jac&& jac, const Eigen::VectorXd& u0,
                                               const LeConfig& cfg, double dt) {
    const long D = u0.size();
    const int m = cfg.n_exponents > 0 ? cfg.n_exponents : static_cast<int>(D);
    if (m < 1 || m > D) throw std::invalid_argument("lyapunov_spectrum_ode: n_exponents must be in [1, D]");
    if (cfg.n_steps < 1) throw std::invalid_argument("lyapunov_spectrum_ode: n_steps must be positive");
    if (cfg.qr_interval < 1) throw std::invalid_argument("lyapunov_spectrum_ode: qr_interval must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("lyapunov_spectrum_ode: dt must be positive");

    Eigen::VectorXd u = u0;
    for (long s = 0; s < cfg.n_transient; ++s) {
        u = rk4_step(rhs, u, dt);
        if (state_diverged(u)) throw DivergenceError("lyapunov_spectrum_ode: diverged during transient", s);
    }

    detail::QrAccumulator acc(D, m, cfg.n_steps, cfg.qr_interval);
    Eigen::MatrixXd& v = acc.basis();
    for (long s = 0; s < cfg.n_steps; ++s) {
        const Eigen::VectorXd k1 = rhs(u);
        const Eigen::MatrixXd g1 = jac(u) * v;
        const Eigen::VectorXd u2 = u + (0.5 * dt) * k1;
        const Eigen::VectorXd k2 = rhs(u2);
        const Eigen::MatrixXd g2 = jac(u2) * (v + (0.5 * dt) * g1);
        const Eigen::VectorXd u3 = u + (0.5 * dt) * k2;
        const Eigen::VectorXd k3 = rhs(u3);
        const Eigen::MatrixXd g3 = jac(u3) * (v + (0.5 * dt) * g2);
        const Eigen::VectorXd u4 = u + dt * k3;
        const Eigen::VectorXd k4 = rhs(u4);
        const Eigen::MatrixXd g4 = jac(u4) * (v + dt * g3);

        u += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        v += (dt / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
        if (state_diverged(u)) throw DivergenceError("lyapunov_spectrum_ode: diverged", s);

        acc.count_step();
        acc.step_done(s, acc.block_len());
    }
    return detail::finish_spectrum(acc, dt);
}

inline LyapunovSpectrum lyapunov_spectrum_ode(const SystemSpec& spec, const Eigen::VectorXd& u0,
                                              const LeConfig& cfg, double dt) {
    spec.validate();
    if (u0.size() != spec.dimension)
        throw std::invalid_argument("lyapunov_spectrum_ode: initial condition has wrong dimension");
    return lyapunov_spectrum_ode_generic(
        [&spec](const Eigen::VectorXd& u) { return system_rhs(spec, u); },
        [&spec](const Eigen::VectorXd& u) { return system_jacobian(spec, u); }, u0, cfg, dt);
}

/// QR spectrum of a discrete map given a matrix-free tangent propagator:
/// apply(r, V) must return J(r) * V where J is the derivative of step at r.
/// Per-step exponents are divided by dt so the result is per unit time.
template <class Step, class TangentApply>
LyapunovSpectrum lyapunov_spectrum_map_tangent(Step&& step, TangentApply&& apply,
                                               const Eigen::VectorXd& r0, const LeConfig& cfg,
                                               double dt) {
    const long N = r0.size();
    const int m = cfg.n_exponents > 0 ? cfg.n_exponents : static_cast<int>(N);
    if (m < 1 || m > N) throw std::invalid_argument("lyapunov_spectrum_map: n_exponents must be in [1, N]");
    if (cfg.n_steps < 1) throw std::invalid_argument("lyapunov_spectrum_map: n_steps must be positive");
    if (cfg.qr_interval < 1) throw std::invalid_argument("lyapunov_spectrum_map: qr_interval must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("lyapunov_spectrum_map: dt must be positive");

    Eigen::VectorXd r = r0;
    for (long s = 0; s < cfg.n_transient; ++s) {
        r = step(r);
        if (state_diverged(r)) throw DivergenceError("lyapunov_spectrum_map: diverged during transient", s);
    }

    detail::QrAccumulator acc(N, m, cfg.n_steps, cfg.qr_interval);
    for (long s = 0; s < cfg.n_steps; ++s) {
        acc.basis() = apply(r, acc.basis());
        r = step(r);
        if (state_diverged(r)) throw DivergenceError("lyapunov_spectrum_map: diverged", s);
        acc.count_step();
        acc.step_done(s, acc.block_len());
    }
    return detail::finish_spectrum(acc, dt);
}

/// Same procedure with an explicit Jacobian function, as convenient for
/// small maps and finite-difference cross-checks.
template <class JacobianAt, class Step>
LyapunovSpectrum lyapunov_spectrum_map(JacobianAt&& jacobian_at, Step&& step,
                                       const Eigen::VectorXd& r0, const LeConfig& cfg, double dt) {
    return lyapunov_spectrum_map_tangent(
        step,
        [&jacobian_at](const Eigen::VectorXd& r, const Eigen::MatrixXd& v) {
            return (jacobian_at(r) * v).eval();
        },
        r0, cfg, dt);
}

/// Kaplan-Yorke dimension of a descending spectrum: alpha + (sum of the
/// first alpha exponents) / |lambda_{alpha+1}|, alpha the largest index with
/// non-negative prefix sum. Edge cases: 0 when the top exponent is negative,
/// the full dimension when the prefix sums never cross zero.
inline double kaplan_yorke_dimension(const Eigen::VectorXd& exponents_descending) {
    const long n = exponents_descending.size();
    if (n == 0) throw std::invalid_argument("kaplan_yorke_dimension: empty spectrum");
    for (long i = 0; i + 1 < n; ++i)
        if (exponents_descending[i + 1] > exponents_descending[i] + 1e-12)
            throw std::invalid_argument("kaplan_yorke_dimension: spectrum not sorted descending");

    if (exponents_descending[0] < 0.0) return 0.0;

    double cum = 0.0;
    double cum_at_alpha = 0.0;
    long alpha = 0;
    for (long i = 0; i < n; ++i) {
        cum += exponents_descending[i];
        if (cum >= 0.0) {
            alpha = i + 1;
            cum_at_alpha = cum;
        } else {
            break;  // descending increments: once negative, always negative
        }
    }
    if (alpha == n) return static_cast<double>(n);
    const double dim = static_cast<double>(alpha) + cum_at_alpha / std::abs(exponents_descending[alpha]);
    return std::min(dim, static_cast<double>(n));
}

inline double kaplan_yorke_dimension(const LyapunovSpectrum& spectrum) {
    return kaplan_yorke_dimension(spectrum.exponents);
}

/// First zero crossing of the autocorrelation of one component; the usual
/// default embedding delay when none is given.
inline int autocorrelation_zero_crossing(const TimeSeries& series, int component = 0) {
    const long T = series.steps();
    if (T < 4) throw std::invalid_argument("autocorrelation_zero_crossing: series too short");
    Eigen::VectorXd x = series.data.col(component);
    x.array() -= x.mean();
    const double var = x.squaredNorm();
    if (!(var > 0.0)) throw DegenerateDataError("autocorrelation_zero_crossing: constant series");
    const long max_lag = T / 2;
    for (long lag = 1; lag < max_lag; ++lag) {
        const double c = x.head(T - lag).dot(x.tail(T - lag)) / var;
        if (c <= 0.0) return static_cast<int>(lag);
    }
    return static_cast<int>(max_lag);
}

/// Rosenstein-style largest-exponent estimate from data alone: delay-embed
/// the first component, pair each base point with its nearest neighbour
/// outside the Theiler window, average the log divergence curves and fit a
/// slope over [fit_begin, fit_end] steps ahead. Returns slope per unit time.
inline double largest_le_from_data(const TimeSeries& series, int embed_dim, int delay,
                                   int theiler_window, long fit_begin, long fit_end) {
    if (embed_dim < 1 || delay < 1) throw std::invalid_argument("largest_le_from_data: bad embedding");
    if (theiler_window < 0) throw std::invalid_argument("largest_le_from_data: bad Theiler window");
    if (fit_begin < 0 || fit_end <= fit_begin)
        throw std::invalid_argument("largest_le_from_data: bad fit range");
    if (!(series.dt > 0.0)) throw std::invalid_argument("largest_le_from_data: series dt must be positive");

    const long T = series.steps();
    const long span = static_cast<long>(embed_dim - 1) * delay;
    const long n_points = T - span - fit_end;
    if (n_points < theiler_window + 2 || n_points < 16)
        throw std::invalid_argument("largest_le_from_data: series too short for embedding and fit window");

    const Eigen::VectorXd x = series.data.col(0);
    const double sd = std::sqrt((x.array() - x.mean()).square().mean());
    if (!(sd > 1e-12 * (1.0 + std::abs(x.mean()))))
        throw DegenerateDataError("largest_le_from_data: constant series");
    // Distances below the floating-point resolution of the record are
    // indistinguishable from zero; clamping keeps exactly recurrent signals
    // (e.g. periodic orbits) from turning rounding noise into fake slope.
    const double noise_floor = 1e-12 * sd;

    auto embedded_dist2 = [&](long i, long j) {
        double d2 = 0.0;
        for (int l = 0; l < embed_dim; ++l) {
            const double d = x[i + static_cast<long>(l) * delay] - x[j + static_cast<long>(l) * delay];
            d2 += d * d;
        }
        return d2;
    };

    // Base points are strided so the nearest-neighbour scan stays tractable
    // on long records; every point remains a neighbour candidate.
    const long max_base = 2000;
    const long stride = std::max<long>(1, n_points / max_base);

    const long n_curve = fit_end + 1;
    Eigen::VectorXd log_sum = Eigen::VectorXd::Zero(n_curve);
    Eigen::VectorXd log_count = Eigen::VectorXd::Zero(n_curve);

    for (long i = 0; i < n_points; i += stride) {
        long best_j = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (long j = 0; j < n_points; ++j) {
            if (std::labs(i - j) <= theiler_window) continue;
            const double d2 = embedded_dist2(i, j);
            if (d2 < best_d2 && d2 > 0.0) {
                best_d2 = d2;
                best_j = j;
            }
        }
        if (best_j < 0) continue;
        for (long k = 0; k < n_curve; ++k) {
            const double d = std::max(std::sqrt(embedded_dist2(i + k, best_j + k)), noise_floor);
            log_sum[k] += std::log(d);
            log_count[k] += 1.0;
        }
    }

    // Least-squares slope of the mean log-divergence curve over the fit range.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    long n_fit = 0;
    for (long k = fit_begin; k <= fit_end; ++k) {
        if (log_count[k] < 1.0) continue;
        const double yk = log_sum[k] / log_count[k];
        const double xk = static_cast<double>(k);
        sx += xk;
        sy += yk;
        sxx += xk * xk;
        sxy += xk * yk;
        ++n_fit;
    }
    if (n_fit < 2) throw DegenerateDataError("largest_le_from_data: no usable divergence curve");
    const double denom = static_cast<double>(n_fit) * sxx - sx * sx;
    if (!(std::abs(denom) > 0.0)) throw DegenerateDataError("largest_le_from_data: degenerate fit range");
    const double slope_per_step = (static_cast<double>(n_fit) * sxy - sx * sy) / denom;
    return slope_per_step / series.dt;
}

}  // namespace chaosrc
