#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "chaosrc/cmaes.hpp"
#include "chaosrc/lyapunov.hpp"
#include "chaosrc/reservoir.hpp"
#include "chaosrc/time_series.hpp"

namespace chaosrc {

/// Loss assigned to a candidate whose forecast (or autonomous map) blows up.
/// Finite so the CMA-ES ranking stays well-defined.
inline constexpr double kDivergedPenalty = 1e6;

/// The constraint set fed into the loss: k leading Lyapunov exponents and/or
/// the Kaplan-Yorke dimension. Both absent = unconstrained baseline.
struct InvariantTargets {
    std::optional<Eigen::VectorXd> leading_les;  // descending, 1/time
    std::optional<double> fractal_dimension;

    bool empty() const { return !leading_les && !fractal_dimension; }
};

struct LossConfig {
    double epsilon1 = 1.0;      // invariant term weight
    double epsilon2 = 1.0;      // forecast term weight
    long t_i = 0;               // forecast scoring window, inclusive step indices
    long t_f = 0;
    int m_forecasts = 1;        // M
    long rc_le_steps = 5000;    // steps for the candidate's own exponents
    long rc_le_transient = 500; // autonomous steps before the exponent run

    long span() const { return t_f - t_i + 1; }

    void validate() const {
        if (!(epsilon1 >= 0.0) || !(epsilon2 >= 0.0))
            throw std::invalid_argument("LossConfig: epsilon weights must be >= 0");
        if (!(epsilon1 + epsilon2 > 0.0))
            throw std::invalid_argument("LossConfig: epsilon1 + epsilon2 must be positive");
        if (t_i >= t_f) throw std::invalid_argument("LossConfig: requires t_i < t_f");
        if (m_forecasts < 1) throw std::invalid_argument("LossConfig: m_forecasts must be >= 1");
        if (rc_le_steps < 1) throw std::invalid_argument("LossConfig: rc_le_steps must be >= 1");
        if (rc_le_transient < 0) throw std::invalid_argument("LossConfig: rc_le_transient must be >= 0");
    }
};

/// Invariant-constrained loss:
///   eps1 ||C_u - C_RC||^2
///   + eps2 sum_k sum_{t=t_i}^{t_f} ||u_k^f(t) - u_k(t)||^2 exp(-(t - t_i)/(t_f - t_i)).
/// Only the invariant components present in `targets` enter the first term;
/// exponents are compared after scaling by |lambda_1| of the target so the
/// term is O(1) regardless of the system's time units.
inline double compute_loss(const LossConfig& cfg, const InvariantTargets& targets,
                           const InvariantTargets& rc_invariants,
                           const std::vector<TimeSeries>& forecasts,
                           const std::vector<TimeSeries>& truths) {
    cfg.validate();
    if (forecasts.size() != truths.size() ||
        static_cast<int>(forecasts.size()) != cfg.m_forecasts)
        throw std::invalid_argument("compute_loss: expected M aligned forecast/truth pairs");

    double invariant_term = 0.0;
    if (targets.leading_les) {
        const Eigen::VectorXd& target_les = *targets.leading_les;
        if (!rc_invariants.leading_les ||
            rc_invariants.leading_les->size() < target_les.size())
            throw std::invalid_argument("compute_loss: candidate invariants missing Lyapunov exponents");
        const double scale = std::max(std::abs(target_les[0]), 1e-12);
        for (long i = 0; i < target_les.size(); ++i) {
            const double diff = (target_les[i] - (*rc_invariants.leading_les)[i]) / scale;
            invariant_term += diff * diff;
        }
    }
    if (targets.fractal_dimension) {
        if (!rc_invariants.fractal_dimension)
            throw std::invalid_argument("compute_loss: candidate invariants missing fractal dimension");
        const double diff = *targets.fractal_dimension - *rc_invariants.fractal_dimension;
        invariant_term += diff * diff;
    }

    const long span = cfg.span();
    double forecast_term = 0.0;
    for (std::size_t k = 0; k < forecasts.size(); ++k) {
        const TimeSeries& f = forecasts[k];
        const TimeSeries& u = truths[k];
        if (f.steps() != span || u.steps() != span || f.dim() != u.dim())
            throw std::invalid_argument("compute_loss: forecast/truth must both cover steps t_i..t_f");
        for (long j = 0; j < span; ++j) {
            const double w = std::exp(-static_cast<double>(j) / static_cast<double>(span - 1));
            forecast_term += (f.data.row(j) - u.data.row(j)).squaredNorm() * w;
        }
    }

    return cfg.epsilon1 * invariant_term + cfg.epsilon2 * forecast_term;
}

/// Contiguous chronological split (no shuffling; dynamical continuity
/// matters). The remainder after train and validation goes to test.
struct DataSplit {
    TimeSeries train;
    TimeSeries validation;
    TimeSeries test;
};

inline DataSplit split_data(const TimeSeries& series, double train_frac, double val_frac) {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac <= 1.0))
        throw std::invalid_argument("split_data: fractions must be positive with sum <= 1");
    const long T = series.steps();
    const long n_train = static_cast<long>(std::floor(train_frac * static_cast<double>(T)));
    const long n_val = static_cast<long>(std::floor(val_frac * static_cast<double>(T)));
    const long n_test = T - n_train - n_val;
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw std::invalid_argument("split_data: a split would be empty");
    return DataSplit{series.slice(0, n_train), series.slice(n_train, n_val),
                     series.slice(n_train + n_val, n_test)};
}

/// A validation forecast start: `sync` rows wash the reservoir in, `truth`
/// rows immediately following them score the forecast.
struct ValidationWindow {
    TimeSeries sync;
    TimeSeries truth;
};

/// Drive the reservoir from zero through all but the last row of `sync`.
/// The returned state is aligned so that the first autonomous forecast
/// output corresponds to the row immediately after the sync window.
inline Eigen::VectorXd synchronize_for_forecast(const Reservoir& res, const TimeSeries& sync) {
    if (sync.steps() < 2) throw std::invalid_argument("synchronize_for_forecast: need >= 2 sync rows");
    return synchronize(res, sync.slice(0, sync.steps() - 1), Eigen::VectorXd::Zero(res.size()));
}

/// M windows with starts spread uniformly over the validation split
/// (overlap is allowed when the split is short).
inline std::vector<ValidationWindow> make_validation_windows(const TimeSeries& validation, int m,
                                                             long sync_len, long span) {
    if (m < 1) throw std::invalid_argument("make_validation_windows: need at least one window");
    if (sync_len < 2 || span < 1) throw std::invalid_argument("make_validation_windows: bad window sizes");
    const long window = sync_len + span;
    const long T = validation.steps();
    if (T < window)
        throw std::invalid_argument("make_validation_windows: validation split shorter than one window");

    std::vector<ValidationWindow> out;
    out.reserve(m);
    for (int i = 0; i < m; ++i) {
        const long start =
            m == 1 ? 0 : (static_cast<long>(i) * (T - window)) / static_cast<long>(m - 1);
        out.push_back({validation.slice(start, sync_len), validation.slice(start + sync_len, span)});
    }
    return out;
}

/// Lyapunov spectrum of the trained reservoir's autonomous map, matrix-free.
/// r_start should lie on the driven attractor (e.g. the state after
/// consuming the training series).
inline LyapunovSpectrum rc_lyapunov_spectrum(const Reservoir& res, const ReadoutMatrix& readout,
                                             const Eigen::VectorXd& r_start, int n_exponents,
                                             long n_steps, long n_transient, double dt) {
    LeConfig cfg;
    cfg.n_steps = n_steps;
    cfg.n_transient = n_transient;
    cfg.qr_interval = 1;  // maps re-orthonormalize every step
    cfg.n_exponents = n_exponents;
    return lyapunov_spectrum_map_tangent(
        [&](const Eigen::VectorXd& r) { return autonomous_step(res, readout, r); },
        [&](const Eigen::VectorXd& r, const Eigen::MatrixXd& v) {
            return rc_tangent_apply(res, readout, r, v);
        },
        r_start, cfg, dt);
}

/// Invariants of a trained candidate, matching the components requested in
/// `targets`. Throws DivergenceError if the autonomous map blows up.
inline InvariantTargets compute_rc_invariants(const Reservoir& res, const ReadoutMatrix& readout,
                                              const Eigen::VectorXd& r_start,
                                              const InvariantTargets& targets, const LossConfig& cfg,
                                              double dt, int data_dim) {
    InvariantTargets rc;
    if (targets.empty()) return rc;
    const int k = targets.leading_les ? static_cast<int>(targets.leading_les->size()) : 0;
    const int m = std::max(k, targets.fractal_dimension ? data_dim : 0);
    const LyapunovSpectrum sp =
        rc_lyapunov_spectrum(res, readout, r_start, m, cfg.rc_le_steps, cfg.rc_le_transient, dt);
    if (targets.leading_les) rc.leading_les = sp.exponents.head(k);
    if (targets.fractal_dimension) rc.fractal_dimension = kaplan_yorke_dimension(sp);
    return rc;
}

/// Full candidate evaluation: build -> collect states -> ridge readout ->
/// M validation forecasts -> candidate invariants -> loss. Deterministic in
/// (params, data, seed). A diverged forecast contributes kDivergedPenalty
/// instead of aborting the search; a candidate whose autonomous map diverges
/// while its exponents are measured is scored kDivergedPenalty outright.
inline double evaluate_candidate(const ReservoirParams& params, const TimeSeries& train,
                                 const std::vector<ValidationWindow>& val_windows,
                                 const InvariantTargets& targets, const LossConfig& cfg,
                                 std::uint64_t seed, long washout = 200) {
    cfg.validate();
    if (static_cast<int>(val_windows.size()) != cfg.m_forecasts)
        throw std::invalid_argument("evaluate_candidate: expected M validation windows");

    const Reservoir res = build_reservoir(params, static_cast<int>(train.dim()), seed);
    const StateCollection collected = collect_states(res, train, washout);
    const ReadoutMatrix readout = train_readout(collected.states, collected.targets, params.beta);

    InvariantTargets rc;
    if (!targets.empty()) {
        try {
            rc = compute_rc_invariants(res, readout, collected.final_state, targets, cfg, train.dt,
                                       static_cast<int>(train.dim()));
        } catch (const DivergenceError&) {
            return kDivergedPenalty;
        }
    }

    const long span = cfg.span();
    std::vector<TimeSeries> forecasts;
    std::vector<TimeSeries> truths;
    forecasts.reserve(val_windows.size());
    truths.reserve(val_windows.size());
    double divergence_penalty = 0.0;
    for (const ValidationWindow& w : val_windows) {
        if (w.truth.steps() != span)
            throw std::invalid_argument("evaluate_candidate: validation truth must cover steps t_i..t_f");
        try {
            const Eigen::VectorXd r0 = synchronize_for_forecast(res, w.sync);
            forecasts.push_back(forecast(res, readout, r0, span, train.dt));
            truths.push_back(w.truth);
        } catch (const DivergenceError&) {
            divergence_penalty += kDivergedPenalty;
            forecasts.push_back(w.truth);  // zero-contribution placeholder; the penalty carries the signal
            truths.push_back(w.truth);
        }
    }

    return compute_loss(cfg, targets, rc, forecasts, truths) + divergence_penalty;
}

/// The six searchable hyperparameters in canonical order. Beta and sigma are
/// searched in log10 space.
inline SearchSpace default_reservoir_search_space() {
    SearchSpace s;
    s.axes = {
        {"rho_A", 0.01, 0.25, AxisScale::Linear},
        {"rho_SR", 0.3, 1.4, AxisScale::Linear},
        {"sigma", 1e-3, 2.0, AxisScale::Log10},
        {"sigma_b", -2.0, 2.0, AxisScale::Linear},
        {"leak_rate", 0.05, 1.0, AxisScale::Linear},
        {"beta", 1e-9, 1.0, AxisScale::Log10},
    };
    return s;
}

/// Map a CMA-ES value-space point back onto ReservoirParams; the axes are
/// looked up by name so the search space order is free.
inline ReservoirParams params_from_point(const SearchSpace& space, const Eigen::VectorXd& point,
                                         int reservoir_size) {
    if (point.size() != space.dims())
        throw std::invalid_argument("params_from_point: point has wrong dimension");
    ReservoirParams p;
    p.size = reservoir_size;
    p.rho_A = point[space.index_of("rho_A")];
    p.rho_SR = point[space.index_of("rho_SR")];
    p.sigma = point[space.index_of("sigma")];
    p.sigma_b = point[space.index_of("sigma_b")];
    p.leak_rate = point[space.index_of("leak_rate")];
    p.beta = point[space.index_of("beta")];
    return p;
}

}  // namespace chaosrc
