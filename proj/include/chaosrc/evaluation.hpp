#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "chaosrc/errors.hpp"
#include "chaosrc/lyapunov.hpp"
#include "chaosrc/parallel.hpp"
#include "chaosrc/reservoir.hpp"
#include "chaosrc/training.hpp"

namespace chaosrc {

/// Long-run per-component mean and standard deviation, taken from a
/// dedicated reference run (never from the forecast window itself).
struct ClimateStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd sigma;
};

inline ClimateStats climate_stats(const TimeSeries& reference) {
    if (reference.steps() < 2) throw std::invalid_argument("climate_stats: reference too short");
    ClimateStats out;
    out.mean = reference.data.colwise().mean();
    out.sigma = ((reference.data.rowwise() - out.mean.transpose()).array().square().colwise().mean())
                    .sqrt()
                    .matrix();
    if (!(out.sigma.minCoeff() > 0.0))
        throw DegenerateDataError("climate_stats: a component has zero variance");
    return out;
}

/// RMSE(t) = sqrt(1/D sum_i ((u_i^f(t) - u_i(t)) / sigma_i)^2), one value
/// per step.
inline Eigen::VectorXd normalized_rmse(const TimeSeries& forecast, const TimeSeries& truth,
                                       const ClimateStats& stats) {
    if (forecast.steps() != truth.steps() || forecast.dim() != truth.dim())
        throw std::invalid_argument("normalized_rmse: forecast and truth shapes differ");
    if (stats.sigma.size() != forecast.dim())
        throw std::invalid_argument("normalized_rmse: climate stats have wrong dimension");
    const Eigen::ArrayXXd scaled =
        (forecast.data - truth.data).array().rowwise() / stats.sigma.transpose().array();
    return scaled.square().rowwise().mean().sqrt().matrix();
}

/// Valid prediction time in Lyapunov-time units plus a censoring flag set
/// when the error never exceeded epsilon within the horizon.
struct VptValue {
    double vpt = 0.0;
    bool censored = false;
};

/// First step where the normalized RMSE exceeds epsilon, scaled into
/// Lyapunov times: VPT = t* dt lambda1. If the threshold is never crossed
/// the horizon value is returned with the censored flag set.
inline VptValue valid_prediction_time(const Eigen::VectorXd& rmse, double epsilon, double dt,
                                      double lambda1) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("valid_prediction_time: epsilon must be positive");
    if (!(lambda1 > 0.0)) throw std::invalid_argument("valid_prediction_time: lambda1 must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("valid_prediction_time: dt must be positive");
    for (long t = 0; t < rmse.size(); ++t)
        if (rmse[t] > epsilon) return {static_cast<double>(t) * dt * lambda1, false};
    return {static_cast<double>(rmse.size()) * dt * lambda1, true};
}

struct VptReport {
    std::vector<double> vpt_values;  // Lyapunov times, one per initial condition
    std::vector<bool> censored;
    double mean = 0.0;
    double median = 0.0;
    double epsilon = 0.0;
    double lambda1 = 0.0;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Forecast that stops at divergence and reports however many rows were
/// produced; a blown-up model simply runs out of valid prediction.
inline TimeSeries forecast_until_divergence(const Reservoir& res, const ReadoutMatrix& readout,
                                            const Eigen::VectorXd& r0, long n_steps, double dt) {
    try {
        return forecast(res, readout, r0, n_steps, dt);
    } catch (const DivergenceError& e) {
        const long usable = std::max<long>(0, e.step());
        TimeSeries partial = forecast(res, readout, r0, usable, dt);
        return partial;
    }
}

}  // namespace detail

/// VPT over n_ics non-overlapping windows of the held-out test series: each
/// window synchronizes on sync_len rows and is scored over the next horizon
/// rows. Per-window forecasts run in parallel; results are reduced in window
/// order. Censored values are included in the mean and flagged.
inline VptReport vpt_distribution(const Reservoir& res, const ReadoutMatrix& readout,
                                  const TimeSeries& test_series, long n_ics, long sync_len,
                                  long horizon, double epsilon, double lambda1,
                                  const ClimateStats& stats, int n_threads = 1) {
    if (n_ics < 1) throw std::invalid_argument("vpt_distribution: need at least one initial condition");
    if (sync_len < 2 || horizon < 1) throw std::invalid_argument("vpt_distribution: bad window sizes");
    const long window = sync_len + horizon;
    if (n_ics * window > test_series.steps())
        throw std::invalid_argument("vpt_distribution: insufficient test data for requested windows");

    VptReport report;
    report.vpt_values.resize(n_ics);
    report.censored.assign(n_ics, false);
    report.epsilon = epsilon;
    report.lambda1 = lambda1;

    parallel_for(n_ics, n_threads, [&](long ic) {
        const long off = ic * window;
        const TimeSeries sync = test_series.slice(off, sync_len);
        const TimeSeries truth = test_series.slice(off + sync_len, horizon);
        const Eigen::VectorXd r0 = synchronize_for_forecast(res, sync);
        const TimeSeries fc = detail::forecast_until_divergence(res, readout, r0, horizon, test_series.dt);
        VptValue v;
        if (fc.steps() == 0) {
            v = {0.0, false};
        } else {
            const Eigen::VectorXd rmse =
                normalized_rmse(fc, truth.slice(0, fc.steps()), stats);
            v = valid_prediction_time(rmse, epsilon, test_series.dt, lambda1);
            if (v.censored && fc.steps() < horizon) v.censored = false;  // diverged, not horizon-limited
        }
        report.vpt_values[ic] = v.vpt;
        report.censored[ic] = v.censored;
    });

    double sum = 0.0;
    for (double v : report.vpt_values) sum += v;
    report.mean = sum / static_cast<double>(n_ics);
    report.median = detail::median_of(report.vpt_values);
    return report;
}

/// Side-by-side invariant comparison of a trained model against the truth.
struct InvariantDiff {
    double rc_lambda1 = 0.0;
    double truth_lambda1 = 0.0;
    double lambda1_rel_error = 0.0;  // |rc - truth| / |truth|
    double rc_dimension = 0.0;
    double truth_dimension = 0.0;
    double ky_abs_error = 0.0;
};

inline InvariantDiff compare_invariants(const LyapunovSpectrum& rc_spectrum,
                                        const LyapunovSpectrum& truth_spectrum) {
    if (rc_spectrum.exponents.size() == 0 || truth_spectrum.exponents.size() == 0)
        throw std::invalid_argument("compare_invariants: empty spectrum");
    InvariantDiff d;
    d.rc_lambda1 = rc_spectrum.exponents[0];
    d.truth_lambda1 = truth_spectrum.exponents[0];
    d.lambda1_rel_error =
        std::abs(d.rc_lambda1 - d.truth_lambda1) / std::max(std::abs(d.truth_lambda1), 1e-300);
    d.rc_dimension = kaplan_yorke_dimension(rc_spectrum);
    d.truth_dimension = kaplan_yorke_dimension(truth_spectrum);
    d.ky_abs_error = std::abs(d.rc_dimension - d.truth_dimension);
    return d;
}

}  // namespace chaosrc
