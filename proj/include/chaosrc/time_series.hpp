#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace chaosrc {

/// Uniformly sampled multivariate trajectory; row t is the state at time
/// t*dt. The common currency between the dynamics, reservoir and evaluation
/// code.
struct TimeSeries {
    double dt = 0.0;
    Eigen::MatrixXd data;  // steps x dim

    long steps() const { return data.rows(); }
    long dim() const { return data.cols(); }

    /// Copy of rows [start, start + count).
    TimeSeries slice(long start, long count) const {
        if (start < 0 || count < 0 || start + count > steps())
            throw std::invalid_argument("TimeSeries::slice: range out of bounds");
        return TimeSeries{dt, data.middleRows(start, count)};
    }

    bool all_finite() const { return data.allFinite(); }
};

}  // namespace chaosrc
