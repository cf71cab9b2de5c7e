#pragma once

#include <stdexcept>
#include <string>

namespace chaosrc {

/// Numerical blow-up during integration or autonomous forecasting. Carries
/// the zero-based step at which the state first left the finite region.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

/// Linear solve cannot be trusted (singular or near-singular system).
class IllConditionedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data carries no usable signal (e.g. a constant time series).
class DegenerateDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration file problem; the message names the offending key or field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace chaosrc
