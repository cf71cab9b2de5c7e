#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chaosrc/parallel.hpp"
#include "chaosrc/random.hpp"

namespace chaosrc {

enum class AxisScale { Linear, Log10 };

struct SearchAxis {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;
    AxisScale scale = AxisScale::Linear;
};

/// Box-bounded search domain. Log10 axes are optimized in exponent space;
/// bounds are inclusive and every candidate handed to the objective is
/// clipped into them.
struct SearchSpace {
    std::vector<SearchAxis> axes;

    int dims() const { return static_cast<int>(axes.size()); }

    void validate() const {
        if (axes.empty()) throw std::invalid_argument("SearchSpace: no axes");
        for (const auto& ax : axes) {
            if (!std::isfinite(ax.lower) || !std::isfinite(ax.upper) || !(ax.lower < ax.upper))
                throw std::invalid_argument("SearchSpace: axis '" + ax.name + "' needs finite lower < upper");
            if (ax.scale == AxisScale::Log10 && !(ax.lower > 0.0))
                throw std::invalid_argument("SearchSpace: log axis '" + ax.name + "' needs positive bounds");
        }
    }

    /// Value -> internal search coordinate (identity or log10).
    double to_search(int i, double value) const {
        return axes[i].scale == AxisScale::Log10 ? std::log10(value) : value;
    }

    double from_search(int i, double s) const {
        return axes[i].scale == AxisScale::Log10 ? std::pow(10.0, s) : s;
    }

    /// Unit-box coordinate in [0,1]^n -> value-space point.
    Eigen::VectorXd decode_unit(const Eigen::VectorXd& unit) const {
        Eigen::VectorXd out(dims());
        for (int i = 0; i < dims(); ++i) {
            const double lo = to_search(i, axes[i].lower);
            const double hi = to_search(i, axes[i].upper);
            out[i] = from_search(i, lo + unit[i] * (hi - lo));
        }
        return out;
    }

    int index_of(const std::string& name) const {
        for (int i = 0; i < dims(); ++i)
            if (axes[i].name == name) return i;
        throw std::invalid_argument("SearchSpace: no axis named '" + name + "'");
    }
};

struct CmaEsConfig {
    int population_size = 0;  // 0 -> 4 + floor(3 ln n)
    int max_generations = 100;
    double initial_step_size = 0.3;  // fraction of the (normalized) box width
    std::uint64_t seed = 0;
    std::optional<double> target_loss;  // stop early once best <= target

    void validate() const {
        if (population_size != 0 && population_size < 4)
            throw std::invalid_argument("CmaEsConfig: population_size must be >= 4 (or 0 for default)");
        if (max_generations < 1) throw std::invalid_argument("CmaEsConfig: max_generations must be >= 1");
        if (!(initial_step_size > 0.0))
            throw std::invalid_argument("CmaEsConfig: initial_step_size must be positive");
    }
};

struct CmaEsRecord {
    int generation = 0;
    int candidate_index = 0;
    double loss = 0.0;
    Eigen::VectorXd point;  // value space, already clipped into bounds
};

struct CmaEsResult {
    Eigen::VectorXd best_point;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<CmaEsRecord> history;
    long evaluations = 0;
};

/// Standard (mu/mu_w, lambda)-CMA-ES with rank-based weighted recombination,
/// cumulative step-size control and covariance adaptation, run in the unit
/// box of the (possibly log-scaled) search coordinates. Sampling happens
/// serially in the generation loop, so parallel and serial evaluation of a
/// deterministic objective produce identical candidate sequences.
template <class Objective>
CmaEsResult cma_es_minimize(Objective&& objective, const SearchSpace& space, const CmaEsConfig& cfg,
                            int n_threads = 1) {
    space.validate();
    cfg.validate();

    const int n = space.dims();
    const int lambda = cfg.population_size > 0
                           ? cfg.population_size
                           : 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(n))));
    const int mu = lambda / 2;

    // Recombination weights and the usual cumulation/learning constants.
    Eigen::VectorXd weights(mu);
    for (int i = 0; i < mu; ++i)
        weights[i] = std::log(static_cast<double>(lambda + 1) / 2.0) - std::log(static_cast<double>(i + 1));
    weights /= weights.sum();
    const double mu_eff = 1.0 / weights.squaredNorm();

    const double c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    const double d_sigma =
        1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma;
    const double c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    const double c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
    const double c_mu = std::min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) /
                                                ((n + 2.0) * (n + 2.0) + mu_eff));
    const double chi_n =
        std::sqrt(static_cast<double>(n)) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    Rng rng(cfg.seed);
    Eigen::VectorXd mean = Eigen::VectorXd::Constant(n, 0.5);
    double sigma = cfg.initial_step_size;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd p_sigma = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd p_c = Eigen::VectorXd::Zero(n);

    CmaEsResult result;
    result.history.reserve(static_cast<std::size_t>(lambda) * cfg.max_generations);
    Eigen::VectorXd best_unit;

    for (int gen = 0; gen < cfg.max_generations; ++gen) {
        // Eigendecomposition of C; n is small so doing it every generation
        // is cheaper than tracking staleness.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig((cov + cov.transpose()) / 2.0);
        const Eigen::MatrixXd basis = eig.eigenvectors();
        const Eigen::VectorXd scales = eig.eigenvalues().cwiseMax(1e-20).cwiseSqrt();

        std::vector<Eigen::VectorXd> xs(lambda);
        std::vector<Eigen::VectorXd> values(lambda);
        for (int k = 0; k < lambda; ++k) {
            Eigen::VectorXd z(n);
            for (int i = 0; i < n; ++i) z[i] = rng.normal();
            Eigen::VectorXd x = mean + sigma * (basis * (scales.asDiagonal() * z));
            xs[k] = x.cwiseMax(0.0).cwiseMin(1.0);  // clip to bounds; the clipped point is evaluated
            values[k] = space.decode_unit(xs[k]);
        }

        std::vector<double> losses(lambda);
        parallel_for(lambda, n_threads, [&](long k) { losses[k] = objective(values[k]); });
        result.evaluations += lambda;

        std::vector<int> order(lambda);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return losses[a] < losses[b]; });

        for (int k = 0; k < lambda; ++k) {
            result.history.push_back({gen, k, losses[k], values[k]});
            if (losses[k] < result.best_loss) {
                result.best_loss = losses[k];
                result.best_point = values[k];
                best_unit = xs[k];
            }
        }

        const Eigen::VectorXd old_mean = mean;
        mean.setZero();
        for (int i = 0; i < mu; ++i) mean += weights[i] * xs[order[i]];

        const Eigen::VectorXd y_w = (mean - old_mean) / sigma;
        const Eigen::MatrixXd cov_inv_sqrt =
            basis * scales.cwiseInverse().asDiagonal() * basis.transpose();
        p_sigma = (1.0 - c_sigma) * p_sigma +
                  std::sqrt(c_sigma * (2.0 - c_sigma) * mu_eff) * (cov_inv_sqrt * y_w);

        const double expected_decay = std::sqrt(
            1.0 - std::pow(1.0 - c_sigma, 2.0 * static_cast<double>(gen + 1)));
        const bool h_sigma =
            p_sigma.norm() / expected_decay < (1.4 + 2.0 / (n + 1.0)) * chi_n;

        p_c = (1.0 - c_c) * p_c;
        if (h_sigma) p_c += std::sqrt(c_c * (2.0 - c_c) * mu_eff) * y_w;

        Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < mu; ++i) {
            const Eigen::VectorXd y = (xs[order[i]] - old_mean) / sigma;
            rank_mu.noalias() += weights[i] * (y * y.transpose());
        }
        const double c1_discount = h_sigma ? 0.0 : c_c * (2.0 - c_c);
        cov = (1.0 - c_1 - c_mu) * cov + c_1 * (p_c * p_c.transpose() + c1_discount * cov) +
              c_mu * rank_mu;

        sigma *= std::exp((c_sigma / d_sigma) * (p_sigma.norm() / chi_n - 1.0));
        sigma = std::min(sigma, 1e6);

        if (cfg.target_loss && result.best_loss <= *cfg.target_loss) break;
    }
    return result;
}

}  // namespace chaosrc
