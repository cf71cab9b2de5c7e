#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "chaosrc/dynamics.hpp"
#include "chaosrc/lyapunov.hpp"
#include "chaosrc/random.hpp"
#include "oracles.hpp"

using namespace chaosrc;

namespace {

/// Reference L96 spectrum (D=10, F=8), computed once and shared.
const LyapunovSpectrum& l96_spectrum() {
    static const LyapunovSpectrum sp = [] {
        const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
        Rng rng(derive_seed(42, "l96-le"));
        LeConfig cfg;
        cfg.n_steps = 100000;
        cfg.n_transient = 2000;
        cfg.qr_interval = 10;
        return lyapunov_spectrum_ode(spec, random_initial_condition(spec, rng), cfg, 0.01);
    }();
    return sp;
}

TimeSeries l96_series(long n_steps, std::uint64_t seed) {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    Rng rng(seed);
    IntegrationConfig cfg;
    cfg.dt = 0.01;
    cfg.n_steps = n_steps;
    cfg.n_transient = 2000;
    return generate_trajectory(spec, random_initial_condition(spec, rng), cfg);
}

}  // namespace

TEST_CASE("linear diagonal flow has analytic exponents") {
    Eigen::VectorXd rates(4);
    rates << 0.5, -0.3, 2.0, -1.2;
    const Eigen::MatrixXd j = rates.asDiagonal();
    LeConfig cfg;
    cfg.n_steps = 20000;
    cfg.n_transient = 0;
    cfg.qr_interval = 10;
    // Trajectory pinned at the fixed point; the tangent dynamics alone carry
    // the spectrum (the state itself would overflow for positive rates).
    const LyapunovSpectrum sp = lyapunov_spectrum_ode_generic(
        [&](const Eigen::VectorXd& u) { return (rates.array() * u.array()).matrix().eval(); },
        [&](const Eigen::VectorXd&) { return j; }, Eigen::VectorXd::Zero(4), cfg, 0.005);

    Eigen::VectorXd expected(4);
    expected << 2.0, 0.5, -0.3, -1.2;
    REQUIRE((sp.exponents - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("L96 exponent sum equals the Jacobian trace") {
    const LyapunovSpectrum& sp = l96_spectrum();
    REQUIRE(sp.exponents.sum() == Catch::Approx(-10.0).margin(0.1));
}

TEST_CASE("L96 spectrum has three positive, one zero, six negative exponents") {
    const LyapunovSpectrum& sp = l96_spectrum();
    int positive = 0, zeroish = 0, negative = 0;
    for (long i = 0; i < sp.exponents.size(); ++i) {
        const double le = sp.exponents[i];
        if (le > 0.02)
            ++positive;
        else if (le < -0.02)
            ++negative;
        else
            ++zeroish;
    }
    REQUIRE(positive == 3);
    REQUIRE(zeroish == 1);
    REQUIRE(negative == 6);
}

TEST_CASE("Lorenz 63 cross-check: top exponent and trace sum") {
    const SystemSpec spec = SystemSpec::lorenz63();
    Rng rng(derive_seed(9, "l63"));
    LeConfig cfg;
    cfg.n_steps = 200000;
    cfg.n_transient = 2000;
    cfg.qr_interval = 10;
    const LyapunovSpectrum sp =
        lyapunov_spectrum_ode(spec, random_initial_condition(spec, rng), cfg, 0.005);
    // Known values: ~(0.906, 0, -14.57); the trace sum -(sigma+1+b) is exact.
    REQUIRE(sp.exponents[0] == Catch::Approx(0.906).epsilon(0.05));
    REQUIRE(sp.exponents.sum() == Catch::Approx(-(10.0 + 1.0 + 8.0 / 3.0)).epsilon(0.01));
}

TEST_CASE("spectrum is invariant across initial conditions on the attractor") {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    LeConfig cfg;
    cfg.n_steps = 100000;
    cfg.n_transient = 2000;
    cfg.qr_interval = 10;
    LyapunovSpectrum first;
    for (int ic = 0; ic < 5; ++ic) {
        Rng rng(derive_seed(100, "ergodic", ic));
        const LyapunovSpectrum sp =
            lyapunov_spectrum_ode(spec, random_initial_condition(spec, rng), cfg, 0.01);
        if (ic == 0) {
            first = sp;
            continue;
        }
        const double rel = (sp.exponents - first.exponents).norm() / first.exponents.norm();
        REQUIRE(rel < 0.05);
    }
}

TEST_CASE("scalar contraction map has exponent ln(a)") {
    LeConfig cfg;
    cfg.n_steps = 1000;
    cfg.n_transient = 0;
    cfg.qr_interval = 1;
    cfg.n_exponents = 1;
    Eigen::VectorXd r0(1);
    r0 << 1.0;
    const LyapunovSpectrum sp = lyapunov_spectrum_map(
        [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, 0.5).eval(); },
        [](const Eigen::VectorXd& r) { return (0.5 * r).eval(); }, r0, cfg, 1.0);
    REQUIRE(std::abs(sp.exponents[0] - std::log(0.5)) < 1e-9);
}

TEST_CASE("2D diagonal map has exponents (ln 2, ln 0.5)") {
    Eigen::Matrix2d j;
    j << 2.0, 0.0, 0.0, 0.5;
    LeConfig cfg;
    cfg.n_steps = 25;
    cfg.n_transient = 0;
    cfg.qr_interval = 1;
    Eigen::VectorXd r0(2);
    r0 << 1e-6, 1e-6;  // keep the expanding direction inside the divergence bound
    const LyapunovSpectrum sp = lyapunov_spectrum_map(
        [&](const Eigen::VectorXd&) { return Eigen::MatrixXd(j); },
        [&](const Eigen::VectorXd& r) { return (j * r).eval(); }, r0, cfg, 1.0);
    REQUIRE(std::abs(sp.exponents[0] - std::log(2.0)) < 1e-9);
    REQUIRE(std::abs(sp.exponents[1] - std::log(0.5)) < 1e-9);
}

TEST_CASE("map route reproduces the ODE route on the L96 one-step map") {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    Rng rng(derive_seed(21, "map-vs-ode"));
    const Eigen::VectorXd u0 = random_initial_condition(spec, rng);

    LeConfig cfg;
    cfg.n_steps = 30000;
    cfg.n_transient = 2000;
    cfg.qr_interval = 10;
    const double dt = 0.01;
    const LyapunovSpectrum ode = lyapunov_spectrum_ode(spec, u0, cfg, dt);

    auto step = [&](const Eigen::VectorXd& u) {
        return rk4_step([&](const Eigen::VectorXd& x) { return system_rhs(spec, x); }, u, dt);
    };
    LeConfig map_cfg = cfg;
    map_cfg.qr_interval = 1;
    const LyapunovSpectrum map = lyapunov_spectrum_map(
        [&](const Eigen::VectorXd& u) { return oracles::fd_jacobian(step, u, 1e-6); }, step, u0,
        map_cfg, dt);

    const double rel = (map.exponents - ode.exponents).norm() / ode.exponents.norm();
    REQUIRE(rel < 0.05);
}

TEST_CASE("degenerate tangent dynamics raise a conditioning error") {
    LeConfig cfg;
    cfg.n_steps = 10;
    cfg.n_transient = 0;
    cfg.qr_interval = 1;
    Eigen::VectorXd r0(2);
    r0 << 1.0, 1.0;
    REQUIRE_THROWS_AS(
        lyapunov_spectrum_map(
            [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2, 2).eval(); },
            [](const Eigen::VectorXd& r) { return (0.0 * r).eval(); }, r0, cfg, 1.0),
        IllConditionedError);
}

TEST_CASE("kaplan_yorke_dimension hand-computable spectra") {
    Eigen::VectorXd l63ish(3);
    l63ish << 0.9, 0.0, -14.57;
    REQUIRE(std::abs(kaplan_yorke_dimension(l63ish) - (2.0 + 0.9 / 14.57)) < 1e-12);

    Eigen::VectorXd all_negative(2);
    all_negative << -1.0, -2.0;
    REQUIRE(kaplan_yorke_dimension(all_negative) == 0.0);

    Eigen::VectorXd never_crossing(2);
    never_crossing << 1.0, -0.5;
    REQUIRE(kaplan_yorke_dimension(never_crossing) == 2.0);  // clamped to the full dimension
}

TEST_CASE("kaplan_yorke_dimension rejects empty and unsorted spectra") {
    REQUIRE_THROWS_AS(kaplan_yorke_dimension(Eigen::VectorXd()), std::invalid_argument);
    Eigen::VectorXd unsorted(2);
    unsorted << -1.0, 1.0;
    REQUIRE_THROWS_AS(kaplan_yorke_dimension(unsorted), std::invalid_argument);
}

TEST_CASE("kaplan_yorke_dimension agrees with the cumulative-sum oracle") {
    Rng rng(derive_seed(77, "ky-property"));
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform(0.0, 12.0));
        std::vector<double> values(n);
        for (double& v : values) v = rng.uniform(-3.0, 3.0);
        std::sort(values.begin(), values.end(), std::greater<>());
        Eigen::VectorXd sp = Eigen::Map<Eigen::VectorXd>(values.data(), n);
        REQUIRE(std::abs(kaplan_yorke_dimension(sp) - oracles::ky_by_cumsum(values)) < 1e-12);
    }
}

TEST_CASE("largest_le_from_data on a sinusoid is consistent with zero") {
    const long T = 20000;
    const double dt = 0.01;
    TimeSeries series;
    series.dt = dt;
    series.data.resize(T, 1);
    for (long t = 0; t < T; ++t)
        series.data(t, 0) = std::sin(2.0 * std::numbers::pi * 0.3 * static_cast<double>(t) * dt);
    const int delay = std::max(1, autocorrelation_zero_crossing(series) / 2);
    const double estimate = largest_le_from_data(series, 4, delay, 4 * delay, 0, 40);
    const double lambda1 = l96_spectrum().exponents[0];
    REQUIRE(estimate <= 0.05 * lambda1);
}

TEST_CASE("largest_le_from_data recovers the L96 top exponent within 25%") {
    const TimeSeries series = l96_series(100000, derive_seed(31, "rosenstein"));
    const int delay = std::max(1, autocorrelation_zero_crossing(series) / 2);
    const int embed_dim = 10;
    const double estimate =
        largest_le_from_data(series, embed_dim, delay, delay * embed_dim, 0, 40);
    const double lambda1 = l96_spectrum().exponents[0];
    REQUIRE(std::abs(estimate - lambda1) / lambda1 < 0.25);
}

TEST_CASE("largest_le_from_data rejects degenerate input") {
    TimeSeries constant;
    constant.dt = 0.01;
    constant.data = Eigen::MatrixXd::Constant(5000, 1, 3.25);
    REQUIRE_THROWS_AS(largest_le_from_data(constant, 4, 10, 40, 10, 120), DegenerateDataError);

    TimeSeries tiny;
    tiny.dt = 0.01;
    tiny.data = Eigen::MatrixXd::Random(50, 1);
    REQUIRE_THROWS_AS(largest_le_from_data(tiny, 10, 10, 40, 10, 120), std::invalid_argument);
}
