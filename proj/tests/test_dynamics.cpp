#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "chaosrc/dynamics.hpp"
#include "chaosrc/random.hpp"
#include "oracles.hpp"

using namespace chaosrc;

TEST_CASE("l96_rhs vanishes at the uniform fixed point") {
    for (double F : {8.0, 0.0, -3.5}) {
        const Eigen::VectorXd u = Eigen::VectorXd::Constant(10, F);
        REQUIRE(l96_rhs(u, F).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("l96_rhs at the origin keeps only the forcing") {
    const Eigen::VectorXd u = Eigen::VectorXd::Zero(10);
    const Eigen::VectorXd du = l96_rhs(u, 8.0);
    REQUIRE((du.array() == 8.0).all());
}

TEST_CASE("l96_rhs hand-evaluated cyclic case") {
    Eigen::VectorXd u(4);
    u << 1.0, 0.0, 0.0, 0.0;
    const Eigen::VectorXd du = l96_rhs(u, 0.0);
    Eigen::VectorXd expected(4);
    expected << -1.0, 0.0, 0.0, 0.0;
    REQUIRE((du - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("l96 rejects dimensions below four") {
    const Eigen::VectorXd u = Eigen::VectorXd::Zero(3);
    REQUIRE_THROWS_AS(l96_rhs(u, 8.0), std::invalid_argument);
    REQUIRE_THROWS_AS(l96_jacobian(u, 8.0), std::invalid_argument);
}

TEST_CASE("l96_jacobian trace is -D for any state") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd u(10);
        for (int i = 0; i < 10; ++i) u[i] = rng.uniform(-10.0, 10.0);
        REQUIRE(l96_jacobian(u, 8.0).trace() == Catch::Approx(-10.0).margin(1e-14));
    }
}

TEST_CASE("l96_jacobian matches finite differences on random states") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd u(10);
        for (int i = 0; i < 10; ++i) u[i] = rng.uniform(-8.0, 8.0);
        const Eigen::MatrixXd j = l96_jacobian(u, 8.0);
        const Eigen::MatrixXd j_fd =
            oracles::fd_jacobian([](const Eigen::VectorXd& x) { return l96_rhs(x, 8.0); }, u);
        const double rel = (j - j_fd).norm() / j.norm();
        REQUIRE(rel < 1e-6);
    }
}

TEST_CASE("l96_jacobian at the origin is -I") {
    const Eigen::VectorXd u = Eigen::VectorXd::Zero(10);
    const Eigen::MatrixXd j = l96_jacobian(u, 8.0);
    REQUIRE((j + Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("l63_jacobian matches finite differences") {
    Rng rng(13);
    const SystemSpec spec = SystemSpec::lorenz63();
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd u(3);
        for (int i = 0; i < 3; ++i) u[i] = rng.uniform(-20.0, 20.0);
        const Eigen::MatrixXd j = system_jacobian(spec, u);
        const Eigen::MatrixXd j_fd = oracles::fd_jacobian(
            [&spec](const Eigen::VectorXd& x) { return system_rhs(spec, x); }, u, 1e-5);
        REQUIRE((j - j_fd).norm() / j.norm() < 1e-6);
    }
}

TEST_CASE("rk4_step leaves a state unchanged under a zero field") {
    Eigen::VectorXd u(5);
    u << 1.0, -2.0, 0.5, 3.0, -0.25;
    const Eigen::VectorXd next =
        rk4_step([](const Eigen::VectorXd& x) { return Eigen::VectorXd::Zero(x.size()).eval(); }, u, 0.1);
    REQUIRE((next - u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rk4_step reproduces the scalar exponential") {
    Eigen::VectorXd u(1);
    u << 1.0;
    const Eigen::VectorXd next = rk4_step([](const Eigen::VectorXd& x) { return x; }, u, 0.1);
    REQUIRE(std::abs(next[0] - std::exp(0.1)) < 1e-7);
}

TEST_CASE("rk4_step continuity as dt -> 0") {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    Rng rng(3);
    Eigen::VectorXd u(10);
    for (int i = 0; i < 10; ++i) u[i] = rng.uniform(-5.0, 5.0);
    const Eigen::VectorXd next =
        rk4_step([&spec](const Eigen::VectorXd& x) { return system_rhs(spec, x); }, u, 1e-12);
    REQUIRE((next - u).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("generate_trajectory with zero steps returns an empty series") {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    IntegrationConfig cfg;
    cfg.dt = 0.01;
    cfg.n_steps = 0;
    const TimeSeries out = generate_trajectory(spec, Eigen::VectorXd::Constant(10, 8.0), cfg);
    REQUIRE(out.steps() == 0);
    REQUIRE(out.dim() == 10);
    REQUIRE(out.dt == 0.01);
}

TEST_CASE("fixed point is preserved exactly through many steps") {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    IntegrationConfig cfg;
    cfg.dt = 0.01;
    cfg.n_steps = 500;
    cfg.n_transient = 100;
    const TimeSeries out = generate_trajectory(spec, Eigen::VectorXd::Constant(10, 8.0), cfg);
    REQUIRE((out.data.array() == 8.0).all());
}

TEST_CASE("long L96 run stays on the bounded attractor") {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    Rng rng(derive_seed(1, "attractor"));
    const Eigen::VectorXd u0 = random_initial_condition(spec, rng);
    IntegrationConfig cfg;
    cfg.dt = 0.01;
    cfg.n_steps = 100000;
    cfg.n_transient = 2000;
    const TimeSeries out = generate_trajectory(spec, u0, cfg);
    REQUIRE(out.all_finite());
    REQUIRE(out.data.cwiseAbs().maxCoeff() < 20.0);
}

TEST_CASE("trajectories are bit-identical for identical inputs") {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    Rng rng(derive_seed(2, "determinism"));
    const Eigen::VectorXd u0 = random_initial_condition(spec, rng);
    IntegrationConfig cfg;
    cfg.dt = 0.01;
    cfg.n_steps = 5000;
    cfg.n_transient = 500;
    const TimeSeries a = generate_trajectory(spec, u0, cfg);
    const TimeSeries b = generate_trajectory(spec, u0, cfg);
    REQUIRE(a.data == b.data);
}

TEST_CASE("divergence reports the offending step") {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    IntegrationConfig cfg;
    cfg.dt = 0.05;
    cfg.n_steps = 10000;
    Eigen::VectorXd u0(10);  // large non-uniform state: the advection term explodes
    for (int i = 0; i < 10; ++i) u0[i] = (i % 2 == 0 ? 1e5 : -1e5);
    try {
        generate_trajectory(spec, u0, cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        REQUIRE(e.step() >= 0);
        REQUIRE(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("random initial conditions for L96 sit near the forcing level") {
    const SystemSpec spec = SystemSpec::lorenz96(10, 8.0);
    Rng rng(5);
    const Eigen::VectorXd u0 = random_initial_condition(spec, rng);
    REQUIRE(u0.minCoeff() >= 7.0);
    REQUIRE(u0.maxCoeff() <= 9.0);
}
