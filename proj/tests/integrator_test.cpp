#include "fkmpc/integrator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "fkmpc/random.hpp"

using namespace fkmpc;

TEST(Rk4, ZeroFieldLeavesStateUnchanged) {
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  const Eigen::VectorXd next =
      rk4_step([](const Eigen::VectorXd& v) { return Eigen::VectorXd::Zero(v.size()).eval(); },
               x, 0.1);
  EXPECT_EQ(next, x);
}

TEST(Rk4, ExponentialDecayPolynomial) {
  Eigen::VectorXd x(1);
  x << 1.0;
  const Eigen::VectorXd next =
      rk4_step([](const Eigen::VectorXd& v) { return (-v).eval(); }, x, 0.1);
  // RK4 stability polynomial at h = 0.1: 1 - h + h^2/2 - h^3/6 + h^4/24
  EXPECT_NEAR(next(0), 0.9048375, 1e-15);
  EXPECT_LT(std::abs(next(0) - std::exp(-0.1)), 1e-7);
}

TEST(Rk4, RejectsBadStep) {
  Eigen::VectorXd x(1);
  x << 1.0;
  const auto f = [](const Eigen::VectorXd& v) { return v; };
  EXPECT_THROW(rk4_step(f, x, 0.0), std::invalid_argument);
  EXPECT_THROW(rk4_step(f, x, -0.1), std::invalid_argument);
}

TEST(Rk4, NonFiniteDerivativeAborts) {
  Eigen::VectorXd x(1);
  x << 1.0;
  const auto f = [](const Eigen::VectorXd& v) {
    return (v * std::numeric_limits<double>::infinity()).eval();
  };
  EXPECT_THROW(rk4_step(f, x, 0.1), std::runtime_error);
}

// Richardson oracle: halving h divides the global error by ~16 on the smooth
// single-pendulum swing.
TEST(Rk4, FourthOrderConvergence) {
  const ChainParams p;
  const auto swing = [&p](const Eigen::VectorXd& x) {
    Eigen::VectorXd dx(2);
    dx << x(1), -(p.gravity_torque() / p.inertia) * std::sin(x(0)) -
                    (p.pivot_damping / p.inertia) * x(1);
    return dx;
  };
  const auto integrate = [&](double h) {
    Eigen::VectorXd x(2);
    x << 2.0, 0.0;
    const int steps = static_cast<int>(std::llround(1.0 / h));
    for (int i = 0; i < steps; ++i) x = rk4_step(swing, x, h);
    return x;
  };
  const Eigen::VectorXd reference = integrate(1e-4);
  const double e_coarse = (integrate(8e-3) - reference).norm();
  const double e_fine = (integrate(4e-3) - reference).norm();
  const double ratio = e_coarse / e_fine;
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(Simulate, ZeroPolicyAtEquilibriumIsConstant) {
  const ChainParams p;
  const CouplingStructure c = build_coupling(3, p);
  SimConfig cfg;
  cfg.duration = 0.5;
  const Trajectory traj = simulate(equilibrium(EquilibriumKind::stable, 3),
                                   [](int, double, const ChainState&) { return 0.0; },
                                   cfg, p, c);
  ASSERT_EQ(traj.states.size(), 101u);
  ASSERT_EQ(traj.inputs.size(), 100u);
  for (const auto& x : traj.states) {
    EXPECT_LT(x.lpNorm<Eigen::Infinity>(), 1e-12);
  }
  EXPECT_FALSE(traj.meta.error);
}

TEST(Simulate, ShapeInvariant) {
  const ChainParams p;
  const CouplingStructure c = build_coupling(2, p);
  SimConfig cfg;
  cfg.duration = 0.123;  // does not divide the control period evenly
  const Trajectory traj = simulate(ChainState::Zero(4),
                                   [](int, double, const ChainState&) { return 0.01; },
                                   cfg, p, c);
  EXPECT_EQ(traj.states.size(), traj.inputs.size() + 1);
}

// energy-dissipation oracle: with damping and no input the stored energy
// falls below 1% of its initial value
TEST(Simulate, PassiveDecayToNearRest) {
  const ChainParams p;
  const CouplingStructure c = build_coupling(5, p);
  Rng rng(42);
  ChainState x0 = ChainState::Zero(10);
  for (int i = 0; i < 5; ++i) x0(2 * i) = rng.uniform(-0.4, 0.4);
  SimConfig cfg;
  cfg.duration = 15.0;
  const Trajectory traj = simulate(
      x0, [](int, double, const ChainState&) { return 0.0; }, cfg, p, c);
  ASSERT_FALSE(traj.meta.error);
  const double e0 = total_energy(traj.states.front(), p);
  const double e_end = total_energy(traj.states.back(), p);
  EXPECT_LT(e_end, 0.01 * e0);
  // and the decay is monotone step to step
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    EXPECT_LE(total_energy(traj.states[k + 1], p),
              total_energy(traj.states[k], p) + 1e-8);
  }
}

TEST(Simulate, BitwiseDeterminism) {
  const ChainParams p;
  const CouplingStructure c = build_coupling(4, p);
  Rng ic(7);
  ChainState x0 = ChainState::Zero(8);
  for (int i = 0; i < 8; ++i) x0(i) = ic.uniform(-0.5, 0.5);
  SimConfig cfg;
  cfg.duration = 2.0;
  cfg.seed = 99;
  const auto run = [&]() {
    Rng noise(cfg.seed);
    return simulate(x0,
                    [&noise](int, double, const ChainState&) { return 0.05 * noise.normal(); },
                    cfg, p, c);
  };
  const Trajectory a = run();
  const Trajectory b = run();
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    ASSERT_EQ(0, std::memcmp(a.states[k].data(), b.states[k].data(),
                             sizeof(double) * a.states[k].size()));
  }
  ASSERT_EQ(a.inputs, b.inputs);
}

TEST(Simulate, RecordedTrajectoryReintegratesToItself) {
  const ChainParams p;
  const CouplingStructure c = build_coupling(3, p);
  Rng noise(3);
  SimConfig cfg;
  cfg.duration = 1.0;
  ChainState x0 = ChainState::Zero(6);
  x0(0) = 0.3;
  const Trajectory traj = simulate(
      x0, [&noise](int, double, const ChainState&) { return 0.05 * noise.normal(); }, cfg, p, c);
  EXPECT_EQ(resimulation_error(traj, p, c, cfg.substeps_per_control), 0.0);
}

TEST(Simulate, PolicyFailureTruncatesWithFlag) {
  const ChainParams p;
  const CouplingStructure c = build_coupling(2, p);
  SimConfig cfg;
  cfg.duration = 1.0;
  const Trajectory traj = simulate(
      ChainState::Zero(4),
      [](int k, double, const ChainState&) -> double {
        if (k >= 10) throw std::runtime_error("deliberate");
        return 0.0;
      },
      cfg, p, c);
  EXPECT_TRUE(traj.meta.error);
  EXPECT_NE(traj.meta.error_message.find("policy failure"), std::string::npos);
  EXPECT_EQ(traj.states.size(), 11u);
  EXPECT_EQ(traj.inputs.size(), 10u);
}

TEST(Simulate, NonFiniteTorqueTruncates) {
  const ChainParams p;
  const CouplingStructure c = build_coupling(2, p);
  SimConfig cfg;
  cfg.duration = 1.0;
  const Trajectory traj = simulate(
      ChainState::Zero(4),
      [](int k, double, const ChainState&) {
        return k >= 5 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
      },
      cfg, p, c);
  EXPECT_TRUE(traj.meta.error);
  EXPECT_EQ(traj.states.size(), traj.inputs.size() + 1);
}

TEST(Simulate, BlowupGuardTruncates) {
  const ChainParams p;
  const CouplingStructure c = build_coupling(2, p);
  SimConfig cfg;
  cfg.duration = 5.0;
  const Trajectory traj = simulate(
      ChainState::Zero(4), [](int, double, const ChainState&) { return 1e4; }, cfg, p, c);
  EXPECT_TRUE(traj.meta.error);
  EXPECT_NE(traj.meta.error_message.find("blow-up"), std::string::npos);
  EXPECT_EQ(traj.states.size(), traj.inputs.size() + 1);
  EXPECT_LT(traj.states.size(), 1001u);
}

TEST(SimConfig, Validation) {
  SimConfig cfg;
  cfg.duration = 0.001;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.duration = 1.0;
  cfg.substeps_per_control = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
