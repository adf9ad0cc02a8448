#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkmpc/chain.hpp"
#include "fkmpc/ode.hpp"

namespace fkmpc {

struct SimConfig {
  double control_dt = 0.005;      // zero-order-hold period
  int substeps_per_control = 10;  // inner RK4 steps per control period
  double duration = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(control_dt > 0.0)) throw std::invalid_argument("SimConfig: control_dt must be positive");
    if (substeps_per_control < 1) throw std::invalid_argument("SimConfig: substeps must be >= 1");
    if (duration < control_dt) throw std::invalid_argument("SimConfig: duration < control_dt");
  }

  int n_steps() const { return static_cast<int>(std::llround(duration / control_dt)); }
};

struct TrajectoryMeta {
  std::uint64_t seed = 0;
  std::string task;
  std::string config_hash;
  ChainParams params;
  bool error = false;
  std::string error_message;
};

// Sampled closed-loop run: states at control-period boundaries, one input
// per period, optional aligned reference samples.
struct Trajectory {
  double dt = 0.005;
  std::vector<ChainState> states;
  std::vector<double> inputs;
  std::vector<Eigen::Vector2d> references;
  TrajectoryMeta meta;

  int n_pendulums() const {
    if (states.empty()) throw std::logic_error("Trajectory: empty");
    return n_pendulums_of(states.front());
  }
};

// (step index, time, state) -> torque on pendulum 1.
using ControlPolicy = std::function<double(int, double, const ChainState&)>;

inline constexpr double kStateBlowupLimit = 1e6;

// Fixed-step closed-loop simulation under zero-order hold. The policy is
// queried once per control period; a policy failure or a state blow-up
// truncates the run and sets the error flag instead of throwing.
inline Trajectory simulate(const ChainState& x0, const ControlPolicy& policy,
                           const SimConfig& cfg, const ChainParams& p,
                           const CouplingStructure& c) {
  cfg.validate();
  p.validate();
  validate_state(x0, c.n_pendulums);

  Trajectory traj;
  traj.dt = cfg.control_dt;
  traj.meta.seed = cfg.seed;
  traj.meta.params = p;
  const int steps = cfg.n_steps();
  traj.states.reserve(steps + 1);
  traj.inputs.reserve(steps);

  ChainState x = x0;
  traj.states.push_back(x);
  const double h = cfg.control_dt / cfg.substeps_per_control;
  for (int k = 0; k < steps; ++k) {
    double u = 0.0;
    try {
      u = policy(k, k * cfg.control_dt, x);
    } catch (const std::exception& e) {
      traj.meta.error = true;
      traj.meta.error_message = std::string("policy failure at step ") +
                                std::to_string(k) + ": " + e.what();
      break;
    }
    if (!std::isfinite(u)) {
      traj.meta.error = true;
      traj.meta.error_message = "policy returned non-finite torque at step " +
                                std::to_string(k);
      break;
    }
    traj.inputs.push_back(u);
    bool step_ok = true;
    try {
      for (int s = 0; s < cfg.substeps_per_control; ++s) {
        x = rk4_step([&](const ChainState& v) { return vector_field(v, u, p, c); }, x, h);
      }
    } catch (const std::exception& e) {
      traj.meta.error = true;
      traj.meta.error_message = std::string("integration failure at step ") +
                                std::to_string(k) + ": " + e.what();
      step_ok = false;
    }
    if (step_ok && x.lpNorm<Eigen::Infinity>() > kStateBlowupLimit) {
      traj.meta.error = true;
      traj.meta.error_message = "state blow-up at step " + std::to_string(k);
      step_ok = false;
    }
    if (!step_ok) {
      traj.inputs.pop_back();  // keep len(states) == len(inputs) + 1
      break;
    }
    traj.states.push_back(x);
  }
  return traj;
}

// Re-integrate each recorded transition and report the worst mismatch.
// Zero for any trajectory that simulate() itself produced.
inline double resimulation_error(const Trajectory& traj, const ChainParams& p,
                                 const CouplingStructure& c, int substeps_per_control = 10) {
  double worst = 0.0;
  const double h = traj.dt / substeps_per_control;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    ChainState x = traj.states[k];
    const double u = traj.inputs.at(k);
    for (int s = 0; s < substeps_per_control; ++s) {
      x = rk4_step([&](const ChainState& v) { return vector_field(v, u, p, c); }, x, h);
    }
    worst = std::max(worst, (x - traj.states[k + 1]).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

}  // namespace fkmpc
