#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "fkmpc/chain.hpp"

namespace fkmpc {

// Observables per pendulum: [phi, dphi, sin(phi), cos(phi), dphi*sin(phi), dphi*cos(phi)].
inline constexpr int kObservablesPerPendulum = 6;

struct ObservableDictionary {
  int n_pendulums = 0;
  int per_pendulum_count = kObservablesPerPendulum;

  int total_dim() const { return per_pendulum_count * n_pendulums; }

  std::vector<std::string> descriptor() const {
    std::vector<std::string> labels;
    labels.reserve(total_dim());
    for (int i = 1; i <= n_pendulums; ++i) {
      const std::string s = std::to_string(i);
      labels.push_back("phi_" + s);
      labels.push_back("dphi_" + s);
      labels.push_back("sin(phi_" + s + ")");
      labels.push_back("cos(phi_" + s + ")");
      labels.push_back("dphi_" + s + "*sin(phi_" + s + ")");
      labels.push_back("dphi_" + s + "*cos(phi_" + s + ")");
    }
    return labels;
  }
};

inline void lift_into(const ChainState& y, Eigen::Ref<Eigen::VectorXd> z) {
  const int n = n_pendulums_of(y);
  for (int i = 0; i < n; ++i) {
    const double phi = y(2 * i);
    const double dphi = y(2 * i + 1);
    const double s = std::sin(phi);
    const double c = std::cos(phi);
    const int o = kObservablesPerPendulum * i;
    z(o) = phi;
    z(o + 1) = dphi;
    z(o + 2) = s;
    z(o + 3) = c;
    z(o + 4) = dphi * s;
    z(o + 5) = dphi * c;
  }
}

inline Eigen::VectorXd lift(const ChainState& y) {
  Eigen::VectorXd z(kObservablesPerPendulum * n_pendulums_of(y));
  lift_into(y, z);
  return z;
}

// Binary selection matrix C with C * lift(y) = y exactly: the first two
// observables of every block are the raw state coordinates, so C is built
// structurally rather than fitted.
inline Eigen::MatrixXd output_matrix(int n_pendulums) {
  if (n_pendulums < 1) {
    throw std::invalid_argument("output_matrix: need at least 1 pendulum");
  }
  Eigen::MatrixXd c =
      Eigen::MatrixXd::Zero(2 * n_pendulums, kObservablesPerPendulum * n_pendulums);
  for (int i = 0; i < n_pendulums; ++i) {
    c(2 * i, kObservablesPerPendulum * i) = 1.0;
    c(2 * i + 1, kObservablesPerPendulum * i + 1) = 1.0;
  }
  return c;
}

}  // namespace fkmpc
