#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkmpc/ode.hpp"

namespace fkmpc {

// Physical constants of the torsion-coupled pendulum chain. Defaults are the
// values identified on the experimental platform.
struct ChainParams {
  double inertia = 3.82e-4;         // I  [kg m^2]
  double mass = 0.017;              // m  [kg]
  double rod_length = 0.15;         // l  [m]
  double gravity = 9.81;            // g  [m/s^2]
  double spring_k = 0.065;          // k  torsion stiffness [N m / rad]
  double spring_damping = 1.70e-3;  // b  [N m s / rad]
  double pivot_damping = 3.75e-4;   // gamma [N m s / rad]

  // m*g*l, the amplitude of the gravity torque.
  double gravity_torque() const { return mass * gravity * rod_length; }

  void validate() const {
    auto check = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string("ChainParams: ") + name +
                                    " must be strictly positive");
      }
    };
    check(inertia, "inertia");
    check(mass, "mass");
    check(rod_length, "rod_length");
    check(gravity, "gravity");
    check(spring_k, "spring_k");
    check(spring_damping, "spring_damping");
    check(pivot_damping, "pivot_damping");
  }
};

// Chain state, interleaved [phi_1, dphi_1, phi_2, dphi_2, ...]. Angles are
// not wrapped; the rotating task needs the accumulated angle.
using ChainState = Eigen::VectorXd;

inline int n_pendulums_of(const ChainState& x) {
  if (x.size() < 2 || x.size() % 2 != 0) {
    throw std::invalid_argument("ChainState: length must be 2N with N >= 1");
  }
  return static_cast<int>(x.size() / 2);
}

inline void validate_state(const ChainState& x, int expected_n) {
  if (x.size() != 2 * expected_n) {
    throw std::invalid_argument("ChainState: expected length " +
                                std::to_string(2 * expected_n) + ", got " +
                                std::to_string(x.size()));
  }
  if (!x.allFinite()) {
    throw std::invalid_argument("ChainState: entries must be finite");
  }
}

// Path-graph interconnection of the chain plus the boundary actuation
// pattern: the torque input enters at pendulum 1 only.
struct CouplingStructure {
  int n_pendulums = 0;
  Eigen::MatrixXd laplacian;            // L, N x N tridiagonal
  Eigen::VectorXd actuation_selector;   // d = [1, 0, ..., 0]
  Eigen::MatrixXd actuation_diag;       // D = diag(d)
  Eigen::Vector2d input_channel;        // G = [0, 1]
  Eigen::RowVector2d coupling_gains;    // K = [k, b]
};

inline CouplingStructure build_coupling(int n, const ChainParams& p = {}) {
  if (n < 2) {
    throw std::invalid_argument("build_coupling: need at least 2 pendulums");
  }
  p.validate();
  CouplingStructure c;
  c.n_pendulums = n;
  c.laplacian = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    c.laplacian(i, i) = (i == 0 || i == n - 1) ? 1.0 : 2.0;
    if (i > 0) c.laplacian(i, i - 1) = -1.0;
    if (i < n - 1) c.laplacian(i, i + 1) = -1.0;
  }
  c.actuation_selector = Eigen::VectorXd::Zero(n);
  c.actuation_selector(0) = 1.0;
  c.actuation_diag = c.actuation_selector.asDiagonal();
  c.input_channel << 0.0, 1.0;
  c.coupling_gains << p.spring_k, p.spring_damping;
  return c;
}

// Uncoupled dynamics of a single pendulum: [dphi, -(mgl/I) sin(phi) - (gamma/I) dphi].
inline Eigen::Vector2d drift(const Eigen::Vector2d& xi, const ChainParams& p) {
  Eigen::Vector2d dx;
  dx(0) = xi(1);
  dx(1) = -(p.gravity_torque() / p.inertia) * std::sin(xi(0)) -
          (p.pivot_damping / p.inertia) * xi(1);
  return dx;
}

// Time derivative of the full chain state, written out per pendulum. The
// torque u acts on pendulum 1 only.
inline ChainState vector_field(const ChainState& x, double u, const ChainParams& p,
                               const CouplingStructure& c) {
  validate_state(x, c.n_pendulums);
  const int n = c.n_pendulums;
  const double inv_i = 1.0 / p.inertia;
  ChainState dx(2 * n);
  for (int i = 0; i < n; ++i) {
    const double phi = x(2 * i);
    const double dphi = x(2 * i + 1);
    double torque = 0.0;
    if (i > 0) {
      torque += p.spring_k * (x(2 * (i - 1)) - phi) +
                p.spring_damping * (x(2 * (i - 1) + 1) - dphi);
    }
    if (i < n - 1) {
      torque += p.spring_k * (x(2 * (i + 1)) - phi) +
                p.spring_damping * (x(2 * (i + 1) + 1) - dphi);
    }
    if (i == 0) torque += u;
    dx(2 * i) = dphi;
    dx(2 * i + 1) = -(p.gravity_torque() * inv_i) * std::sin(phi) -
                    (p.pivot_damping * inv_i) * dphi + inv_i * torque;
  }
  return dx;
}

// (1/I) (L (x) G K), the 2N x 2N coupling matrix of the stacked state-space
// form. Kept separate from vector_field so the two evaluation routes can be
// checked against each other.
inline Eigen::MatrixXd coupling_matrix(const ChainParams& p, const CouplingStructure& c) {
  const Eigen::Matrix2d gk = c.input_channel * c.coupling_gains;
  return (1.0 / p.inertia) * Eigen::kroneckerProduct(c.laplacian, gk).eval();
}

// (1/I) (d (x) G), the stacked input direction.
inline Eigen::VectorXd input_vector(const ChainParams& p, const CouplingStructure& c) {
  return (1.0 / p.inertia) *
         Eigen::kroneckerProduct(c.actuation_selector, c.input_channel).eval();
}

// Stacked matrix form F(x) - (1/I)(L (x) GK) x + (1/I)(d (x) G) u.
inline ChainState vector_field_matrix(const ChainState& x, double u, const ChainParams& p,
                                      const CouplingStructure& c) {
  validate_state(x, c.n_pendulums);
  const int n = c.n_pendulums;
  ChainState fx(2 * n);
  for (int i = 0; i < n; ++i) {
    fx.segment<2>(2 * i) = drift(x.segment<2>(2 * i), p);
  }
  return fx - coupling_matrix(p, c) * x + input_vector(p, c) * u;
}

enum class EquilibriumKind { stable, unstable };

inline ChainState equilibrium(EquilibriumKind kind, int n) {
  if (n < 2) {
    throw std::invalid_argument("equilibrium: need at least 2 pendulums");
  }
  ChainState x = ChainState::Zero(2 * n);
  if (kind == EquilibriumKind::unstable) {
    for (int i = 0; i < n; ++i) x(2 * i) = M_PI;
  }
  return x;
}

enum class RefKind { stable_eq, unstable_eq, periodic };

inline const char* to_string(RefKind k) {
  switch (k) {
    case RefKind::stable_eq: return "stable_eq";
    case RefKind::unstable_eq: return "unstable_eq";
    case RefKind::periodic: return "periodic";
  }
  return "?";
}

// Synchronization target: a sampled solution of the single-pendulum drift
// dynamics (an equilibrium or, for the rotating task, a revolving orbit of
// the undamped pendulum).
struct ReferenceTrajectory {
  double dt = 0.005;
  RefKind kind = RefKind::stable_eq;
  std::vector<Eigen::Vector2d> samples;
  ChainParams params;  // used to extend periodic references on demand

  Eigen::Vector2d sample(std::size_t k) const {
    if (samples.empty()) {
      throw std::logic_error("ReferenceTrajectory: no samples");
    }
    return k < samples.size() ? samples[k] : samples.back();
  }

  // Make sure samples[0..count-1] exist. Equilibrium references replicate
  // the last sample; the periodic reference keeps integrating the undamped
  // drift so the horizon never runs off the end of the leader orbit.
  void extend_to(std::size_t count) {
    if (samples.empty()) {
      throw std::logic_error("ReferenceTrajectory: no samples");
    }
    if (kind != RefKind::periodic) {
      while (samples.size() < count) samples.push_back(samples.back());
      return;
    }
    ChainParams undamped = params;
    undamped.pivot_damping = 0.0;
    const int substeps = 10;
    const double h = dt / substeps;
    while (samples.size() < count) {
      Eigen::Vector2d s = samples.back();
      for (int j = 0; j < substeps; ++j) {
        s = rk4_step([&](const Eigen::Vector2d& v) { return drift(v, undamped); }, s, h);
      }
      samples.push_back(s);
    }
  }
};

// Revolving reference orbit: integrate the single-pendulum drift with the
// pivot damping forced to zero.
inline ReferenceTrajectory periodic_reference(const Eigen::Vector2d& x0, double duration,
                                              double dt, const ChainParams& p) {
  if (!(dt > 0.0)) throw std::invalid_argument("periodic_reference: dt must be positive");
  if (duration < dt) throw std::invalid_argument("periodic_reference: duration < dt");
  ReferenceTrajectory ref;
  ref.dt = dt;
  ref.kind = RefKind::periodic;
  ref.params = p;
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  ref.samples.reserve(steps + 1);
  ref.samples.push_back(x0);
  ref.extend_to(steps + 1);
  return ref;
}

inline ReferenceTrajectory constant_reference(RefKind kind, double dt, std::size_t count,
                                              const ChainParams& p = {}) {
  if (kind == RefKind::periodic) {
    throw std::invalid_argument("constant_reference: periodic kind needs periodic_reference");
  }
  ReferenceTrajectory ref;
  ref.dt = dt;
  ref.kind = kind;
  ref.params = p;
  Eigen::Vector2d s(kind == RefKind::unstable_eq ? M_PI : 0.0, 0.0);
  ref.samples.assign(std::max<std::size_t>(count, 1), s);
  return ref;
}

// Kinetic + gravitational + spring potential energy, measured from the
// hanging configuration.
inline double total_energy(const ChainState& x, const ChainParams& p) {
  const int n = n_pendulums_of(x);
  const double mgl = p.gravity_torque();
  double e = 0.0;
  for (int i = 0; i < n; ++i) {
    e += 0.5 * p.inertia * x(2 * i + 1) * x(2 * i + 1) +
         mgl * (1.0 - std::cos(x(2 * i)));
  }
  for (int i = 0; i + 1 < n; ++i) {
    const double d = x(2 * (i + 1)) - x(2 * i);
    e += 0.5 * p.spring_k * d * d;
  }
  return e;
}

// Power dissipated in the relative damping of adjacent pendulums:
// (b/2) * sum (dphi_{i+1} - dphi_i)^2.
inline double relative_dissipation(const ChainState& x, const ChainParams& p) {
  const int n = n_pendulums_of(x);
  double w = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    const double d = x(2 * (i + 1) + 1) - x(2 * i + 1);
    w += d * d;
  }
  return 0.5 * p.spring_damping * w;
}

// Energy of one isolated undamped pendulum; conserved along the periodic
// reference orbit.
inline double single_pendulum_energy(const Eigen::Vector2d& xi, const ChainParams& p) {
  return 0.5 * p.inertia * xi(1) * xi(1) - p.gravity_torque() * std::cos(xi(0));
}

}  // namespace fkmpc
