#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "fkmpc/chain.hpp"
#include "fkmpc/integrator.hpp"
#include "fkmpc/random.hpp"

namespace fkmpc {

struct CareFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Linearization of the chain about one of the two equilibria.
struct LinearizedChain {
  Eigen::MatrixXd A_tilde;  // 2N x 2N
  Eigen::VectorXd B_tilde;  // 2N
  EquilibriumKind about = EquilibriumKind::stable;
};

inline LinearizedChain linearize(const ChainParams& p, const CouplingStructure& c,
                                 EquilibriumKind about) {
  p.validate();
  const int n = c.n_pendulums;
  // cos(phi*) = +1 at the hanging equilibrium, -1 at the inverted one.
  const double cos_eq = (about == EquilibriumKind::stable) ? 1.0 : -1.0;
  Eigen::Matrix2d block;
  block << 0.0, 1.0,
      -(p.gravity_torque() / p.inertia) * cos_eq, -(p.pivot_damping / p.inertia);
  LinearizedChain lin;
  lin.about = about;
  lin.A_tilde = Eigen::kroneckerProduct(Eigen::MatrixXd::Identity(n, n), block).eval() -
                coupling_matrix(p, c);
  lin.B_tilde = input_vector(p, c);
  return lin;
}

namespace detail {

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

// Solve F' X + X F = -W for X (small dense Lyapunov equation via the
// Kronecker-vectorized linear system; fine for the 2N <= ~20 sizes here).
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& f, const Eigen::MatrixXd& w) {
  const Eigen::Index n = f.rows();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd m = kron(id, f.transpose()) + kron(f.transpose(), id);
  Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(w.data(), n * n);
  Eigen::VectorXd vx = m.partialPivLu().solve(rhs);
  return Eigen::Map<const Eigen::MatrixXd>(vx.data(), n, n);
}

}  // namespace detail

// Stabilizing solution S of A'S + SA - S B R^-1 B' S + Q = 0.
//
// The stable invariant subspace of the Hamiltonian matrix is extracted with
// the matrix sign function (scaled Newton iteration), followed by Newton
// refinement passes on the Riccati residual. Throws CareFailure when no
// stabilizing solution exists (e.g. eigenvalues on the imaginary axis or an
// unstabilizable pair).
inline Eigen::MatrixXd solve_care(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  const Eigen::MatrixXd& q, const Eigen::MatrixXd& r) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n ||
      r.rows() != b.cols() || r.cols() != b.cols()) {
    throw std::invalid_argument("solve_care: inconsistent dimensions");
  }
  if ((q - q.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * (1.0 + q.norm())) {
    throw std::invalid_argument("solve_care: Q must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt_r(r);
  if (llt_r.info() != Eigen::Success) {
    throw CareFailure("solve_care: R must be positive definite");
  }
  const Eigen::MatrixXd brb = b * llt_r.solve(b.transpose());

  Eigen::MatrixXd ham(2 * n, 2 * n);
  ham << a, -brb, -q, -a.transpose();

  // Matrix sign of the Hamiltonian: Z <- (cZ + (cZ)^-1)/2 with determinant
  // scaling c = |det Z|^(-1/2n).
  Eigen::MatrixXd z = ham;
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(z);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
      const double u = std::abs(lu.matrixLU()(i, i));
      if (!(u > 0.0) || !std::isfinite(u)) {
        throw CareFailure("solve_care: Hamiltonian has eigenvalues on the imaginary axis");
      }
      log_det += std::log(u);
    }
    const double c = std::exp(log_det / static_cast<double>(2 * n));
    Eigen::MatrixXd z_next =
        0.5 * (z / c + c * lu.solve(Eigen::MatrixXd::Identity(2 * n, 2 * n)));
    if (!z_next.allFinite()) {
      throw CareFailure("solve_care: sign iteration diverged");
    }
    const double step = (z_next - z).lpNorm<Eigen::Infinity>();
    const double scale = std::max(1.0, z.lpNorm<Eigen::Infinity>());
    z = std::move(z_next);
    if (step <= 1e-13 * scale) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw CareFailure("solve_care: sign iteration did not converge");
  }

  // Stable subspace = null space of sign(H) + I; its basis [X1; X2]
  // yields S = X2 X1^-1.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      z + Eigen::MatrixXd::Identity(2 * n, 2 * n), Eigen::ComputeFullV);
  const Eigen::MatrixXd basis = svd.matrixV().rightCols(n);
  const Eigen::MatrixXd x1 = basis.topRows(n);
  const Eigen::MatrixXd x2 = basis.bottomRows(n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu_x1(x1.transpose());
  if (!lu_x1.isInvertible()) {
    throw CareFailure("solve_care: no stabilizing solution (subspace not a graph)");
  }
  Eigen::MatrixXd s = lu_x1.solve(x2.transpose()).transpose();
  s = 0.5 * (s + s.transpose()).eval();

  // Newton refinement on the Riccati residual.
  const double care_scale = std::max(1.0, s.norm());
  for (int pass = 0; pass < 8; ++pass) {
    const Eigen::MatrixXd res =
        a.transpose() * s + s * a - s * brb * s + q;
    if (res.norm() <= 1e-13 * care_scale) break;
    const Eigen::MatrixXd f = a - brb * s;
    Eigen::MatrixXd ds = detail::solve_lyapunov(f, res);
    ds = 0.5 * (ds + ds.transpose()).eval();
    if (!ds.allFinite()) break;
    s += ds;
    s = 0.5 * (s + s.transpose()).eval();
  }

  const double final_res =
      (a.transpose() * s + s * a - s * brb * s + q).norm();
  if (!(final_res <= 1e-8 * std::max(1.0, s.norm()))) {
    throw CareFailure("solve_care: residual did not converge (pair not stabilizable?)");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.eigenvalues().minCoeff() < -1e-8 * std::max(1.0, s.norm())) {
    throw CareFailure("solve_care: solution is not positive semidefinite");
  }
  return s;
}

// LQR about an equilibrium with additive exploration noise, clamped to the
// actuation envelope so identification data matches what the controller may
// ever apply. Each policy instance owns its RNG stream.
class LqrPolicy {
 public:
  LqrPolicy(Eigen::RowVectorXd gain, ChainState x_eq, double noise_std,
            std::uint64_t seed, double u_limit = 0.1)
      : gain_(std::move(gain)),
        x_eq_(std::move(x_eq)),
        noise_std_(noise_std),
        u_limit_(u_limit),
        rng_(seed) {}

  double operator()(int /*k*/, double /*t*/, const ChainState& x) {
    const double v = noise_std_ > 0.0 ? rng_.normal(0.0, noise_std_) : 0.0;
    last_noise_ = v;
    const double u = -gain_.dot(x - x_eq_) + v;
    return std::clamp(u, -u_limit_, u_limit_);
  }

  const Eigen::RowVectorXd& gain() const { return gain_; }
  double last_noise() const { return last_noise_; }

 private:
  Eigen::RowVectorXd gain_;
  ChainState x_eq_;
  double noise_std_;
  double u_limit_;
  Rng rng_;
  double last_noise_ = 0.0;
};

// u = -R^-1 B' S (x - x_eq) + v,  v ~ N(0, sigma^2), one draw per control period.
inline LqrPolicy lqr_identification_policy(const LinearizedChain& lin,
                                           const Eigen::MatrixXd& q,
                                           const Eigen::MatrixXd& r, double sigma,
                                           std::uint64_t seed, double u_limit = 0.1) {
  const Eigen::MatrixXd s = solve_care(lin.A_tilde, lin.B_tilde, q, r);
  Eigen::RowVectorXd gain =
      (r.inverse() * lin.B_tilde.transpose() * s).row(0);
  const int n = static_cast<int>(lin.A_tilde.rows()) / 2;
  ChainState x_eq = equilibrium(
      lin.about == EquilibriumKind::stable ? EquilibriumKind::stable
                                           : EquilibriumKind::unstable,
      n);
  return LqrPolicy(std::move(gain), std::move(x_eq), sigma, seed, u_limit);
}

// Proportional controller on the first pendulum's angle error against the
// reference angle; used only to gather rotating-task identification data.
class ProportionalPolicy {
 public:
  ProportionalPolicy(double k_p, ReferenceTrajectory ref, double noise_std,
                     std::uint64_t seed, double u_limit = 0.1)
      : k_p_(k_p), ref_(std::move(ref)), noise_std_(noise_std), u_limit_(u_limit), rng_(seed) {
    if (!std::isfinite(k_p_)) throw std::invalid_argument("ProportionalPolicy: k_p not finite");
  }

  double operator()(int k, double /*t*/, const ChainState& x) {
    const double v = noise_std_ > 0.0 ? rng_.normal(0.0, noise_std_) : 0.0;
    last_noise_ = v;
    // sample() holds the last value once the reference is exhausted
    const double phi_ref = ref_.sample(static_cast<std::size_t>(k))(0);
    const double u = k_p_ * (phi_ref - x(0)) + v;
    return std::clamp(u, -u_limit_, u_limit_);
  }

  double last_noise() const { return last_noise_; }

 private:
  double k_p_;
  ReferenceTrajectory ref_;
  double noise_std_;
  double u_limit_;
  Rng rng_;
  double last_noise_ = 0.0;
};

}  // namespace fkmpc
