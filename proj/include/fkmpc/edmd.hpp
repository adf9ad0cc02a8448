#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fkmpc/integrator.hpp"
#include "fkmpc/lifting.hpp"

namespace fkmpc {

// Snapshot matrices for the lifted least-squares fit. Column j of Y_lift is
// the lift of the successor of the state lifted in column j of X_lift; pairs
// never straddle trajectory boundaries.
struct DataMatrices {
  Eigen::MatrixXd X;       // 2N x Nd raw outputs
  Eigen::MatrixXd X_lift;  // 6N x Nd
  Eigen::MatrixXd Y_lift;  // 6N x Nd
  Eigen::RowVectorXd U;    // 1 x Nd

  Eigen::Index n_samples() const { return X.cols(); }
};

// Identified discrete-time predictor z+ = A z + B u, y = C z.
struct LiftedPredictor {
  Eigen::MatrixXd A;  // 6N x 6N
  Eigen::MatrixXd B;  // 6N x 1
  Eigen::MatrixXd C;  // 2N x 6N structural selection
  double dt = 0.005;
  int n_pendulums = 0;

  int lift_dim() const { return kObservablesPerPendulum * n_pendulums; }
};

struct EdmdReport {
  double residual_frobenius = 0.0;  // || Y - A X - B U ||_F at the optimum
  double relative_residual = 0.0;   // residual / || Y ||_F
  double gram_condition = 0.0;
  int rank = 0;
  bool rank_deficient = false;
  bool underdetermined = false;  // fewer samples than lifted dimension + 1
  std::size_t n_samples = 0;
};

inline DataMatrices assemble(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) {
    throw std::invalid_argument("assemble: no trajectories");
  }
  std::size_t nd = 0;
  const int n = trajectories.front().n_pendulums();
  for (const auto& t : trajectories) {
    if (t.states.size() < 2) {
      throw std::invalid_argument("assemble: trajectory with fewer than 2 states");
    }
    if (t.n_pendulums() != n) {
      throw std::invalid_argument("assemble: mixed chain sizes");
    }
    if (t.inputs.size() + 1 != t.states.size()) {
      throw std::invalid_argument("assemble: inconsistent trajectory shape");
    }
    nd += t.states.size() - 1;
  }
  const int nz = kObservablesPerPendulum * n;
  DataMatrices d;
  d.X.resize(2 * n, nd);
  d.X_lift.resize(nz, nd);
  d.Y_lift.resize(nz, nd);
  d.U.resize(nd);
  std::size_t col = 0;
  for (const auto& t : trajectories) {
    for (std::size_t k = 0; k + 1 < t.states.size(); ++k, ++col) {
      d.X.col(col) = t.states[k];
      lift_into(t.states[k], d.X_lift.col(col));
      lift_into(t.states[k + 1], d.Y_lift.col(col));
      d.U(col) = t.inputs[k];
    }
  }
  return d;
}

namespace detail {

// Pseudoinverse of a symmetric PSD matrix with a relative eigenvalue cutoff.
inline Eigen::MatrixXd pinv_psd(const Eigen::MatrixXd& g, double rel_cutoff,
                                double* condition, int* rank) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("pinv_psd: eigendecomposition failed");
  }
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double emax = ev.cwiseMax(0.0).maxCoeff();
  const double cutoff = rel_cutoff * emax;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  int r = 0;
  double emin_kept = emax;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff && ev(i) > 0.0) {
      inv(i) = 1.0 / ev(i);
      emin_kept = std::min(emin_kept, ev(i));
      ++r;
    }
  }
  if (condition) *condition = (r > 0 && emin_kept > 0.0) ? emax / emin_kept : 0.0;
  if (rank) *rank = r;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Least-squares fit of [A B] from the snapshot matrices via the normal
// equations with an SVD-based pseudoinverse (relative cutoff 1e-10) and
// optional ridge term. Rank deficiency does not fail the fit; it is flagged
// in the report together with the Gram condition number.
inline LiftedPredictor fit(const DataMatrices& d, double ridge = 0.0,
                           EdmdReport* report = nullptr) {
  const Eigen::Index nd = d.n_samples();
  if (nd < 1) throw std::invalid_argument("fit: empty data");
  const Eigen::Index nz = d.X_lift.rows();
  if (d.Y_lift.rows() != nz || d.Y_lift.cols() != nd || d.U.cols() != nd) {
    throw std::invalid_argument("fit: inconsistent data dimensions");
  }
  if (nz % kObservablesPerPendulum != 0) {
    throw std::invalid_argument("fit: lifted dimension is not 6N");
  }
  const int n = static_cast<int>(nz) / kObservablesPerPendulum;

  // Gram matrix of W = [X_lift; U] and cross term Y W', both (small) x (small).
  Eigen::MatrixXd gram(nz + 1, nz + 1);
  gram.topLeftCorner(nz, nz) = d.X_lift * d.X_lift.transpose();
  gram.topRightCorner(nz, 1) = d.X_lift * d.U.transpose();
  gram.bottomLeftCorner(1, nz) = gram.topRightCorner(nz, 1).transpose();
  gram(nz, nz) = d.U.squaredNorm();

  Eigen::MatrixXd cross(nz, nz + 1);
  cross.leftCols(nz) = d.Y_lift * d.X_lift.transpose();
  cross.rightCols(1) = d.Y_lift * d.U.transpose();

  EdmdReport rep;
  rep.n_samples = static_cast<std::size_t>(nd);
  rep.underdetermined = nd < nz + 1;

  Eigen::MatrixXd ab;
  if (ridge > 0.0) {
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += ridge;
    ab = reg.ldlt().solve(cross.transpose()).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const double emax = es.eigenvalues().maxCoeff();
    const double emin = es.eigenvalues().minCoeff();
    rep.gram_condition = emin > 0.0 ? emax / emin : std::numeric_limits<double>::infinity();
    rep.rank = static_cast<int>(nz) + 1;
  } else {
    int rank = 0;
    ab = cross * detail::pinv_psd(gram, 1e-10, &rep.gram_condition, &rank);
    rep.rank = rank;
    rep.rank_deficient = rank < nz + 1;
  }

  LiftedPredictor pred;
  pred.A = ab.leftCols(nz);
  pred.B = ab.rightCols(1);
  pred.C = output_matrix(n);
  pred.n_pendulums = n;

  rep.residual_frobenius =
      (d.Y_lift - pred.A * d.X_lift - pred.B * d.U).norm();
  const double ynorm = d.Y_lift.norm();
  rep.relative_residual = ynorm > 0.0 ? rep.residual_frobenius / ynorm : 0.0;
  if (report) *report = rep;
  return pred;
}

// Open-loop rollout of the predictor from a raw measurement. Returns the
// len(u_seq)+1 predicted outputs; the first equals y0 exactly.
inline std::vector<Eigen::VectorXd> predict(const LiftedPredictor& pred,
                                            const ChainState& y0,
                                            const std::vector<double>& u_seq) {
  validate_state(y0, pred.n_pendulums);
  std::vector<Eigen::VectorXd> out;
  out.reserve(u_seq.size() + 1);
  Eigen::VectorXd z = lift(y0);
  out.push_back(pred.C * z);
  for (double u : u_seq) {
    z = pred.A * z + pred.B * u;
    out.push_back(pred.C * z);
  }
  return out;
}

}  // namespace fkmpc
