#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fkmpc/chain.hpp"
#include "fkmpc/edmd.hpp"
#include "fkmpc/lifting.hpp"
#include "fkmpc/qp.hpp"

namespace fkmpc {

// Tracking weights and horizon of the receding-horizon controller.
struct MpcWeights {
  Eigen::MatrixXd Q;    // 2N x 2N stage error weight
  Eigen::MatrixXd Q_N;  // 2N x 2N terminal error weight
  double R = 0.1;       // scalar input weight
  int horizon = 50;
  double u_min = -0.1;
  double u_max = 0.1;
  // Optional bounds on the lifted state; empty means unbounded, which keeps
  // the condensed QP at horizon-many variables and constraints.
  Eigen::VectorXd z_min;
  Eigen::VectorXd z_max;

  void validate(int ny) const {
    if (Q.rows() != ny || Q.cols() != ny || Q_N.rows() != ny || Q_N.cols() != ny) {
      throw std::invalid_argument("MpcWeights: Q/Q_N must be 2N x 2N");
    }
    if ((Q - Q.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * (1.0 + Q.norm()) ||
        (Q_N - Q_N.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * (1.0 + Q_N.norm())) {
      throw std::invalid_argument("MpcWeights: Q/Q_N must be symmetric");
    }
    if (!(R > 0.0)) throw std::invalid_argument("MpcWeights: R must be positive");
    if (horizon < 1) throw std::invalid_argument("MpcWeights: horizon must be >= 1");
    if (!(u_min < u_max)) throw std::invalid_argument("MpcWeights: u_min must be < u_max");
  }
};

// Condensed form of the horizon-Np tracking problem: predicted states are
// eliminated so the decision vector is the input sequence U alone.
//
//   A_hat = [A; A^2; ...; A^Np],   B_hat(i,j) = A^(i-j) B  for i >= j,
//   C_hat = I (x) C,  Q_hat = blkdiag(Q, ..., Q, Q_N),  R_hat = R I,
//   H = R_hat + B_hat' C_hat' Q_hat C_hat B_hat.
struct DenseMpcProblem {
  int horizon = 0;
  int nz = 0;  // lifted dimension
  int ny = 0;  // output dimension 2N

  Eigen::MatrixXd A_hat;  // (Np*nz) x nz
  Eigen::MatrixXd B_hat;  // (Np*nz) x Np
  Eigen::MatrixXd C_hat;  // (Np*ny) x (Np*nz)
  Eigen::MatrixXd Q_hat;  // (Np*ny) x (Np*ny)
  Eigen::MatrixXd R_hat;  // Np x Np
  Eigen::MatrixXd H;      // Np x Np

  // Cached products for the per-step linear term.
  Eigen::MatrixXd output_prediction;  // C_hat * A_hat
  Eigen::MatrixXd output_impulse;     // C_hat * B_hat
  Eigen::MatrixXd q_map;              // (C_hat B_hat)' Q_hat

  Eigen::VectorXd u_lower, u_upper;  // per-step input bound stacks
  bool has_state_bounds = false;
  Eigen::VectorXd z_lower_stack, z_upper_stack;  // (Np*nz) when present
};

inline DenseMpcProblem condense(const LiftedPredictor& pred, const MpcWeights& w) {
  const int nz = static_cast<int>(pred.A.rows());
  const int ny = static_cast<int>(pred.C.rows());
  if (pred.A.cols() != nz || pred.B.rows() != nz || pred.B.cols() != 1 ||
      pred.C.cols() != nz) {
    throw std::invalid_argument("condense: inconsistent predictor dimensions");
  }
  w.validate(ny);
  const int np = w.horizon;

  DenseMpcProblem prob;
  prob.horizon = np;
  prob.nz = nz;
  prob.ny = ny;

  prob.A_hat.resize(np * nz, nz);
  prob.B_hat = Eigen::MatrixXd::Zero(np * nz, np);
  Eigen::MatrixXd a_pow = pred.A;
  std::vector<Eigen::VectorXd> impulse(np);  // impulse[t] = A^t B
  impulse[0] = pred.B.col(0);
  for (int t = 1; t < np; ++t) impulse[t] = pred.A * impulse[t - 1];
  for (int i = 0; i < np; ++i) {
    prob.A_hat.middleRows(i * nz, nz) = a_pow;
    if (i + 1 < np) a_pow = a_pow * pred.A;
    for (int j = 0; j <= i; ++j) {
      prob.B_hat.block(i * nz, j, nz, 1) = impulse[i - j];
    }
  }

  prob.C_hat = Eigen::MatrixXd::Zero(np * ny, np * nz);
  prob.Q_hat = Eigen::MatrixXd::Zero(np * ny, np * ny);
  for (int i = 0; i < np; ++i) {
    prob.C_hat.block(i * ny, i * nz, ny, nz) = pred.C;
    prob.Q_hat.block(i * ny, i * ny, ny, ny) = (i == np - 1) ? w.Q_N : w.Q;
  }
  prob.R_hat = w.R * Eigen::MatrixXd::Identity(np, np);

  prob.output_prediction = prob.C_hat * prob.A_hat;
  prob.output_impulse = prob.C_hat * prob.B_hat;
  prob.q_map = prob.output_impulse.transpose() * prob.Q_hat;
  prob.H = prob.R_hat + prob.q_map * prob.output_impulse;
  const double asym = (prob.H - prob.H.transpose()).lpNorm<Eigen::Infinity>();
  if (asym > 1e-10 * (1.0 + prob.H.norm())) {
    throw std::runtime_error("condense: Hessian lost symmetry");
  }
  prob.H = 0.5 * (prob.H + prob.H.transpose()).eval();

  prob.u_lower = Eigen::VectorXd::Constant(np, w.u_min);
  prob.u_upper = Eigen::VectorXd::Constant(np, w.u_max);

  if (w.z_min.size() != 0 && w.z_min.size() != nz) {
    throw std::invalid_argument("condense: z_min size mismatch");
  }
  if (w.z_max.size() != 0 && w.z_max.size() != nz) {
    throw std::invalid_argument("condense: z_max size mismatch");
  }
  const bool z_bounded = w.z_min.size() == nz || w.z_max.size() == nz;
  if (z_bounded) {
    prob.has_state_bounds = true;
    const Eigen::VectorXd zmin =
        w.z_min.size() == nz
            ? w.z_min
            : Eigen::VectorXd::Constant(nz, -std::numeric_limits<double>::infinity());
    const Eigen::VectorXd zmax =
        w.z_max.size() == nz
            ? w.z_max
            : Eigen::VectorXd::Constant(nz, std::numeric_limits<double>::infinity());
    prob.z_lower_stack = zmin.replicate(np, 1);
    prob.z_upper_stack = zmax.replicate(np, 1);
  }
  return prob;
}

// Linear term of the condensed objective for the current lifted state and
// stacked reference window (r_1 ... r_Np):
//   q = B_hat' C_hat' Q_hat (C_hat A_hat z0 - r_stack).
// With this q, 1/2 U'HU + q'U reproduces the stage-cost sum up to a factor 2
// and a U-independent constant, so the minimizer is that of the tracking
// objective.
inline Eigen::VectorXd linear_term(const DenseMpcProblem& prob, const Eigen::VectorXd& z0,
                                   const Eigen::VectorXd& r_stack) {
  if (z0.size() != prob.nz) throw std::invalid_argument("linear_term: z0 size mismatch");
  if (r_stack.size() != static_cast<Eigen::Index>(prob.horizon) * prob.ny) {
    throw std::invalid_argument("linear_term: r_stack size mismatch");
  }
  return prob.q_map * (prob.output_prediction * z0 - r_stack);
}

/**
 * Receding-horizon controller over a lifted predictor.
 *
 * Per control step: lift the measurement, refresh the linear term and bound
 * vectors, warm-start the QP from the shifted previous solution and apply the
 * first input of the optimal sequence. The QP matrices are condensed once at
 * construction; an exhausted iteration budget applies the best iterate and
 * counts a warning instead of failing the run.
 */
class MpcController {
 public:
  struct StepStats {
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double wall_ms = 0.0;
  };

  MpcController(LiftedPredictor pred, MpcWeights weights, ReferenceTrajectory ref,
                QpSettings qp_settings = {})
      : pred_(std::move(pred)),
        weights_(std::move(weights)),
        ref_(std::move(ref)),
        prob_(condense(pred_, weights_)) {
    Eigen::MatrixXd a_qp;
    if (prob_.has_state_bounds) {
      a_qp.resize(prob_.horizon + prob_.horizon * prob_.nz, prob_.horizon);
      a_qp.topRows(prob_.horizon) =
          Eigen::MatrixXd::Identity(prob_.horizon, prob_.horizon);
      a_qp.bottomRows(prob_.horizon * prob_.nz) = prob_.B_hat;
    } else {
      a_qp = Eigen::MatrixXd::Identity(prob_.horizon, prob_.horizon);
    }
    solver_ = std::make_unique<BoxQpSolver>(prob_.H, std::move(a_qp), qp_settings);
  }

  double operator()(int k, double /*t*/, const ChainState& x) {
    const auto t0 = std::chrono::steady_clock::now();
    const int np = prob_.horizon;
    const Eigen::VectorXd z0 = lift(x);

    ref_.extend_to(static_cast<std::size_t>(k) + np + 1);
    Eigen::VectorXd r_stack(np * prob_.ny);
    const int n = prob_.ny / 2;
    for (int j = 0; j < np; ++j) {
      const Eigen::Vector2d s = ref_.sample(static_cast<std::size_t>(k) + 1 + j);
      for (int i = 0; i < n; ++i) r_stack.segment<2>(j * prob_.ny + 2 * i) = s;
    }

    const Eigen::VectorXd q = linear_term(prob_, z0, r_stack);
    Eigen::VectorXd lower = prob_.u_lower;
    Eigen::VectorXd upper = prob_.u_upper;
    if (prob_.has_state_bounds) {
      const Eigen::VectorXd offset = prob_.A_hat * z0;
      lower.conservativeResize(np + np * prob_.nz);
      upper.conservativeResize(np + np * prob_.nz);
      lower.tail(np * prob_.nz) = prob_.z_lower_stack - offset;
      upper.tail(np * prob_.nz) = prob_.z_upper_stack - offset;
    }

    QpSolution sol;
    if (have_warm_) {
      sol = solver_->solve(q, lower, upper, &warm_x_, &warm_y_);
    } else {
      sol = solver_->solve(q, lower, upper);
    }
    if (sol.status == QpStatus::max_iter) ++qp_warning_count_;
    if (sol.status == QpStatus::infeasible) ++qp_infeasible_count_;

    // Shifted warm start for the next step.
    warm_x_ = sol.x;
    warm_x_.head(np - 1) = sol.x.tail(np - 1);
    warm_y_ = sol.y;
    warm_y_.head(np - 1) = sol.y.head(np).tail(np - 1);
    have_warm_ = true;

    const auto t1 = std::chrono::steady_clock::now();
    stats_.push_back({sol.iterations, sol.primal_residual, sol.dual_residual,
                      std::chrono::duration<double, std::milli>(t1 - t0).count()});
    return std::clamp(sol.x(0), weights_.u_min, weights_.u_max);
  }

  const std::vector<StepStats>& stats() const { return stats_; }
  int qp_warning_count() const { return qp_warning_count_; }
  int qp_infeasible_count() const { return qp_infeasible_count_; }
  const DenseMpcProblem& problem() const { return prob_; }

 private:
  LiftedPredictor pred_;
  MpcWeights weights_;
  ReferenceTrajectory ref_;
  DenseMpcProblem prob_;
  std::unique_ptr<BoxQpSolver> solver_;
  Eigen::VectorXd warm_x_, warm_y_;
  bool have_warm_ = false;
  int qp_warning_count_ = 0;
  int qp_infeasible_count_ = 0;
  std::vector<StepStats> stats_;
};

}  // namespace fkmpc
