#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fkmpc {

// min 1/2 x'Hx + q'x  subject to  lower <= A x <= upper.
struct BoxQp {
  Eigen::MatrixXd H;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  void validate() const {
    const Eigen::Index n = H.rows();
    if (H.cols() != n || q.size() != n || A.cols() != n) {
      throw std::invalid_argument("BoxQp: inconsistent dimensions");
    }
    if (lower.size() != A.rows() || upper.size() != A.rows()) {
      throw std::invalid_argument("BoxQp: bound sizes must match constraint rows");
    }
    if ((H - H.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * (1.0 + H.norm())) {
      throw std::invalid_argument("BoxQp: H must be symmetric");
    }
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (lower(i) > upper(i)) {
        throw std::invalid_argument("BoxQp: lower bound exceeds upper bound");
      }
    }
  }
};

enum class QpStatus { solved, max_iter, infeasible };

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // dual variables of the box constraints
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double rho_final = 0.0;
};

struct QpSettings {
  double rho = 0.1;       // ADMM penalty
  double sigma = 1e-6;    // proximal regularization
  double alpha = 1.6;     // over-relaxation
  double tol_abs = 1e-6;
  double tol_rel = 1e-6;
  int max_iter = 4000;
  bool adaptive_rho = true;
  int rho_check_interval = 25;
  double h_regularization = 1e-9;  // added to diag(H) before factorization
};

/**
 * Operator-splitting (ADMM) solver for box-constrained QPs.
 *
 * The KKT factorization depends only on (H, A, rho), so a solver instance is
 * reused across MPC steps where only q and the bounds change; that is what
 * makes thousands of warm-started solves per run cheap. Instances are
 * single-owner and not thread-safe.
 */
class BoxQpSolver {
 public:
  BoxQpSolver(Eigen::MatrixXd h, Eigen::MatrixXd a, QpSettings settings = {})
      : settings_(settings), rho_(settings.rho) {
    if (h.rows() != h.cols() || a.cols() != h.rows()) {
      throw std::invalid_argument("BoxQpSolver: inconsistent dimensions");
    }
    if ((h - h.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * (1.0 + h.norm())) {
      throw std::invalid_argument("BoxQpSolver: H must be symmetric");
    }
    h_ = 0.5 * (h + h.transpose());
    h_.diagonal().array() += settings_.h_regularization;
    a_ = std::move(a);
    ata_ = a_.transpose() * a_;
    factorize();
  }

  QpSolution solve(const Eigen::VectorXd& q, const Eigen::VectorXd& lower,
                   const Eigen::VectorXd& upper,
                   const Eigen::VectorXd* warm_x = nullptr,
                   const Eigen::VectorXd* warm_y = nullptr) {
    const Eigen::Index n = h_.rows();
    const Eigen::Index m = a_.rows();
    if (q.size() != n || lower.size() != m || upper.size() != m) {
      throw std::invalid_argument("BoxQpSolver::solve: inconsistent dimensions");
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      if (lower(i) > upper(i)) {
        throw std::invalid_argument("BoxQpSolver::solve: lower > upper");
      }
    }

    Eigen::VectorXd x = warm_x ? *warm_x : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd y = warm_y ? *warm_y : Eigen::VectorXd::Zero(m);
    Eigen::VectorXd z = clamp(a_ * x, lower, upper);

    QpSolution sol;
    Eigen::VectorXd best_x = x, best_y = y;
    double best_score = std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= settings_.max_iter; ++iter) {
      const Eigen::VectorXd rhs =
          settings_.sigma * x - q + a_.transpose() * (rho_ * z - y);
      const Eigen::VectorXd x_tilde = kkt_.solve(rhs);
      const Eigen::VectorXd z_tilde = a_ * x_tilde;

      x = settings_.alpha * x_tilde + (1.0 - settings_.alpha) * x;
      const Eigen::VectorXd z_relaxed =
          settings_.alpha * z_tilde + (1.0 - settings_.alpha) * z;
      const Eigen::VectorXd z_new = clamp(z_relaxed + y / rho_, lower, upper);
      const Eigen::VectorXd y_prev = y;
      y += rho_ * (z_relaxed - z_new);
      z = z_new;

      const Eigen::VectorXd ax = a_ * x;
      const Eigen::VectorXd hx = h_ * x;
      const Eigen::VectorXd aty = a_.transpose() * y;
      const double r_prim = (ax - z).lpNorm<Eigen::Infinity>();
      const double r_dual = (hx + q + aty).lpNorm<Eigen::Infinity>();
      const double prim_scale =
          std::max(ax.lpNorm<Eigen::Infinity>(), z.lpNorm<Eigen::Infinity>());
      const double dual_scale =
          std::max({hx.lpNorm<Eigen::Infinity>(), aty.lpNorm<Eigen::Infinity>(),
                    q.lpNorm<Eigen::Infinity>()});
      const double eps_prim = settings_.tol_abs + settings_.tol_rel * prim_scale;
      const double eps_dual = settings_.tol_abs + settings_.tol_rel * dual_scale;

      sol.iterations = iter;
      sol.primal_residual = r_prim;
      sol.dual_residual = r_dual;
      if (std::max(r_prim, r_dual) < best_score) {
        best_score = std::max(r_prim, r_dual);
        best_x = x;
        best_y = y;
      }
      if (r_prim <= eps_prim && r_dual <= eps_dual) {
        sol.status = QpStatus::solved;
        break;
      }

      if (primal_infeasibility_certificate(y - y_prev, lower, upper)) {
        sol.status = QpStatus::infeasible;
        break;
      }

      if (settings_.adaptive_rho && iter % settings_.rho_check_interval == 0) {
        const double sp = r_prim / std::max(prim_scale, 1e-12);
        const double sd = r_dual / std::max(dual_scale, 1e-12);
        const double ratio = sp / std::max(sd, 1e-30);
        if (ratio > 10.0 || ratio < 0.1) {
          rho_ = std::clamp(rho_ * std::sqrt(ratio), 1e-6, 1e6);
          factorize();
        }
      }
    }
    if (sol.status == QpStatus::max_iter) {
      sol.x = std::move(best_x);  // best iterate by worst KKT residual
      sol.y = std::move(best_y);
    } else {
      sol.x = x;
      sol.y = y;
    }
    sol.rho_final = rho_;
    return sol;
  }

  double objective(const Eigen::VectorXd& q, const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(h_ * x) + q.dot(x);
  }

 private:
  static Eigen::VectorXd clamp(const Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi) {
    return v.cwiseMax(lo).cwiseMin(hi);
  }

  void factorize() {
    Eigen::MatrixXd kkt = h_ + rho_ * ata_;
    kkt.diagonal().array() += settings_.sigma;
    kkt_.compute(kkt);
    if (kkt_.info() != Eigen::Success) {
      throw std::runtime_error("BoxQpSolver: KKT factorization failed (H not PSD?)");
    }
  }

  bool primal_infeasibility_certificate(const Eigen::VectorXd& dy,
                                        const Eigen::VectorXd& lower,
                                        const Eigen::VectorXd& upper) const {
    const double dy_norm = dy.lpNorm<Eigen::Infinity>();
    if (dy_norm <= 1e-14) return false;
    const double eps = settings_.tol_abs * dy_norm;
    if ((a_.transpose() * dy).lpNorm<Eigen::Infinity>() > eps) return false;
    double support = 0.0;
    for (Eigen::Index i = 0; i < dy.size(); ++i) {
      if (dy(i) > 0.0) {
        if (!std::isfinite(upper(i))) return false;
        support += upper(i) * dy(i);
      } else if (dy(i) < 0.0) {
        if (!std::isfinite(lower(i))) return false;
        support += lower(i) * dy(i);
      }
    }
    return support < -eps;
  }

  QpSettings settings_;
  double rho_;
  Eigen::MatrixXd h_;
  Eigen::MatrixXd a_;
  Eigen::MatrixXd ata_;
  Eigen::LDLT<Eigen::MatrixXd> kkt_;
};

// One-shot convenience wrapper.
inline QpSolution solve_box_qp(const BoxQp& p, QpSettings settings = {},
                               const Eigen::VectorXd* warm_x = nullptr,
                               const Eigen::VectorXd* warm_y = nullptr) {
  p.validate();
  BoxQpSolver solver(p.H, p.A, settings);
  return solver.solve(p.q, p.lower, p.upper, warm_x, warm_y);
}

}  // namespace fkmpc
