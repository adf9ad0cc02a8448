#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fkmpc/baselines.hpp"
#include "fkmpc/chain.hpp"
#include "fkmpc/edmd.hpp"
#include "fkmpc/experiments.hpp"
#include "fkmpc/integrator.hpp"
#include "fkmpc/kmpc.hpp"
#include "fkmpc/lifting.hpp"
#include "fkmpc/qp.hpp"
#include "fkmpc/random.hpp"

// Numerical cross-checks that validate each solver against an independent
// route: brute-force enumeration for the QP, a Riccati recursion for the
// receding-horizon feedback, a step-by-step rollout for the condensation,
// closed forms for the integrator. They back both the CLI `verify`
// subcommand and the test suites.
namespace fkmpc::oracle {

// Global optimum of a box QP by enumerating all 3^m active-set patterns
// (each constraint inactive, at lower, or at upper) and solving the
// equality-constrained KKT system of every pattern. Exponential, so only
// for small m.
inline std::optional<Eigen::VectorXd> active_set_box_qp(const BoxQp& p) {
  const Eigen::Index n = p.H.rows();
  const Eigen::Index m = p.A.rows();
  if (m > 12) throw std::invalid_argument("active_set_box_qp: too many constraints");
  const Eigen::LLT<Eigen::MatrixXd> hllt(p.H);
  if (hllt.info() != Eigen::Success) {
    throw std::invalid_argument("active_set_box_qp: H must be positive definite");
  }

  const double tol = 1e-9;
  double best_obj = std::numeric_limits<double>::infinity();
  std::optional<Eigen::VectorXd> best;

  std::vector<int> pattern(m, 0);  // 0 inactive, 1 at lower, 2 at upper
  const long total = static_cast<long>(std::pow(3.0, static_cast<double>(m)));
  for (long code = 0; code < total; ++code) {
    long c = code;
    int n_active = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      pattern[i] = static_cast<int>(c % 3);
      c /= 3;
      if (pattern[i] != 0) ++n_active;
    }
    Eigen::MatrixXd a_act(n_active, n);
    Eigen::VectorXd b_act(n_active);
    int row = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (pattern[i] == 0) continue;
      a_act.row(row) = p.A.row(i);
      b_act(row) = pattern[i] == 1 ? p.lower(i) : p.upper(i);
      ++row;
    }

    Eigen::VectorXd x;
    Eigen::VectorXd lambda;
    if (n_active == 0) {
      x = hllt.solve(-p.q);
    } else {
      // Schur complement on the active rows: (A H^-1 A') lambda = -(A H^-1 q + b)
      const Eigen::MatrixXd hia = hllt.solve(a_act.transpose());
      const Eigen::MatrixXd schur = a_act * hia;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(schur);
      if (!lu.isInvertible()) continue;  // dependent active rows; another pattern covers it
      lambda = lu.solve(-(a_act * hllt.solve(p.q) + b_act));
      x = hllt.solve(-(p.q + a_act.transpose() * lambda));
    }

    // primal feasibility
    const Eigen::VectorXd ax = p.A * x;
    bool ok = true;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (ax(i) < p.lower(i) - tol || ax(i) > p.upper(i) + tol) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    // dual feasibility: multiplier pushes away from the active bound
    row = 0;
    for (Eigen::Index i = 0; i < m && ok; ++i) {
      if (pattern[i] == 0) continue;
      // KKT written as Hx + q + A' mu = 0; mu >= 0 at upper, mu <= 0 at lower
      const double mu = lambda(row++);
      if (pattern[i] == 1 && mu > tol) ok = false;
      if (pattern[i] == 2 && mu < -tol) ok = false;
    }
    if (!ok) continue;
    const double obj = 0.5 * x.dot(p.H * x) + p.q.dot(x);
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  return best;
}

// Strictly convex random box QP that is feasible by construction: the box is
// centered so that it contains the image of a random point.
inline BoxQp random_feasible_box_qp(Rng& rng, int n, int m) {
  BoxQp p;
  Eigen::MatrixXd mrand(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) mrand(i, j) = rng.normal();
  p.H = mrand.transpose() * mrand + 0.1 * Eigen::MatrixXd::Identity(n, n);
  p.q.resize(n);
  for (int i = 0; i < n; ++i) p.q(i) = rng.normal();
  p.A.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) p.A(i, j) = rng.normal();
  Eigen::VectorXd x_feas(n);
  for (int i = 0; i < n; ++i) x_feas(i) = rng.normal();
  const Eigen::VectorXd ax = p.A * x_feas;
  p.lower.resize(m);
  p.upper.resize(m);
  for (int i = 0; i < m; ++i) {
    const double offset = 0.5 * rng.normal();
    const double radius = std::abs(offset) + std::abs(rng.normal()) + 0.1;
    p.lower(i) = ax(i) + offset - radius;
    p.upper(i) = ax(i) + offset + radius;
  }
  return p;
}

// Worst KKT violation of a candidate box-QP solution.
inline double kkt_residual(const BoxQp& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::VectorXd ax = p.A * x;
  double r = (p.H * x + p.q + p.A.transpose() * y).lpNorm<Eigen::Infinity>();
  for (Eigen::Index i = 0; i < p.A.rows(); ++i) {
    r = std::max(r, ax(i) - p.upper(i));
    r = std::max(r, p.lower(i) - ax(i));
    // complementary slackness
    if (y(i) > 0.0 && std::isfinite(p.upper(i))) {
      r = std::max(r, y(i) * std::abs(ax(i) - p.upper(i)));
    }
    if (y(i) < 0.0 && std::isfinite(p.lower(i))) {
      r = std::max(r, -y(i) * std::abs(ax(i) - p.lower(i)));
    }
  }
  return r;
}

// First input of the finite-horizon LQ regulator for
//   min sum_{k=0}^{Np-1} [ y_{k+1}' Q_{k+1} y_{k+1} + u_k' R u_k ],
// y = C z, computed by backward Riccati recursion (independent of the dense
// condensation route).
inline Eigen::RowVectorXd lq_first_gain(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                        const Eigen::MatrixXd& c, const Eigen::MatrixXd& q,
                                        const Eigen::MatrixXd& q_n, double r, int horizon) {
  const Eigen::Index nz = a.rows();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(nz, nz);
  Eigen::RowVectorXd gain;
  for (int k = horizon - 1; k >= 0; --k) {
    const Eigen::MatrixXd qbar =
        c.transpose() * ((k + 1 == horizon) ? q_n : q) * c;
    const Eigen::MatrixXd m = qbar + p;
    const double s = r + b.dot(m * b);
    gain = (b.transpose() * m * a) / s;
    p = a.transpose() * m * a - (a.transpose() * m * b) * gain;
    p = 0.5 * (p + p.transpose()).eval();
  }
  return gain;
}

// Tracking objective of the horizon problem evaluated by literal rollout of
// the predictor; reference stacked as r_1..r_Np. Used to cross-check the
// condensed quadratic form.
inline double rollout_objective(const LiftedPredictor& pred, const MpcWeights& w,
                                const Eigen::VectorXd& z0, const Eigen::VectorXd& r_stack,
                                const Eigen::VectorXd& u) {
  const Eigen::Index ny = pred.C.rows();
  double j = 0.0;
  Eigen::VectorXd z = z0;
  for (int k = 0; k < w.horizon; ++k) {
    z = pred.A * z + pred.B * u(k);
    const Eigen::VectorXd e = r_stack.segment(k * ny, ny) - pred.C * z;
    const Eigen::MatrixXd& q = (k + 1 == w.horizon) ? w.Q_N : w.Q;
    j += e.dot(q * e) + w.R * u(k) * u(k);
  }
  return j;
}

// Optimal input sequence of the horizon problem built by incremental rollout
// maps (z_k = phi_k z0 + gamma_k U assembled step by step), solved through
// the same QP module. An independent construction of the dense problem.
inline Eigen::VectorXd sparse_route_optimum(const LiftedPredictor& pred, const MpcWeights& w,
                                            const Eigen::VectorXd& z0,
                                            const Eigen::VectorXd& r_stack) {
  const Eigen::Index nz = pred.A.rows();
  const Eigen::Index ny = pred.C.rows();
  const int np = w.horizon;
  Eigen::MatrixXd h = w.R * Eigen::MatrixXd::Identity(np, np);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(np);

  Eigen::VectorXd phi = z0;                              // A^k z0, updated in place
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(nz, np); // d z_k / d U
  for (int k = 0; k < np; ++k) {
    phi = pred.A * phi;
    gamma = pred.A * gamma;
    gamma.col(k) = pred.B.col(0);
    const Eigen::MatrixXd cy = pred.C * gamma;       // d y_{k+1} / d U
    const Eigen::VectorXd y0 = pred.C * phi;         // y_{k+1} at U = 0
    const Eigen::MatrixXd& qk = (k + 1 == np) ? w.Q_N : w.Q;
    const Eigen::VectorXd rk = r_stack.segment(k * ny, ny);
    h += cy.transpose() * qk * cy;
    q += cy.transpose() * qk * (y0 - rk);
  }
  h = 0.5 * (h + h.transpose()).eval();

  BoxQp qp;
  qp.H = h;
  qp.q = q;
  qp.A = Eigen::MatrixXd::Identity(np, np);
  qp.lower = Eigen::VectorXd::Constant(np, w.u_min);
  qp.upper = Eigen::VectorXd::Constant(np, w.u_max);
  QpSettings settings;
  settings.tol_abs = 1e-9;
  settings.tol_rel = 1e-9;
  settings.max_iter = 20000;
  return solve_box_qp(qp, settings).x;
}

}  // namespace fkmpc::oracle

namespace fkmpc {

// Invariant and oracle suite behind `fkmpc verify`: prints one line per
// check and returns the number of failures.
inline int run_verification(std::ostream& os) {
  int failures = 0;
  const auto check = [&](const std::string& name, bool ok, const std::string& detail) {
    os << (ok ? "ok   " : "FAIL ") << name;
    if (!detail.empty()) os << "  (" << detail << ")";
    os << "\n";
    if (!ok) ++failures;
  };
  const auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return std::string(buf);
  };

  const ChainParams params;

  {  // Laplacian structure
    bool ok = true;
    for (int n : {2, 3, 5, 10}) {
      const CouplingStructure c = build_coupling(n, params);
      ok = ok && (c.laplacian - c.laplacian.transpose()).norm() == 0.0;
      ok = ok && c.laplacian.rowwise().sum().lpNorm<Eigen::Infinity>() < 1e-14;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.laplacian);
      ok = ok && es.eigenvalues()(0) > -1e-12 && es.eigenvalues()(1) > 1e-9;
    }
    check("laplacian structure (symmetric, zero row sums, connected)", ok, "");
  }

  {  // matrix form == component form
    double worst = 0.0;
    Rng rng(7);
    for (int n : {2, 3, 5, 10}) {
      const CouplingStructure c = build_coupling(n, params);
      for (int trial = 0; trial < 50; ++trial) {
        ChainState x(2 * n);
        for (int i = 0; i < 2 * n; ++i) x(i) = rng.uniform(-3.0, 3.0);
        const double u = rng.uniform(-0.1, 0.1);
        worst = std::max(worst, (vector_field(x, u, params, c) -
                                 vector_field_matrix(x, u, params, c))
                                    .lpNorm<Eigen::Infinity>());
      }
    }
    check("stacked matrix form matches per-pendulum equations", worst < 1e-12,
          "worst " + fmt(worst));
  }

  {  // equilibria are fixed points
    const CouplingStructure c = build_coupling(5, params);
    const double r1 =
        vector_field(equilibrium(EquilibriumKind::stable, 5), 0.0, params, c)
            .lpNorm<Eigen::Infinity>();
    const double r2 =
        vector_field(equilibrium(EquilibriumKind::unstable, 5), 0.0, params, c)
            .lpNorm<Eigen::Infinity>();
    check("equilibria are fixed points", r1 < 1e-12 && r2 < 1e-12,
          "stable " + fmt(r1) + ", unstable " + fmt(r2));
  }

  {  // passive energy decay
    const CouplingStructure c = build_coupling(5, params);
    Rng rng(11);
    ChainState x0 = ChainState::Zero(10);
    for (int i = 0; i < 5; ++i) x0(2 * i) = rng.uniform(-1.0, 1.0);
    SimConfig cfg;
    cfg.duration = 5.0;
    const Trajectory traj =
        simulate(x0, [](int, double, const ChainState&) { return 0.0; }, cfg, params, c);
    bool ok = !traj.meta.error;
    double worst_rise = 0.0;
    for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
      worst_rise = std::max(worst_rise, total_energy(traj.states[k + 1], params) -
                                            total_energy(traj.states[k], params));
    }
    check("unforced energy is non-increasing", ok && worst_rise <= 1e-8,
          "worst rise " + fmt(worst_rise));
  }

  {  // rk4: closed-form exponential and order-4 Richardson ratio
    const auto decay = [](const Eigen::VectorXd& x) { return (-x).eval(); };
    Eigen::VectorXd one(1);
    one << 1.0;
    const double val = rk4_step(decay, one, 0.1)(0);
    const bool exp_ok =
        std::abs(val - 0.9048375) < 1e-12 && std::abs(val - std::exp(-0.1)) < 1e-7;

    const auto swing = [&params](const Eigen::VectorXd& x) {
      Eigen::VectorXd dx(2);
      dx << x(1), -(params.gravity_torque() / params.inertia) * std::sin(x(0)) -
                      (params.pivot_damping / params.inertia) * x(1);
      return dx;
    };
    const auto integrate = [&](double h, double t_end) {
      Eigen::VectorXd x(2);
      x << 2.0, 0.0;
      const int steps = static_cast<int>(std::llround(t_end / h));
      for (int i = 0; i < steps; ++i) x = rk4_step(swing, x, h);
      return x;
    };
    const Eigen::VectorXd ref = integrate(1e-4, 1.0);
    const double e1 = (integrate(8e-3, 1.0) - ref).norm();
    const double e2 = (integrate(4e-3, 1.0) - ref).norm();
    const double ratio = e1 / e2;
    check("rk4 order (exponential + Richardson ratio)",
          exp_ok && ratio > 12.0 && ratio < 20.0, "ratio " + fmt(ratio));
  }

  {  // lifting recovery
    const int n = 5;
    const Eigen::MatrixXd c_mat = output_matrix(n);
    Rng rng(13);
    bool ok = true;
    for (int trial = 0; trial < 100; ++trial) {
      ChainState y(2 * n);
      for (int i = 0; i < 2 * n; ++i) y(i) = rng.uniform(-6.0, 6.0);
      ok = ok && (c_mat * lift(y) - y).lpNorm<Eigen::Infinity>() == 0.0;
    }
    check("output matrix recovers the state exactly", ok, "");
  }

  {  // EDMD exact recovery of a linear lifted system
    Rng rng(17);
    const int nz = 6;
    Eigen::MatrixXd a0(nz, nz), b0(nz, 1);
    for (int i = 0; i < nz; ++i) {
      b0(i, 0) = rng.uniform(-1.0, 1.0);
      for (int j = 0; j < nz; ++j) a0(i, j) = rng.uniform(-1.0, 1.0) * 0.3;
    }
    const int nd = 400;
    DataMatrices d;
    d.X.resize(2, nd);
    d.X_lift.resize(nz, nd);
    d.Y_lift.resize(nz, nd);
    d.U.resize(nd);
    for (int k = 0; k < nd; ++k) {
      Eigen::VectorXd z(nz);
      for (int i = 0; i < nz; ++i) z(i) = rng.uniform(-1.0, 1.0);
      const double u = rng.uniform(-1.0, 1.0);
      d.X_lift.col(k) = z;
      d.Y_lift.col(k) = a0 * z + b0 * u;
      d.U(k) = u;
      d.X.col(k) = z.head(2);
    }
    const LiftedPredictor pred = fit(d);
    const double err = std::max((pred.A - a0).norm(), (pred.B - b0).norm());
    check("edmd recovers a known linear lifted system", err < 1e-8, "error " + fmt(err));
  }

  {  // CARE closed forms and the chain problem
    Eigen::MatrixXd a(1, 1), b(1, 1), q(1, 1), r(1, 1);
    a << 0.0;
    b << 1.0;
    q << 1.0;
    r << 1.0;
    const double s1 = solve_care(a, b, q, r)(0, 0);
    a << 1.0;
    const double s2 = solve_care(a, b, q, r)(0, 0);
    bool ok = std::abs(s1 - 1.0) < 1e-10 && std::abs(s2 - (1.0 + std::sqrt(2.0))) < 1e-10;

    const CouplingStructure c = build_coupling(5, params);
    const LinearizedChain lin = linearize(params, c, EquilibriumKind::stable);
    Eigen::Matrix2d qb;
    qb << 1000.0, 0.0, 0.0, 0.01;
    const Eigen::MatrixXd qq =
        Eigen::kroneckerProduct(Eigen::MatrixXd::Identity(5, 5), qb).eval();
    Eigen::MatrixXd rr(1, 1);
    rr << 0.1;
    const Eigen::MatrixXd s = solve_care(lin.A_tilde, lin.B_tilde, qq, rr);
    const double res = (lin.A_tilde.transpose() * s + s * lin.A_tilde -
                        s * lin.B_tilde * rr.inverse() * lin.B_tilde.transpose() * s + qq)
                           .norm();
    const Eigen::RowVectorXd gain = (rr.inverse() * lin.B_tilde.transpose() * s).row(0);
    const Eigen::MatrixXd acl = lin.A_tilde - lin.B_tilde * gain;
    const double spectral_abscissa = Eigen::EigenSolver<Eigen::MatrixXd>(acl)
                                         .eigenvalues()
                                         .real()
                                         .maxCoeff();
    ok = ok && res < 1e-8 * s.norm() && spectral_abscissa < 0.0;
    check("care (closed forms, chain residual, stable closed loop)", ok,
          "residual " + fmt(res / s.norm()));
  }

  {  // box QP against the active-set enumeration oracle
    Rng rng(19);
    double worst_obj_gap = 0.0, worst_kkt = 0.0;
    bool ok = true;
    for (int trial = 0; trial < 60; ++trial) {
      const int n = 1 + static_cast<int>(rng.next_u64() % 6);
      const int m = 1 + static_cast<int>(rng.next_u64() % 5);
      const BoxQp p = oracle::random_feasible_box_qp(rng, n, m);
      const auto ref = oracle::active_set_box_qp(p);
      ok = ok && ref.has_value();
      if (!ref) continue;
      QpSettings settings;
      settings.tol_abs = 1e-8;
      settings.tol_rel = 1e-8;
      settings.max_iter = 20000;
      const QpSolution sol = solve_box_qp(p, settings);
      ok = ok && sol.status == QpStatus::solved;
      const double obj_sol = 0.5 * sol.x.dot(p.H * sol.x) + p.q.dot(sol.x);
      const double obj_ref = 0.5 * ref->dot(p.H * (*ref)) + p.q.dot(*ref);
      worst_obj_gap = std::max(worst_obj_gap, std::abs(obj_sol - obj_ref));
      worst_kkt = std::max(worst_kkt, oracle::kkt_residual(p, sol.x, sol.y));
    }
    check("box qp matches active-set enumeration",
          ok && worst_obj_gap < 1e-5 && worst_kkt < 1e-6,
          "obj gap " + fmt(worst_obj_gap) + ", kkt " + fmt(worst_kkt));
  }

  {  // condensation rollout identity + dense/sparse optimum agreement
    Rng rng(23);
    double worst_rollout = 0.0, worst_u0 = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 2;
      const int nz = 6 * n;
      LiftedPredictor pred;
      pred.n_pendulums = n;
      pred.A.resize(nz, nz);
      pred.B.resize(nz, 1);
      for (int i = 0; i < nz; ++i) {
        pred.B(i, 0) = rng.uniform(-1.0, 1.0);
        for (int j = 0; j < nz; ++j) pred.A(i, j) = 0.9 * rng.uniform(-1.0, 1.0) / nz * 3;
      }
      pred.C = output_matrix(n);
      TaskSpec task = make_task(TaskKind::stable_eq, n, 1);
      task.horizon = 2 + static_cast<int>(rng.next_u64() % 4);
      const CouplingStructure c = build_coupling(n, params);
      MpcWeights w = build_weights(task, params, c);
      const DenseMpcProblem prob = condense(pred, w);

      Eigen::VectorXd z0(nz), u(task.horizon);
      for (int i = 0; i < nz; ++i) z0(i) = rng.uniform(-1.0, 1.0);
      for (int i = 0; i < task.horizon; ++i) u(i) = rng.uniform(-0.1, 0.1);
      // dense prediction vs literal rollout
      const Eigen::VectorXd dense_y =
          prob.output_prediction * z0 + prob.output_impulse * u;
      Eigen::VectorXd z = z0;
      for (int k = 0; k < task.horizon; ++k) {
        z = pred.A * z + pred.B * u(k);
        worst_rollout =
            std::max(worst_rollout, (dense_y.segment(k * 2 * n, 2 * n) - pred.C * z)
                                        .lpNorm<Eigen::Infinity>());
      }

      Eigen::VectorXd r_stack = Eigen::VectorXd::Zero(task.horizon * 2 * n);
      const Eigen::VectorXd q = linear_term(prob, z0, r_stack);
      QpSettings settings;
      settings.tol_abs = 1e-9;
      settings.tol_rel = 1e-9;
      settings.max_iter = 20000;
      BoxQpSolver solver(prob.H, Eigen::MatrixXd::Identity(task.horizon, task.horizon),
                         settings);
      const QpSolution sol = solver.solve(q, prob.u_lower, prob.u_upper);
      const Eigen::VectorXd u_sparse = oracle::sparse_route_optimum(pred, w, z0, r_stack);
      worst_u0 = std::max(worst_u0, std::abs(sol.x(0) - u_sparse(0)));
    }
    check("dense condensation (rollout identity, sparse-route optimum)",
          worst_rollout < 1e-10 && worst_u0 < 1e-6,
          "rollout " + fmt(worst_rollout) + ", u0 gap " + fmt(worst_u0));
  }

  {  // receding-horizon QP equals the LQ feedback when constraints are inactive
    Rng rng(29);
    const int nz = 6;
    LiftedPredictor pred;
    pred.n_pendulums = 1;
    pred.A.resize(nz, nz);
    pred.B.resize(nz, 1);
    for (int i = 0; i < nz; ++i) {
      pred.B(i, 0) = rng.uniform(-1.0, 1.0);
      for (int j = 0; j < nz; ++j) pred.A(i, j) = rng.uniform(-0.45, 0.45) / 2;
    }
    pred.A.diagonal().array() += 0.3;
    pred.C = output_matrix(1);
    MpcWeights w;
    w.Q = Eigen::Matrix2d::Identity();
    w.Q_N = 2.0 * Eigen::Matrix2d::Identity();
    w.R = 0.5;
    w.horizon = 12;
    w.u_min = -1e9;
    w.u_max = 1e9;
    const DenseMpcProblem prob = condense(pred, w);
    const Eigen::RowVectorXd gain =
        oracle::lq_first_gain(pred.A, pred.B.col(0), pred.C, w.Q, w.Q_N, w.R, w.horizon);
    QpSettings settings;
    settings.tol_abs = 1e-10;
    settings.tol_rel = 1e-10;
    settings.max_iter = 40000;
    BoxQpSolver solver(prob.H, Eigen::MatrixXd::Identity(w.horizon, w.horizon), settings);
    Eigen::VectorXd z(nz);
    for (int i = 0; i < nz; ++i) z(i) = rng.uniform(-1.0, 1.0);
    double worst = 0.0;
    Eigen::VectorXd warm_x, warm_y;
    bool have_warm = false;
    for (int step = 0; step < 25; ++step) {
      const Eigen::VectorXd q =
          linear_term(prob, z, Eigen::VectorXd::Zero(w.horizon * 2));
      const QpSolution sol = have_warm
                                 ? solver.solve(q, prob.u_lower, prob.u_upper, &warm_x, &warm_y)
                                 : solver.solve(q, prob.u_lower, prob.u_upper);
      warm_x = sol.x;
      warm_y = sol.y;
      have_warm = true;
      const double u_lq = -gain.dot(z);
      worst = std::max(worst, std::abs(sol.x(0) - u_lq));
      z = pred.A * z + pred.B * sol.x(0);
    }
    check("receding-horizon input equals Riccati feedback", worst < 1e-6,
          "worst gap " + fmt(worst));
  }

  {  // periodic reference conserves the leader energy
    const ReferenceTrajectory ref =
        periodic_reference(Eigen::Vector2d(0.0, 17.0), 10.0, 0.005, params);
    const double e0 = single_pendulum_energy(ref.samples.front(), params);
    double worst = 0.0;
    bool revolving = true;
    for (std::size_t k = 0; k < ref.samples.size(); ++k) {
      worst = std::max(worst,
                       std::abs(single_pendulum_energy(ref.samples[k], params) - e0));
      if (k > 0 && ref.samples[k](0) <= ref.samples[k - 1](0)) revolving = false;
    }
    check("periodic reference (energy drift, monotone rotation)",
          worst / std::abs(e0) < 1e-6 && revolving,
          "relative drift " + fmt(worst / std::abs(e0)));
  }

  return failures;
}

}  // namespace fkmpc
