#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace fkmpc {

// Classical fixed-step 4th-order Runge-Kutta update. The right-hand side is
// treated as autonomous over the step (any control input is held constant).
template <typename F, typename Vec>
Vec rk4_step(F&& f, const Vec& x, double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("rk4_step: step size must be positive");
  }
  const Vec k1 = f(x);
  const Vec k2 = f(Vec(x + (0.5 * h) * k1));
  const Vec k3 = f(Vec(x + (0.5 * h) * k2));
  const Vec k4 = f(Vec(x + h * k3));
  Vec next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) {
    throw std::runtime_error("rk4_step: non-finite state update (derivative blew up)");
  }
  return next;
}

}  // namespace fkmpc
