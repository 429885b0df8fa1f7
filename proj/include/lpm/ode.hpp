/**
 * @file ode.hpp
 * @brief Fixed-step classical Runge-Kutta propagation.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lpm {

/// Number of uniform steps of size at most @p h covering [t0, t1].
[[nodiscard]] inline std::size_t step_count(double t0, double t1, double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("step size must be positive");
  }
  if (t1 <= t0) {
    return 0;
  }
  return static_cast<std::size_t>(std::ceil((t1 - t0) / h - 1e-9));
}

/// One RK4 step for y' = rhs(t, y, dy). Work buffers are reused across calls.
class Rk4Stepper {
 public:
  explicit Rk4Stepper(std::size_t dim) : k1_(dim), k2_(dim), k3_(dim), k4_(dim), tmp_(dim) {}

  template <class Rhs>
  void step(const Rhs& rhs, double t, double h, std::vector<double>& y) {
    const std::size_t n = y.size();
    rhs(t, y, k1_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + 0.5 * h * k1_[i];
    rhs(t + 0.5 * h, tmp_, k2_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + 0.5 * h * k2_[i];
    rhs(t + 0.5 * h, tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * k3_[i];
    rhs(t + h, tmp_, k4_);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += h / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }
  }

 private:
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

/// Integrates from t0 to t1 with uniform steps no longer than h; returns the final state.
template <class Rhs>
[[nodiscard]] std::vector<double> rk4_integrate(const Rhs& rhs, double t0, double t1, std::vector<double> y, double h) {
  const std::size_t steps = step_count(t0, t1, h);
  if (steps == 0) {
    return y;
  }
  const double dt = (t1 - t0) / static_cast<double>(steps);
  Rk4Stepper stepper(y.size());
  for (std::size_t i = 0; i < steps; ++i) {
    stepper.step(rhs, t0 + static_cast<double>(i) * dt, dt, y);
  }
  return y;
}

}  // namespace lpm
