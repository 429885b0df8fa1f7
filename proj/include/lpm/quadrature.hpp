/**
 * @file quadrature.hpp
 * @brief Adaptive Simpson quadrature and composite rules on uniform samples.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace lpm {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
  bool converged = true;
};

namespace detail {

template <class F>
double simpson_recurse(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                       int depth, int min_depth, QuadratureResult& res) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  res.evaluations += 2;
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (!std::isfinite(delta)) {
    res.converged = false;
    res.error_estimate = std::numeric_limits<double>::infinity();
    return left + right;
  }
  if (depth <= 0) {
    res.converged = false;
    res.error_estimate += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  if (min_depth <= 0 && std::abs(delta) <= 15.0 * tol) {
    res.error_estimate += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, min_depth - 1, res) +
         simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, min_depth - 1, res);
}

}  // namespace detail

/// Adaptive Simpson with Richardson correction on [a, b] to absolute tolerance @p tol.
template <class F>
[[nodiscard]] QuadratureResult adaptive_simpson(const F& f, double a, double b, double tol, int max_depth = 48,
                                                int min_depth = 5) {
  QuadratureResult res;
  if (a == b) {
    return res;
  }
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  res.evaluations = 3;
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  res.value = detail::simpson_recurse(f, a, b, fa, fm, fb, whole, tol, max_depth, min_depth, res);
  return res;
}

/// Composite Simpson on uniformly spaced samples; an odd interval count finishes with the 3/8 rule.
[[nodiscard]] inline double simpson_samples(std::span<const double> y, double h) {
  const std::size_t n = y.size();
  if (n < 2) {
    return 0.0;
  }
  if (n == 2) {
    return 0.5 * h * (y[0] + y[1]);
  }
  std::size_t intervals = n - 1;
  double tail = 0.0;
  if (intervals % 2 == 1) {
    const std::size_t k = n - 4;
    tail = 3.0 * h / 8.0 * (y[k] + 3.0 * y[k + 1] + 3.0 * y[k + 2] + y[k + 3]);
    intervals -= 3;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i + 2 <= intervals; i += 2) {
    acc += y[i] + 4.0 * y[i + 1] + y[i + 2];
  }
  return acc * h / 3.0 + tail;
}

/// Running integrals I[i] = int_{x_0}^{x_i} on uniform samples (Simpson pairs plus a 3-point end panel).
[[nodiscard]] inline std::vector<double> cumulative_simpson(std::span<const double> y, double h) {
  const std::size_t n = y.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) {
    return out;
  }
  if (n == 2) {
    out[1] = 0.5 * h * (y[0] + y[1]);
    return out;
  }
  // First panel uses the forward 3-point formula.
  out[1] = h / 12.0 * (5.0 * y[0] + 8.0 * y[1] - y[2]);
  for (std::size_t i = 2; i < n; ++i) {
    if (i % 2 == 0) {
      out[i] = out[i - 2] + h / 3.0 * (y[i - 2] + 4.0 * y[i - 1] + y[i]);
    } else {
      out[i] = out[i - 1] + h / 12.0 * (-y[i - 2] + 8.0 * y[i - 1] + 5.0 * y[i]);
    }
  }
  return out;
}

}  // namespace lpm
