/**
 * @file perturbation.hpp
 * @brief Nonlinear perturbations f(t, v) of class P_{c,q}: f(t,0) = 0 and
 *        |f(t,u) - f(t,v)| <= c |u - v| (|u| + |v|)^q.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpm/expr.hpp"
#include "lpm/linalg.hpp"

namespace lpm {

struct Perturbation {
  using Fn = std::function<void(double t, std::span<const double> v, std::span<double> out)>;

  std::string label;
  std::size_t dimension = 2;
  double c = 1.0;
  double q = 2.0;
  Fn f;

  [[nodiscard]] Vector operator()(double t, std::span<const double> v) const {
    Vector out(dimension, 0.0);
    f(t, v, out);
    return out;
  }

  void validate() const {
    if (dimension < 2) throw std::invalid_argument("perturbation dimension must be at least 2");
    if (!(c > 0.0)) throw std::invalid_argument("perturbation constant c must be positive");
    if (!(q > 1.0)) throw std::invalid_argument("perturbation exponent q must exceed 1");
    if (!f) throw std::invalid_argument("perturbation function is not set");
  }
};

[[nodiscard]] inline Perturbation zero_perturbation(std::size_t n, double c = 1.0, double q = 2.0) {
  Perturbation p;
  p.label = "zero";
  p.dimension = n;
  p.c = c;
  p.q = q;
  p.f = [](double, std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  return p;
}

/// f(t, (u, v)) = (0, coef * u^3) on R^2; class constants c = |coef|, q = 2 unless given.
[[nodiscard]] inline Perturbation cubic_perturbation(double coef, double c = 0.0, double q = 2.0) {
  Perturbation p;
  p.label = "cubic(" + std::to_string(coef) + ")";
  p.dimension = 2;
  p.c = c > 0.0 ? c : std::abs(coef);
  p.q = q;
  p.f = [coef](double, std::span<const double> v, std::span<double> out) {
    out[0] = 0.0;
    out[1] = coef * v[0] * v[0] * v[0];
  };
  return p;
}

/// Component expressions over t, x1..xn (u, v alias x1, x2 when n = 2).
[[nodiscard]] inline Perturbation expression_perturbation(const std::vector<std::string>& components, double c,
                                                          double q) {
  const std::size_t n = components.size();
  if (n < 2) {
    throw std::invalid_argument("perturbation needs at least two components");
  }
  std::vector<std::string> vars{"t"};
  for (std::size_t i = 0; i < n; ++i) {
    vars.push_back("x" + std::to_string(i + 1));
  }
  if (n == 2) {
    vars.emplace_back("u");
    vars.emplace_back("v");
  }
  auto exprs = std::make_shared<std::vector<Expr>>();
  for (const auto& text : components) {
    exprs->push_back(Expr::compile(text, vars));
  }
  Perturbation p;
  p.label = "expr";
  p.dimension = n;
  p.c = c;
  p.q = q;
  p.f = [exprs, n](double t, std::span<const double> v, std::span<double> out) {
    double args[2 + 16 + 2];
    std::vector<double> heap;
    double* a = args;
    if (n + 3 > std::size(args)) {
      heap.resize(n + 3);
      a = heap.data();
    }
    a[0] = t;
    for (std::size_t i = 0; i < n; ++i) a[i + 1] = v[i];
    std::size_t count = n + 1;
    if (n == 2) {
      a[3] = v[0];
      a[4] = v[1];
      count = 5;
    }
    const std::span<const double> vals(a, count);
    for (std::size_t i = 0; i < n; ++i) out[i] = (*exprs)[i](vals);
  };
  return p;
}

struct ClassCheck {
  double max_at_zero = 0.0;     // max |f(t, 0)| over sampled t
  double max_class_ratio = 0.0;  // max |f(u)-f(v)| / (c |u-v| (|u|+|v|)^q)
  std::size_t samples = 0;
  bool pass = false;
};

/// Random (t, u, v) triples with |u|, |v| <= radius in the split norm.
[[nodiscard]] inline ClassCheck check_perturbation_class(const Perturbation& p, std::size_t n_e, double radius,
                                                         double t_max, std::size_t samples, std::uint64_t seed,
                                                         double tol = 1e-9) {
  p.validate();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ut(0.0, t_max);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  ClassCheck out;
  out.samples = samples;
  const std::size_t n = p.dimension;
  Vector zero(n, 0.0);
  Vector u(n), v(n), fu(n), fv(n), d(n);
  auto draw = [&](Vector& x) {
    for (double& xi : x) xi = uc(gen);
    const double nx = split_norm(x, n_e);
    const double r = radius * std::abs(uc(gen));
    for (double& xi : x) xi *= nx > 0.0 ? r / nx : 0.0;
  };
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = ut(gen);
    p.f(t, zero, fu);
    out.max_at_zero = std::max(out.max_at_zero, split_norm(fu, n_e));
    draw(u);
    draw(v);
    p.f(t, u, fu);
    p.f(t, v, fv);
    for (std::size_t i = 0; i < n; ++i) d[i] = u[i] - v[i];
    const double du = split_norm(d, n_e);
    const double rhs = p.c * du * std::pow(split_norm(u, n_e) + split_norm(v, n_e), p.q);
    for (std::size_t i = 0; i < n; ++i) d[i] = fu[i] - fv[i];
    if (rhs > 0.0) {
      out.max_class_ratio = std::max(out.max_class_ratio, split_norm(d, n_e) / rhs);
    }
  }
  out.pass = out.max_at_zero <= tol && out.max_class_ratio <= 1.0 + tol;
  return out;
}

}  // namespace lpm
