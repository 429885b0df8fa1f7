/**
 * @file rates.hpp
 * @brief Growth rates: builtin families, expression rates, and numerical axiom checks.
 *
 * A growth rate is a nondecreasing map mu: [0, inf) -> [1, inf) with mu(0) = 1 that
 * diverges at infinity. Rates also expose log(mu) evaluated on a nested-logarithm
 * time chain, which lets quadrature run in log-time without overflowing.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lpm/expr.hpp"

namespace lpm {

/// Nested logarithms of time: ell[0] = t, ell[j + 1] = log(1 + ell[j]).
struct LogChain {
  static constexpr int kDepth = 3;
  std::array<double, kDepth + 1> ell{};

  [[nodiscard]] static LogChain from_time(double t) { return from_level(0, t); }

  /// Chain whose level-@p k entry equals @p z. Lower levels may overflow to +inf.
  [[nodiscard]] static LogChain from_level(int k, double z) {
    LogChain c;
    c.ell[static_cast<std::size_t>(k)] = z;
    for (int j = k; j > 0; --j) {
      c.ell[static_cast<std::size_t>(j - 1)] = std::expm1(c.ell[static_cast<std::size_t>(j)]);
    }
    for (int j = k; j < kDepth; ++j) {
      c.ell[static_cast<std::size_t>(j + 1)] = std::log1p(c.ell[static_cast<std::size_t>(j)]);
    }
    return c;
  }

  [[nodiscard]] double time() const noexcept { return ell[0]; }

  /// log of dt/d(ell[k]) = ell[1] + ... + ell[k].
  [[nodiscard]] double log_jacobian(int k) const noexcept {
    double acc = 0.0;
    for (int j = 1; j <= k; ++j) {
      acc += ell[static_cast<std::size_t>(j)];
    }
    return acc;
  }
};

enum class RateFamily { exponential, polynomial, log_poly, loglog_poly };

[[nodiscard]] inline const char* to_string(RateFamily f) {
  switch (f) {
    case RateFamily::exponential: return "exponential";
    case RateFamily::polynomial: return "polynomial";
    case RateFamily::log_poly: return "log_poly";
    case RateFamily::loglog_poly: return "loglog_poly";
  }
  return "unknown";
}

[[nodiscard]] inline RateFamily parse_rate_family(const std::string& name) {
  if (name == "exponential") return RateFamily::exponential;
  if (name == "polynomial") return RateFamily::polynomial;
  if (name == "log_poly") return RateFamily::log_poly;
  if (name == "loglog_poly") return RateFamily::loglog_poly;
  throw std::invalid_argument("unknown rate family '" + name + "'");
}

using RateParams = std::map<std::string, double>;

/// Immutable growth rate; cheap to copy (shared implementation).
class GrowthRate {
 public:
  struct Impl {
    std::string label;
    std::function<double(double)> eval;
    std::function<double(double)> derivative;  // empty when unknown
    std::function<double(const LogChain&)> log_eval;
    RateParams params;
    std::optional<RateFamily> family;
    bool nu_companion = false;
    bool builtin = false;
    int depth = 1;  // log-time substitution depth used by quadrature
    // log mu = sum_j coef[j] * ell[j] for builtins; lets weighted products cancel exactly.
    std::optional<std::array<double, LogChain::kDepth + 1>> log_coefficients;
  };

  GrowthRate() = default;
  explicit GrowthRate(Impl impl) : impl_(std::make_shared<const Impl>(std::move(impl))) {}

  [[nodiscard]] double operator()(double t) const { return impl_->eval(t); }
  [[nodiscard]] double log_value(const LogChain& c) const { return impl_->log_eval(c); }
  [[nodiscard]] double log_value(double t) const { return impl_->log_eval(LogChain::from_time(t)); }

  [[nodiscard]] bool has_derivative() const noexcept { return static_cast<bool>(impl_->derivative); }
  [[nodiscard]] std::optional<double> derivative(double t) const {
    if (!impl_->derivative) {
      return std::nullopt;
    }
    return impl_->derivative(t);
  }

  /// d/dt log mu(t); exact for builtins, central difference of log(mu) otherwise.
  [[nodiscard]] double log_derivative(double t) const {
    if (impl_->derivative) {
      return impl_->derivative(t) / impl_->eval(t);
    }
    const double h = 1e-6 * std::max(1.0, t);
    const double lo = std::max(0.0, t - h);
    return (log_value(t + h) - log_value(lo)) / (t + h - lo);
  }

  [[nodiscard]] const std::string& label() const noexcept { return impl_->label; }
  [[nodiscard]] const RateParams& params() const noexcept { return impl_->params; }
  [[nodiscard]] std::optional<RateFamily> family() const noexcept { return impl_->family; }
  [[nodiscard]] bool nu_companion() const noexcept { return impl_->nu_companion; }
  [[nodiscard]] bool builtin() const noexcept { return impl_->builtin; }
  [[nodiscard]] int depth() const noexcept { return impl_->depth; }
  [[nodiscard]] const std::optional<std::array<double, LogChain::kDepth + 1>>& log_coefficients() const noexcept {
    return impl_->log_coefficients;
  }
  [[nodiscard]] bool valid() const noexcept { return static_cast<bool>(impl_); }

  [[nodiscard]] std::optional<double> param(const std::string& key) const {
    const auto it = impl_->params.find(key);
    if (it == impl_->params.end()) {
      return std::nullopt;
    }
    return it->second;
  }

 private:
  std::shared_ptr<const Impl> impl_;
};

/**
 * Builtin families: exponential e^t, polynomial 1 + t, log_poly (1+t)(1+log(1+t))^lambda,
 * loglog_poly (1+t)(1+log(1+t))(1+log(1+log(1+t)))^lambda.
 *
 * With @p nu_companion the log families return their plain-log partners 1 + log(1+t) and
 * 1 + log(1 + log(1+t)), which need no lambda; exponential and polynomial are their own partners.
 */
[[nodiscard]] inline GrowthRate builtin_rate(RateFamily family, const RateParams& params = {}, bool nu_companion = false) {
  GrowthRate::Impl r;
  r.family = family;
  r.nu_companion = nu_companion;
  r.builtin = true;
  r.params = params;

  double lambda = 0.0;
  const bool log_family = family == RateFamily::log_poly || family == RateFamily::loglog_poly;
  if (log_family && !nu_companion) {
    const auto it = params.find("lambda");
    if (it == params.end()) {
      throw std::invalid_argument(std::string(to_string(family)) + " requires parameter 'lambda'");
    }
    lambda = it->second;
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw std::invalid_argument("lambda must be positive");
    }
  }
  for (const auto& [key, value] : params) {
    if (key != "lambda" || !log_family || nu_companion) {
      throw std::invalid_argument("parameter '" + key + "' is not used by this rate family");
    }
    (void)value;
  }

  switch (family) {
    case RateFamily::exponential:
      r.label = "exp(t)";
      r.eval = [](double t) { return std::exp(t); };
      r.derivative = [](double t) { return std::exp(t); };
      r.log_eval = [](const LogChain& c) { return c.ell[0]; };
      r.log_coefficients = std::array<double, 4>{1.0, 0.0, 0.0, 0.0};
      r.depth = 0;
      break;
    case RateFamily::polynomial:
      r.label = "1+t";
      r.eval = [](double t) { return 1.0 + t; };
      r.derivative = [](double) { return 1.0; };
      r.log_eval = [](const LogChain& c) { return c.ell[1]; };
      r.log_coefficients = std::array<double, 4>{0.0, 1.0, 0.0, 0.0};
      r.depth = 1;
      break;
    case RateFamily::log_poly:
      if (nu_companion) {
        r.label = "1+log(1+t)";
        r.eval = [](double t) { return 1.0 + std::log1p(t); };
        r.derivative = [](double t) { return 1.0 / (1.0 + t); };
        r.log_eval = [](const LogChain& c) { return c.ell[2]; };
        r.log_coefficients = std::array<double, 4>{0.0, 0.0, 1.0, 0.0};
      } else {
        r.label = "(1+t)(1+log(1+t))^" + std::to_string(lambda);
        r.eval = [lambda](double t) { return (1.0 + t) * std::pow(1.0 + std::log1p(t), lambda); };
        r.derivative = [lambda](double t) {
          const double l = 1.0 + std::log1p(t);
          return std::pow(l, lambda - 1.0) * (l + lambda);
        };
        r.log_eval = [lambda](const LogChain& c) { return c.ell[1] + lambda * c.ell[2]; };
        r.log_coefficients = std::array<double, 4>{0.0, 1.0, lambda, 0.0};
      }
      r.depth = 2;
      break;
    case RateFamily::loglog_poly:
      if (nu_companion) {
        r.label = "1+log(1+log(1+t))";
        r.eval = [](double t) { return 1.0 + std::log1p(std::log1p(t)); };
        r.derivative = [](double t) { return 1.0 / ((1.0 + std::log1p(t)) * (1.0 + t)); };
        r.log_eval = [](const LogChain& c) { return c.ell[3]; };
        r.log_coefficients = std::array<double, 4>{0.0, 0.0, 0.0, 1.0};
      } else {
        r.label = "(1+t)(1+log(1+t))(1+log(1+log(1+t)))^" + std::to_string(lambda);
        r.eval = [lambda](double t) {
          const double l1 = std::log1p(t);
          return (1.0 + t) * (1.0 + l1) * std::pow(1.0 + std::log1p(l1), lambda);
        };
        r.derivative = [lambda](double t) {
          const double l1 = std::log1p(t);
          const double l2 = std::log1p(l1);
          const double mu = (1.0 + t) * (1.0 + l1) * std::pow(1.0 + l2, lambda);
          const double dl = 1.0 / (1.0 + t);
          return mu * (dl + dl / (1.0 + l1) + lambda * dl / ((1.0 + l1) * (1.0 + l2)));
        };
        r.log_eval = [lambda](const LogChain& c) { return c.ell[1] + c.ell[2] + lambda * c.ell[3]; };
        r.log_coefficients = std::array<double, 4>{0.0, 1.0, 1.0, lambda};
      }
      r.depth = 3;
      break;
  }
  return GrowthRate(std::move(r));
}

[[nodiscard]] inline GrowthRate builtin_rate(const std::string& name, const RateParams& params = {}, bool nu_companion = false) {
  return builtin_rate(parse_rate_family(name), params, nu_companion);
}

/// Rate given by an expression in t. No derivative; quadrature substitution depth is configurable.
[[nodiscard]] inline GrowthRate expression_rate(const std::string& text, int depth = 1) {
  if (depth < 0 || depth > LogChain::kDepth) {
    throw std::invalid_argument("quadrature depth must lie in [0, 3]");
  }
  auto expr = std::make_shared<const Expr>(Expr::compile(text, {"t"}));
  GrowthRate::Impl r;
  r.label = text;
  r.eval = [expr](double t) { return (*expr)(t); };
  r.log_eval = [expr](const LogChain& c) { return std::log((*expr)(c.ell[0])); };
  r.depth = depth;
  return GrowthRate(std::move(r));
}

struct AxiomReport {
  bool unit_at_zero = false;
  bool monotone = false;
  bool divergence = false;
  double worst_violation = 0.0;
  std::optional<std::pair<double, double>> monotone_violation;  // first offending (t1, t2)
  double value_at_probe = 0.0;

  [[nodiscard]] bool pass() const noexcept { return unit_at_zero && monotone && divergence; }
};

struct DivergenceProbe {
  double t_probe = 1e6;
  double threshold = 1e3;
};

/// Checks mu(0) = 1, nondecreasing on @p grid, and mu(t_probe) >= threshold. Violations are reported.
[[nodiscard]] inline AxiomReport check_growth_axioms(const GrowthRate& rate, const std::vector<double>& grid,
                                                     DivergenceProbe probe = {}) {
  if (grid.empty() || grid.front() != 0.0) {
    throw std::invalid_argument("axiom grid must be nonempty and start at 0");
  }
  AxiomReport rep;
  const double at_zero = rate(0.0);
  const double unit_err = std::abs(at_zero - 1.0);
  rep.unit_at_zero = rate.builtin() ? at_zero == 1.0 : unit_err <= 1e-12;
  if (!std::isfinite(at_zero)) {
    rep.unit_at_zero = false;
  }
  rep.worst_violation = rep.unit_at_zero ? 0.0 : (std::isfinite(unit_err) ? unit_err : std::numeric_limits<double>::infinity());

  rep.monotone = true;
  double prev = at_zero;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw std::invalid_argument("axiom grid must be strictly increasing");
    }
    const double cur = rate(grid[i]);
    if (!(cur >= prev)) {
      const double drop = std::isfinite(prev - cur) ? prev - cur : std::numeric_limits<double>::infinity();
      if (rep.monotone) {
        rep.monotone_violation = std::make_pair(grid[i - 1], grid[i]);
      }
      rep.monotone = false;
      rep.worst_violation = std::max(rep.worst_violation, drop);
    }
    prev = cur;
  }

  rep.value_at_probe = rate(probe.t_probe);
  rep.divergence = rep.value_at_probe >= probe.threshold;  // +inf counts as diverging
  if (!rep.divergence) {
    const double gap = probe.threshold - rep.value_at_probe;
    rep.worst_violation = std::max(rep.worst_violation, std::isfinite(gap) ? gap : std::numeric_limits<double>::infinity());
  }
  return rep;
}

}  // namespace lpm
