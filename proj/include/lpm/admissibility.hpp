/**
 * @file admissibility.hpp
 * @brief Hypothesis checks for the stable manifold construction: limit and integrability
 *        conditions, the radius functions beta and beta-tilde, monotonicity, and the
 *        largest admissible delta.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lpm/dichotomy.hpp"
#include "lpm/quadrature.hpp"
#include "lpm/rates.hpp"

namespace lpm {

struct TailIntegralOptions {
  double rel_tol = 1e-10;
  int max_doublings = 60;
  int depth = -1;  // log-time substitution depth; -1 picks max(mu.depth, nu.depth)
};

struct TailIntegral {
  double value = 0.0;       // truncated quadrature plus the exponential tail estimate
  double log_value = -std::numeric_limits<double>::infinity();  // log of value, finite where value underflows
  double tail_bound = 0.0;  // estimate of the integral beyond t_cut
  double t_cut = 0.0;
  double z_cut = 0.0;
  int depth = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  bool tail_certified = false;  // tail_bound <= rel_tol * value
};

namespace detail {

// log of mu^alpha nu^gamma dt/dz on the level-k chain; -inf wins over +inf (deep tail).
inline double log_weighted_integrand(const GrowthRate& mu, const GrowthRate& nu, double alpha, double gamma, int k,
                                     double z) {
  const LogChain c = LogChain::from_level(k, z);
  if (mu.log_coefficients() && nu.log_coefficients()) {
    // Combine coefficients first: the leading chain levels cancel exactly when alpha * q = -1.
    const auto& m = *mu.log_coefficients();
    const auto& n = *nu.log_coefficients();
    double acc = 0.0;
    for (std::size_t j = 0; j < c.ell.size(); ++j) {
      const double coef = alpha * m[j] + gamma * n[j] + ((j >= 1 && static_cast<int>(j) <= k) ? 1.0 : 0.0);
      if (coef != 0.0) {
        acc += coef * c.ell[j];
      }
    }
    return std::isnan(acc) ? -std::numeric_limits<double>::infinity() : acc;
  }
  const double terms[3] = {DichotomyParams::scaled(alpha, mu.log_value(c)),
                           DichotomyParams::scaled(gamma, nu.log_value(c)), c.log_jacobian(k)};
  double acc = 0.0;
  bool neg_inf = false;
  for (double v : terms) {
    if (std::isnan(v)) return std::numeric_limits<double>::quiet_NaN();
    if (v == -std::numeric_limits<double>::infinity()) neg_inf = true;
    acc += v;
  }
  return neg_inf ? -std::numeric_limits<double>::infinity() : acc;
}

}  // namespace detail

/**
 * int_s^inf mu(r)^alpha nu(r)^gamma dr by adaptive Simpson in log-time z = ell_k(r).
 *
 * The cut-off z_cut = z_s + 2^m doubles until the last segment changes the value by less than
 * rel_tol / 10; an exponential tail estimate h(z_cut) / kappa, with kappa the secant decay rate
 * over the last quarter segment, is then added and must itself fall below rel_tol.
 */
[[nodiscard]] inline TailIntegral weighted_tail_integral(const GrowthRate& mu, const GrowthRate& nu, double alpha,
                                                         double gamma, double s, TailIntegralOptions opt = {}) {
  if (s < 0.0) {
    throw std::invalid_argument("tail integral start must be nonnegative");
  }
  TailIntegral out;
  const int k = opt.depth >= 0 ? std::min(opt.depth, LogChain::kDepth) : std::max(mu.depth(), nu.depth());
  out.depth = k;
  const double z0 = LogChain::from_time(s).ell[static_cast<std::size_t>(k)];
  // Integrate h / h(z0) so that the quadrature stays in range for large s.
  const double log_h0 = detail::log_weighted_integrand(mu, nu, alpha, gamma, k, z0);
  const double shift = std::isfinite(log_h0) ? log_h0 : 0.0;
  auto log_h = [&](double z) { return detail::log_weighted_integrand(mu, nu, alpha, gamma, k, z) - shift; };
  auto h = [&](double z) { return std::exp(log_h(z)); };

  auto segment = [&](double lo, double hi, double scale) {
    const double coarse = (hi - lo) / 6.0 * (h(lo) + 4.0 * h(0.5 * (lo + hi)) + h(hi));
    const double ref = std::max({std::abs(scale), std::abs(coarse), 1e-300});
    QuadratureResult r = adaptive_simpson(h, lo, hi, 1e-2 * opt.rel_tol * ref);
    out.evaluations += r.evaluations + 3;
    return r.value;
  };

  double total = segment(z0, z0 + 1.0, 0.0);
  double len = 1.0;
  for (int m = 1; m <= opt.max_doublings; ++m) {
    const double lo = z0 + len;
    len *= 2.0;
    const double hi = z0 + len;
    const double piece = segment(lo, hi, total);
    total += piece;
    if (!std::isfinite(total)) {
      break;
    }
    if (total > 0.0 && std::abs(piece) <= 0.1 * opt.rel_tol * total) {
      out.z_cut = hi;
      out.t_cut = LogChain::from_level(k, hi).time();
      const double lh = log_h(hi);
      double tail = 0.0;
      bool decaying = true;
      if (lh != -std::numeric_limits<double>::infinity()) {
        const double d = 0.25 * (hi - lo);
        const double kappa = (log_h(hi - d) - lh) / d;
        if (kappa > 0.0 && std::isfinite(kappa)) {
          tail = std::exp(lh) / kappa;
        } else {
          decaying = false;
        }
      }
      out.log_value = shift + std::log(total + tail);
      out.value = std::exp(out.log_value);
      out.tail_bound = std::exp(shift) * tail;
      out.converged = true;
      out.tail_certified = decaying && tail <= opt.rel_tol * (total + tail);
      return out;
    }
  }
  out.value = std::exp(shift) * total;
  out.log_value = total > 0.0 ? shift + std::log(total) : -std::numeric_limits<double>::infinity();
  out.converged = false;
  return out;
}

/// I(s) = int_s^inf mu(r)^{aq} nu(r)^eps dr.
[[nodiscard]] inline TailIntegral tail_integral(const DichotomyParams& p, double q, double s,
                                                TailIntegralOptions opt = {}) {
  if (!(q > 1.0)) {
    throw std::invalid_argument("q must exceed 1");
  }
  return weighted_tail_integral(p.mu, p.nu, p.a * q, p.eps, s, opt);
}

/// log beta(s) from the integral definition.
[[nodiscard]] inline double log_beta_quadrature(const DichotomyParams& p, double q, double s,
                                                TailIntegralOptions opt = {}) {
  const TailIntegral I = tail_integral(p, q, s, opt);
  if (!I.converged || !std::isfinite(I.log_value)) {
    throw std::domain_error("tail integral is zero, divergent or nonfinite at s = " + std::to_string(s));
  }
  return p.a * p.mu.log_value(s) - DichotomyParams::scaled(p.eps * (1.0 + 1.0 / q), p.nu.log_value(s)) -
         I.log_value / q;
}

[[nodiscard]] inline double beta_quadrature(const DichotomyParams& p, double q, double s, TailIntegralOptions opt = {}) {
  return std::exp(log_beta_quadrature(p, q, s, opt));
}

/// Closed-form log beta for the builtin rate pairs, where one exists.
struct ClosedFormBeta {
  std::string label;
  std::function<double(double)> log_beta;
};

[[nodiscard]] inline std::optional<ClosedFormBeta> closed_form_beta(const DichotomyParams& p, double q) {
  const auto fm = p.mu.family();
  const auto fn = p.nu.family();
  if (!fm || !fn || *fm != *fn || p.mu.nu_companion()) {
    return std::nullopt;
  }
  const double a = p.a;
  const double eps = p.eps;
  const double decay = eps * (1.0 + 2.0 / q);
  switch (*fm) {
    case RateFamily::exponential: {
      const double k = a * q + eps;
      if (!(k < 0.0)) return std::nullopt;
      const double c = std::log(-k) / q;
      return ClosedFormBeta{"exponential", [c, decay](double t) { return c - decay * t; }};
    }
    case RateFamily::polynomial: {
      const double k = a * q + eps + 1.0;
      if (!(k < 0.0)) return std::nullopt;
      const double c = std::log(-k) / q;
      const double ex = decay + 1.0 / q;
      return ClosedFormBeta{"polynomial", [c, ex](double t) { return c - ex * std::log1p(t); }};
    }
    case RateFamily::log_poly:
    case RateFamily::loglog_poly: {
      if (!p.nu.nu_companion() || std::abs(a * q + 1.0) > 1e-12) return std::nullopt;
      const double lambda = p.mu.param("lambda").value_or(0.0);
      if (!(lambda - eps - 1.0 > 0.0)) return std::nullopt;
      const double c = std::log(lambda - eps - 1.0) / q;
      const double ex = decay + 1.0 / q;
      if (*fm == RateFamily::log_poly) {
        return ClosedFormBeta{"log_poly", [c, ex, q](double t) {
                                const double l1 = std::log1p(t);
                                return c - l1 / q - ex * std::log1p(l1);
                              }};
      }
      return ClosedFormBeta{"loglog_poly", [c, ex, q](double t) {
                              const double l1 = std::log1p(t);
                              const double l2 = std::log1p(l1);
                              return c - l1 / q - l2 / q - ex * std::log1p(l2);
                            }};
    }
  }
  return std::nullopt;
}

struct BetaOptions {
  bool prefer_closed_form = true;
  TailIntegralOptions quadrature{};
};

/// beta and beta-tilde = beta * nu^-eps; closed form when the rate pair has one, quadrature otherwise.
class BetaFunction {
 public:
  BetaFunction(DichotomyParams params, double q, BetaOptions opt = {})
      : params_(std::move(params)), q_(q), opt_(opt) {
    if (!(q_ > 1.0)) {
      throw std::invalid_argument("q must exceed 1");
    }
    if (opt_.prefer_closed_form) {
      closed_ = closed_form_beta(params_, q_);
    }
  }

  [[nodiscard]] double log_beta(double t) const {
    if (closed_) {
      return closed_->log_beta(t);
    }
    return log_beta_quadrature(params_, q_, t, opt_.quadrature);
  }
  [[nodiscard]] double operator()(double t) const { return std::exp(log_beta(t)); }
  [[nodiscard]] double log_tilde(double t) const {
    return log_beta(t) - DichotomyParams::scaled(params_.eps, params_.nu.log_value(t));
  }
  [[nodiscard]] double tilde(double t) const { return std::exp(log_tilde(t)); }

  [[nodiscard]] std::optional<std::string> closed_form_label() const {
    return closed_ ? std::optional<std::string>(closed_->label) : std::nullopt;
  }
  [[nodiscard]] const DichotomyParams& params() const noexcept { return params_; }
  [[nodiscard]] double q() const noexcept { return q_; }

 private:
  DichotomyParams params_;
  double q_;
  BetaOptions opt_;
  std::optional<ClosedFormBeta> closed_;
};

/**
 * |mu(s)^{-aq} nu(s)^{eps(q+1)} beta(s)^q I(s) - 1| with I(s) from quadrature and beta from an
 * independent route: the closed form when one exists, otherwise quadrature at a different
 * log-time depth.
 */
[[nodiscard]] inline double fundamental_identity_residual(const DichotomyParams& p, double q, double s,
                                                          TailIntegralOptions opt = {}) {
  const TailIntegral I = tail_integral(p, q, s, opt);
  if (!I.converged || !std::isfinite(I.log_value)) {
    return std::numeric_limits<double>::infinity();
  }
  double log_b = 0.0;
  if (auto cf = closed_form_beta(p, q)) {
    log_b = cf->log_beta(s);
  } else {
    TailIntegralOptions alt = opt;
    alt.depth = I.depth < LogChain::kDepth ? I.depth + 1 : I.depth - 1;
    log_b = log_beta_quadrature(p, q, s, alt);
  }
  const double log_lhs = -p.a * q * p.mu.log_value(s) +
                         DichotomyParams::scaled(p.eps * (q + 1.0), p.nu.log_value(s)) + q * log_b + I.log_value;
  return std::abs(std::expm1(log_lhs));
}

struct LimitConditionReport {
  bool pass = false;
  bool inconclusive = false;
  std::vector<std::pair<double, double>> samples;  // (t, log g(t)), g = mu^{a-b} nu^eps
};

[[nodiscard]] inline std::vector<double> geometric_grid(double first, double last, double factor) {
  std::vector<double> g;
  for (double t = first; t <= last * (1.0 + 1e-12); t *= factor) {
    g.push_back(t);
  }
  return g;
}

/// g(t) = mu(t)^{a-b} nu(t)^eps must decay: eventually decreasing and g(last) < 1e-3 g(first).
[[nodiscard]] inline LimitConditionReport check_limit_condition(const DichotomyParams& p,
                                                                std::vector<double> grid = geometric_grid(1.0, 1e6, 10.0)) {
  if (grid.size() < 2) {
    throw std::invalid_argument("limit-condition grid needs at least two points");
  }
  LimitConditionReport rep;
  for (double t : grid) {
    const double lg = DichotomyParams::scaled(p.a - p.b, p.mu.log_value(t)) +
                      DichotomyParams::scaled(p.eps, p.nu.log_value(t));
    if (!std::isfinite(lg)) {
      rep.inconclusive = true;
    }
    rep.samples.emplace_back(t, lg);
  }
  if (rep.inconclusive) {
    return rep;
  }
  bool decreasing = true;
  for (std::size_t i = rep.samples.size() / 2; i + 1 < rep.samples.size(); ++i) {
    if (!(rep.samples[i + 1].second < rep.samples[i].second)) {
      decreasing = false;
    }
  }
  rep.pass = decreasing && rep.samples.back().second < std::log(1e-3) + rep.samples.front().second;
  return rep;
}

struct MonotonicityReport {
  bool beta_nonincreasing = false;
  bool mu_a_over_beta_nonincreasing = false;
  double worst_beta_increase = 0.0;  // largest relative increase found
  double worst_ratio_increase = 0.0;
};

/// beta(t) and mu(t)^a / beta(t) must be nonincreasing on @p grid (relative tolerance 1e-10).
[[nodiscard]] inline MonotonicityReport check_monotonicity(const BetaFunction& beta, const std::vector<double>& grid,
                                                           double tol = 1e-10) {
  MonotonicityReport rep;
  rep.beta_nonincreasing = true;
  rep.mu_a_over_beta_nonincreasing = true;
  const DichotomyParams& p = beta.params();
  double prev_b = 0.0;
  double prev_r = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double lb = beta.log_beta(grid[i]);
    const double lr = p.a * p.mu.log_value(grid[i]) - lb;
    if (i > 0) {
      const double db = std::expm1(lb - prev_b);
      const double dr = std::expm1(lr - prev_r);
      if (db > tol) {
        rep.beta_nonincreasing = false;
      }
      if (dr > tol) {
        rep.mu_a_over_beta_nonincreasing = false;
      }
      rep.worst_beta_increase = std::max(rep.worst_beta_increase, db);
      rep.worst_ratio_increase = std::max(rep.worst_ratio_increase, dr);
    }
    prev_b = lb;
    prev_r = lr;
  }
  return rep;
}

struct DeltaMax {
  double delta = 0.0;
  int binding = 0;  // 1..5 for the smallness conditions, 0 when the cap binds
  std::array<double, 5> limits{};  // largest delta allowed by each condition alone (before the safety factor)
};

/**
 * Largest delta satisfying every smallness condition of the construction, times 0.99:
 *   (i)   D + 2^q 3^{q+1} c C^{q+1} D delta^q <= C          graph transform maps into its space
 *   (ii)  2^q 3^{q+1} c C^q D delta^q < 1                   trajectory operator contracts
 *   (iii) delta^q < 1 / (2^{q+2} 3^q c C^q D)               trajectories depend Lipschitz on phi
 *   (iv)  2^{q+2} 3^q c C^{q+1} D delta^q < 1               graph operator contracts
 *   (v)   2^q 3^{q+1} c C^q D delta^q < 1/2 and 2^{q+1} 3^q c C^{q+1} D delta^q < 1/2
 */
[[nodiscard]] inline DeltaMax delta_max(double c, double q, double C, double D, double cap = 1.0) {
  if (!(C > D)) {
    throw std::invalid_argument("delta_max requires C > D");
  }
  if (!(q > 1.0) || !(c >= 0.0) || !(D >= 1.0)) {
    throw std::invalid_argument("delta_max requires q > 1, c >= 0, D >= 1");
  }
  DeltaMax out;
  const double p2 = std::pow(2.0, q);
  const double p3 = std::pow(3.0, q);
  const double cq = std::pow(C, q);
  const double cq1 = cq * C;
  const double inf = std::numeric_limits<double>::infinity();
  const std::array<double, 5> x_limits{
      c > 0.0 ? (C - D) / (p2 * 3.0 * p3 * c * cq1 * D) : inf,
      c > 0.0 ? 1.0 / (p2 * 3.0 * p3 * c * cq * D) : inf,
      c > 0.0 ? 1.0 / (4.0 * p2 * p3 * c * cq * D) : inf,
      c > 0.0 ? 1.0 / (4.0 * p2 * p3 * c * cq1 * D) : inf,
      c > 0.0 ? std::min(0.5 / (p2 * 3.0 * p3 * c * cq * D), 0.5 / (2.0 * p2 * p3 * c * cq1 * D)) : inf};
  double best = inf;
  for (std::size_t i = 0; i < x_limits.size(); ++i) {
    out.limits[i] = std::pow(x_limits[i], 1.0 / q);
    if (out.limits[i] < best) {
      best = out.limits[i];
      out.binding = static_cast<int>(i) + 1;
    }
  }
  out.delta = 0.99 * best;
  if (!(out.delta <= cap)) {
    out.delta = cap;
    out.binding = 0;
  }
  return out;
}

/// Contraction constant of the graph operator, 2^{q+2} 3^q c C^{q+1} D delta^q.
[[nodiscard]] inline double graph_contraction_factor(double c, double q, double C, double D, double delta) {
  return std::pow(2.0, q + 2.0) * std::pow(3.0, q) * c * std::pow(C, q + 1.0) * D * std::pow(delta, q);
}

struct AdmissibilityOptions {
  double C = std::numeric_limits<double>::quiet_NaN();  // NaN selects 2D
  std::vector<double> monotonicity_grid;                // empty selects 0, 0.5, ..., 20
  std::vector<double> limit_grid = geometric_grid(1.0, 1e6, 10.0);
  double delta_cap = 1.0;
  BetaOptions beta{};
};

struct AdmissibilityReport {
  LimitConditionReport limit;
  TailIntegral integral;  // I(0)
  bool integral_convergent = false;
  MonotonicityReport monotone;
  DeltaMax delta;
  double C = 0.0;
  double q = 0.0;
  double c = 0.0;
  std::optional<std::string> closed_form;
  double beta_at_zero = 0.0;
  std::vector<std::string> notes;

  [[nodiscard]] bool pass() const noexcept {
    return limit.pass && integral_convergent && monotone.beta_nonincreasing && monotone.mu_a_over_beta_nonincreasing &&
           delta.delta > 0.0;
  }
};

[[nodiscard]] inline std::vector<double> uniform_grid(double first, double last, std::size_t count) {
  if (count < 2) {
    return {first};
  }
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = first + (last - first) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return g;
}

[[nodiscard]] inline AdmissibilityReport assess_admissibility(const DichotomyParams& p, double q, double c,
                                                              AdmissibilityOptions opt = {}) {
  p.validate();
  AdmissibilityReport rep;
  rep.q = q;
  rep.c = c;
  rep.C = std::isnan(opt.C) ? 2.0 * p.D : opt.C;
  rep.limit = check_limit_condition(p, opt.limit_grid);
  if (rep.limit.inconclusive) {
    rep.notes.emplace_back("limit condition inconclusive: rate evaluation overflowed");
  }
  rep.integral = tail_integral(p, q, 0.0, opt.beta.quadrature);
  rep.integral_convergent = rep.integral.converged && rep.integral.tail_certified && rep.integral.value > 0.0;
  if (rep.integral.converged && !rep.integral.tail_certified) {
    rep.notes.emplace_back("tail bound of the improper integral could not be certified");
  }
  if (!rep.integral_convergent) {
    rep.notes.emplace_back("integral of mu^{aq} nu^eps not certified convergent");
  }
  rep.delta = delta_max(c, q, rep.C, p.D, opt.delta_cap);
  if (rep.integral_convergent) {
    const BetaFunction beta(p, q, opt.beta);
    rep.closed_form = beta.closed_form_label();
    rep.beta_at_zero = beta(0.0);
    const auto grid = opt.monotonicity_grid.empty() ? uniform_grid(0.0, 20.0, 41) : opt.monotonicity_grid;
    rep.monotone = check_monotonicity(beta, grid);
  }
  return rep;
}

struct BetaRow {
  double t;
  double beta;
  double beta_tilde;
  double mu_a_over_beta;
};

[[nodiscard]] inline std::vector<BetaRow> beta_table(const BetaFunction& beta, const std::vector<double>& grid) {
  std::vector<BetaRow> rows;
  rows.reserve(grid.size());
  const DichotomyParams& p = beta.params();
  for (double t : grid) {
    const double lb = beta.log_beta(t);
    rows.push_back({t, std::exp(lb), beta.tilde(t), std::exp(p.a * p.mu.log_value(t) - lb)});
  }
  return rows;
}

}  // namespace lpm
