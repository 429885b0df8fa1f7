/**
 * @file dichotomy.hpp
 * @brief Nonautonomous linear systems, their evolution operators, and nonuniform (mu, nu)-dichotomy checks.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lpm/linalg.hpp"
#include "lpm/ode.hpp"
#include "lpm/rates.hpp"

namespace lpm {

/// Constants (D, a, b, eps) and the rate pair of a nonuniform (mu, nu)-dichotomy.
struct DichotomyParams {
  double D = 1.0;
  double a = -1.0;
  double b = 1.0;
  double eps = 0.0;
  GrowthRate mu;
  GrowthRate nu;

  void validate() const {
    if (!(D >= 1.0)) throw std::invalid_argument("dichotomy constant D must be >= 1");
    if (!(a < 0.0)) throw std::invalid_argument("dichotomy exponent a must be negative");
    if (!(b >= 0.0)) throw std::invalid_argument("dichotomy exponent b must be nonnegative");
    if (!(eps >= 0.0)) throw std::invalid_argument("nonuniformity eps must be nonnegative");
    if (!mu.valid() || !nu.valid()) throw std::invalid_argument("dichotomy rates are not set");
  }

  /// log of (mu(t)/mu(s))^a nu(s)^eps.
  [[nodiscard]] double log_stable_bound(double t, double s) const {
    return a * (mu.log_value(t) - mu.log_value(s)) + scaled(eps, nu.log_value(s));
  }
  /// log of (mu(t)/mu(s))^-b nu(t)^eps.
  [[nodiscard]] double log_unstable_bound(double t, double s) const {
    return -b * (mu.log_value(t) - mu.log_value(s)) + scaled(eps, nu.log_value(t));
  }

  // 0 * inf is taken as 0 so that eps = 0 never produces NaN.
  [[nodiscard]] static double scaled(double k, double v) { return k == 0.0 ? 0.0 : k * v; }
};

enum class SystemForm { matrix, closed_form };

/// Closed-form evolution: T(t,s) = diag(U(t,s) I_E, V(t,s) I_F).
struct ClosedForm {
  std::function<double(double, double)> U;
  std::function<double(double, double)> V;
  std::function<double(double)> stable_rate;    // d/dt log U(t, s)
  std::function<double(double)> unstable_rate;  // d/dt log V(t, s)
};

/// Parameters of the two-dimensional oscillating example with prescribed rates.
struct OscillatingExample {
  double a = -1.0;
  double b = 1.0;
  double eps = 0.0;
  GrowthRate mu;
  GrowthRate nu;

  [[nodiscard]] double omega() const noexcept { return 0.5 * eps; }

  /// omega * log nu(t) * (cos t - 1)
  [[nodiscard]] double wobble(double t) const {
    const double w = omega();
    return w == 0.0 ? 0.0 : w * nu.log_value(t) * (std::cos(t) - 1.0);
  }
  [[nodiscard]] double log_U(double t, double s) const {
    return a * (mu.log_value(t) - mu.log_value(s)) + wobble(t) - wobble(s);
  }
  [[nodiscard]] double log_V(double t, double s) const {
    return b * (mu.log_value(t) - mu.log_value(s)) - wobble(t) + wobble(s);
  }
  [[nodiscard]] double wobble_rate(double t) const {
    const double w = omega();
    if (w == 0.0) {
      return 0.0;
    }
    return w * (nu.log_derivative(t) * (std::cos(t) - 1.0) - nu.log_value(t) * std::sin(t));
  }
};

class LinearSystem {
 public:
  using MatrixFn = std::function<Matrix(double)>;

  /// v' = A(t) v with projections P(t); P defaults to the coordinate projection onto the first n_e axes.
  [[nodiscard]] static LinearSystem from_matrix(std::size_t n, std::size_t n_e, MatrixFn A, double h = 1e-3,
                                                MatrixFn P = {}) {
    check_dims(n, n_e);
    if (!(h > 0.0)) {
      throw std::invalid_argument("step size h must be positive");
    }
    LinearSystem sys;
    sys.n_ = n;
    sys.n_e_ = n_e;
    sys.form_ = SystemForm::matrix;
    sys.A_ = std::move(A);
    sys.h_ = h;
    sys.coordinate_ = !P;
    sys.P_ = P ? std::move(P) : coordinate_projection(n, n_e);
    return sys;
  }

  [[nodiscard]] static LinearSystem from_closed_form(std::size_t n_e, std::size_t n_f, ClosedForm cf, double h = 1e-3) {
    check_dims(n_e + n_f, n_e);
    LinearSystem sys;
    sys.n_ = n_e + n_f;
    sys.n_e_ = n_e;
    sys.form_ = SystemForm::closed_form;
    sys.closed_ = std::make_shared<const ClosedForm>(std::move(cf));
    sys.h_ = h;
    sys.coordinate_ = true;
    sys.P_ = coordinate_projection(sys.n_, n_e);
    return sys;
  }

  [[nodiscard]] std::size_t dimension() const noexcept { return n_; }
  [[nodiscard]] std::size_t n_e() const noexcept { return n_e_; }
  [[nodiscard]] std::size_t n_f() const noexcept { return n_ - n_e_; }
  [[nodiscard]] SystemForm form() const noexcept { return form_; }
  [[nodiscard]] double step() const noexcept { return h_; }
  [[nodiscard]] bool coordinate_split() const noexcept { return coordinate_; }

  [[nodiscard]] Matrix projection(double t) const { return P_(t); }
  [[nodiscard]] Matrix complementary_projection(double t) const { return Matrix::identity(n_) - P_(t); }

  /// A(t). Closed-form systems return diag of the log-derivatives of U and V.
  [[nodiscard]] Matrix generator(double t) const {
    if (form_ == SystemForm::matrix) {
      return A_(t);
    }
    Matrix a(n_, n_);
    const double ru = closed_->stable_rate(t);
    const double rv = closed_->unstable_rate(t);
    for (std::size_t i = 0; i < n_; ++i) {
      a(i, i) = i < n_e_ ? ru : rv;
    }
    return a;
  }

  [[nodiscard]] const ClosedForm& closed() const {
    if (!closed_) {
      throw std::logic_error("system is not in closed form");
    }
    return *closed_;
  }

  [[nodiscard]] const OscillatingExample* oscillating_example() const noexcept { return example_.get(); }

  [[nodiscard]] LinearSystem with_step(double h) const {
    if (!(h > 0.0)) {
      throw std::invalid_argument("step size h must be positive");
    }
    LinearSystem s = *this;
    s.h_ = h;
    return s;
  }

  friend LinearSystem example_system(double a, double b, double eps, const GrowthRate& mu, const GrowthRate& nu);

 private:
  static void check_dims(std::size_t n, std::size_t n_e) {
    if (n < 2) throw std::invalid_argument("system dimension must be at least 2");
    if (n_e == 0 || n_e >= n) throw std::invalid_argument("stable rank n_E must lie in [1, n-1]");
  }

  static MatrixFn coordinate_projection(std::size_t n, std::size_t n_e) {
    Matrix p(n, n);
    for (std::size_t i = 0; i < n_e; ++i) {
      p(i, i) = 1.0;
    }
    return [p](double) { return p; };
  }

  std::size_t n_ = 0;
  std::size_t n_e_ = 0;
  SystemForm form_ = SystemForm::matrix;
  MatrixFn A_;
  MatrixFn P_;
  std::shared_ptr<const ClosedForm> closed_;
  std::shared_ptr<const OscillatingExample> example_;
  double h_ = 1e-3;
  bool coordinate_ = true;
};

/**
 * Two-dimensional system with evolution diag(U, V), where
 *   U(t,s) = (mu(t)/mu(s))^a exp(w log nu(t)(cos t - 1) - w log nu(s)(cos s - 1)),
 *   V(t,s) = (mu(t)/mu(s))^b exp(-w log nu(t)(cos t - 1) + w log nu(s)(cos s - 1)),
 * w = eps/2, and P(t) = diag(1, 0). eps = 0 gives the uniform limit.
 */
[[nodiscard]] inline LinearSystem example_system(double a, double b, double eps, const GrowthRate& mu,
                                                 const GrowthRate& nu) {
  if (!(a < 0.0) || !(b >= 0.0) || !(eps >= 0.0)) {
    throw std::invalid_argument("example system requires a < 0 <= b and eps >= 0");
  }
  auto ex = std::make_shared<const OscillatingExample>(OscillatingExample{a, b, eps, mu, nu});
  ClosedForm cf;
  cf.U = [ex](double t, double s) { return std::exp(ex->log_U(t, s)); };
  cf.V = [ex](double t, double s) { return std::exp(ex->log_V(t, s)); };
  cf.stable_rate = [ex](double t) { return ex->a * ex->mu.log_derivative(t) + ex->wobble_rate(t); };
  cf.unstable_rate = [ex](double t) { return ex->b * ex->mu.log_derivative(t) - ex->wobble_rate(t); };
  LinearSystem sys = LinearSystem::from_closed_form(1, 1, std::move(cf));
  sys.example_ = std::move(ex);
  return sys;
}

namespace detail {

// Propagates M' = sign * (A(t) M) for sign = +1, or M' = -M A(t) for sign = -1, from s to t.
inline Matrix propagate(const LinearSystem& sys, double t, double s, bool inverse) {
  const std::size_t n = sys.dimension();
  Matrix id = Matrix::identity(n);
  std::vector<double> y(id.data().begin(), id.data().end());
  auto rhs = [&](double tau, const std::vector<double>& m, std::vector<double>& dm) {
    const Matrix a = sys.generator(tau);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        if (!inverse) {
          for (std::size_t k = 0; k < n; ++k) acc += a(i, k) * m[k * n + j];
        } else {
          for (std::size_t k = 0; k < n; ++k) acc -= m[i * n + k] * a(k, j);
        }
        dm[i * n + j] = acc;
      }
    }
  };
  y = rk4_integrate(rhs, s, t, std::move(y), sys.step());
  Matrix out(n, n);
  std::copy(y.begin(), y.end(), out.data().begin());
  return out;
}

}  // namespace detail

/// Evolution operator T(t, s), t >= s.
[[nodiscard]] inline Matrix transition(const LinearSystem& sys, double t, double s) {
  if (t < s) {
    throw std::invalid_argument("transition requires t >= s");
  }
  if (sys.form() == SystemForm::closed_form) {
    const double u = sys.closed().U(t, s);
    const double v = sys.closed().V(t, s);
    Matrix m(sys.dimension(), sys.dimension());
    for (std::size_t i = 0; i < sys.dimension(); ++i) {
      m(i, i) = i < sys.n_e() ? u : v;
    }
    return m;
  }
  return detail::propagate(sys, t, s, false);
}

/// T(t, s)^{-1}. Matrix-form systems propagate W' = -W A(t) instead of inverting T.
[[nodiscard]] inline Matrix transition_inverse(const LinearSystem& sys, double t, double s) {
  if (t < s) {
    throw std::invalid_argument("transition requires t >= s");
  }
  if (sys.form() == SystemForm::closed_form) {
    const double u = sys.closed().U(t, s);
    const double v = sys.closed().V(t, s);
    Matrix m(sys.dimension(), sys.dimension());
    for (std::size_t i = 0; i < sys.dimension(); ++i) {
      m(i, i) = 1.0 / (i < sys.n_e() ? u : v);
    }
    return m;
  }
  return detail::propagate(sys, t, s, true);
}

struct DichotomyCertificate {
  double max_stable_ratio = 0.0;
  double max_unstable_ratio = 0.0;
  double max_commutation_residual = 0.0;
  std::pair<double, double> worst_stable_pair{0.0, 0.0};
  std::pair<double, double> worst_unstable_pair{0.0, 0.0};
  std::size_t pair_count = 0;
  double t_min = 0.0;
  double t_max = 0.0;
  bool singular = false;
  double ratio_tol = 0.0;
  double commutation_tol = 0.0;
  bool pass = false;
};

struct DichotomyCheckOptions {
  double ratio_tol = 1e-9;
  double commutation_tol = 1e-8;
};

/// Evaluates |T(t,s)P(s)| and |T(t,s)^{-1}Q(t)| against the dichotomy bounds at each (t, s) pair.
[[nodiscard]] inline DichotomyCertificate verify_dichotomy(const LinearSystem& sys, const DichotomyParams& params,
                                                           const std::vector<std::pair<double, double>>& pairs,
                                                           DichotomyCheckOptions opt = {}) {
  if (pairs.empty()) {
    throw std::invalid_argument("dichotomy grid is empty");
  }
  params.validate();
  DichotomyCertificate cert;
  cert.pair_count = pairs.size();
  cert.ratio_tol = opt.ratio_tol;
  cert.commutation_tol = opt.commutation_tol;
  cert.t_min = pairs.front().second;
  cert.t_max = pairs.front().first;
  const double log_d = std::log(params.D);
  for (const auto& [t, s] : pairs) {
    if (t < s) {
      throw std::invalid_argument("dichotomy grid pairs must satisfy t >= s");
    }
    cert.t_min = std::min(cert.t_min, s);
    cert.t_max = std::max(cert.t_max, t);
    const Matrix T = transition(sys, t, s);
    const Matrix Ps = sys.projection(s);
    const Matrix Pt = sys.projection(t);
    const Matrix Qt = sys.complementary_projection(t);

    const double stable_norm = spectral_norm(T * Ps);
    const double stable_ratio = std::exp(std::log(stable_norm) - log_d - params.log_stable_bound(t, s));
    if (stable_ratio > cert.max_stable_ratio || std::isnan(stable_ratio)) {
      cert.max_stable_ratio = std::isnan(stable_ratio) ? stable_ratio : stable_ratio;
      cert.worst_stable_pair = {t, s};
    }

    const Matrix Tinv = transition_inverse(sys, t, s);
    if (!Tinv.all_finite()) {
      cert.singular = true;
    } else {
      const double unstable_norm = spectral_norm(Tinv * Qt);
      const double unstable_ratio = std::exp(std::log(unstable_norm) - log_d - params.log_unstable_bound(t, s));
      if (unstable_ratio > cert.max_unstable_ratio) {
        cert.max_unstable_ratio = unstable_ratio;
        cert.worst_unstable_pair = {t, s};
      }
    }
    cert.max_commutation_residual = std::max(cert.max_commutation_residual, max_abs(Pt * T - T * Ps));
  }
  cert.pass = !cert.singular && cert.max_stable_ratio <= 1.0 + opt.ratio_tol &&
              cert.max_unstable_ratio <= 1.0 + opt.ratio_tol && cert.max_commutation_residual <= opt.commutation_tol;
  return cert;
}

/// @p count pseudo-random pairs t >= s in [0, t_max] from a seeded mt19937_64.
[[nodiscard]] inline std::vector<std::pair<double, double>> sample_time_pairs(double t_max, std::size_t count,
                                                                              std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(0.0, t_max);
  std::vector<std::pair<double, double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double x = dist(gen);
    double y = dist(gen);
    if (x < y) std::swap(x, y);
    out.emplace_back(x, y);
  }
  return out;
}

struct SharpnessRow {
  int k = 0;
  double t = 0.0;
  double s = 0.0;
  double U = 0.0;
  double bound = 0.0;  // (mu(t)/mu(s))^a nu(s)^eps
  double residual = 0.0;
};

/// Evaluates U(2k pi, (2k-1) pi) against (mu(t)/mu(s))^a nu(s)^eps, where the bound is attained.
[[nodiscard]] inline std::vector<SharpnessRow> sharpness_probe(const LinearSystem& sys, const std::vector<int>& ks) {
  const OscillatingExample* ex = sys.oscillating_example();
  if (ex == nullptr) {
    throw std::invalid_argument("sharpness probe requires a system built by example_system");
  }
  std::vector<SharpnessRow> rows;
  rows.reserve(ks.size());
  for (int k : ks) {
    if (k <= 0) {
      throw std::invalid_argument("sharpness probe indices must be positive");
    }
    SharpnessRow r;
    r.k = k;
    r.t = 2.0 * k * std::numbers::pi;
    r.s = (2.0 * k - 1.0) * std::numbers::pi;
    r.U = sys.closed().U(r.t, r.s);
    r.bound = std::exp(ex->a * (ex->mu.log_value(r.t) - ex->mu.log_value(r.s)) +
                       DichotomyParams::scaled(ex->eps, ex->nu.log_value(r.s)));
    r.residual = std::abs(r.U - r.bound);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace lpm
