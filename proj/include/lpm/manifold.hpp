/**
 * @file manifold.hpp
 * @brief Local stable manifold graph phi(s, xi) by nested Lyapunov-Perron fixed points.
 *
 * For a graph phi the inner problem finds trajectories x_phi(t, xi) of
 *   x(t) = U(t,s) xi + int_s^t U(t,r) f(r, x(r), phi(r, x(r))) dr,
 * and the outer operator is
 *   (Phi phi)(s, xi) = -int_s^inf V(r,s)^{-1} f(r, x_phi(r), phi(r, x_phi(r))) dr.
 * Iterating Phi from phi = 0 converges to the graph of the local stable manifold.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lpm/admissibility.hpp"
#include "lpm/dichotomy.hpp"
#include "lpm/linalg.hpp"
#include "lpm/ode.hpp"
#include "lpm/parallel.hpp"
#include "lpm/perturbation.hpp"
#include "lpm/quadrature.hpp"

namespace lpm {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// delta * beta(t) and delta * beta-tilde(t): exact when beta has a closed form, else a log-linear table.
class RadiusProfile {
 public:
  RadiusProfile(std::shared_ptr<const BetaFunction> beta, double t_lo, double t_hi, std::size_t samples = 201)
      : beta_(std::move(beta)) {
    if (beta_->closed_form_label()) {
      return;
    }
    times_ = uniform_grid(t_lo, std::max(t_hi, t_lo + 1e-9), std::max<std::size_t>(samples, 2));
    for (double t : times_) {
      log_beta_.push_back(beta_->log_beta(t));
      log_tilde_.push_back(beta_->log_tilde(t));
    }
  }

  [[nodiscard]] double log_beta(double t) const { return times_.empty() ? beta_->log_beta(t) : lookup(log_beta_, t); }
  [[nodiscard]] double log_tilde(double t) const {
    return times_.empty() ? beta_->log_tilde(t) : lookup(log_tilde_, t);
  }
  [[nodiscard]] double beta(double t) const { return std::exp(log_beta(t)); }
  [[nodiscard]] double beta_tilde(double t) const { return std::exp(log_tilde(t)); }
  [[nodiscard]] const BetaFunction& function() const noexcept { return *beta_; }
  [[nodiscard]] bool tabulated() const noexcept { return !times_.empty(); }

 private:
  // Linear in log beta; extrapolates from the end segments.
  [[nodiscard]] double lookup(const std::vector<double>& v, double t) const {
    const std::size_t n = times_.size();
    std::size_t i = 0;
    if (t >= times_[n - 1]) {
      i = n - 2;
    } else if (t > times_[0]) {
      i = static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin()) - 1;
    }
    const double w = (t - times_[i]) / (times_[i + 1] - times_[i]);
    return v[i] + w * (v[i + 1] - v[i]);
  }

  std::shared_ptr<const BetaFunction> beta_;
  std::vector<double> times_;
  std::vector<double> log_beta_;
  std::vector<double> log_tilde_;
};

/**
 * Discretized graph on G_{delta,beta}: per time slice s_j, a tensor grid of (2m+1)^{n_E} nodes
 * xi = rho_j * k / m, k in {-m..m}^{n_E}, rho_j = delta * beta(s_j). Nodes outside the ball carry
 * the value at their radial projection, so multilinear interpolation over the cube realizes the
 * radial extension. Values are linear in s between slices; past the last slice the last one is
 * reused, clamped at radius delta * beta(t).
 */
class ManifoldGraph {
 public:
  ManifoldGraph(std::size_t n_e, std::size_t n_f, std::vector<double> s_grid, std::size_t nodes_per_axis, double delta,
                double C, std::shared_ptr<const RadiusProfile> radius)
      : n_e_(n_e), n_f_(n_f), s_grid_(std::move(s_grid)), nodes_(nodes_per_axis), delta_(delta), C_(C),
        radius_(std::move(radius)) {
    if (n_e_ == 0 || n_f_ == 0) throw std::invalid_argument("graph blocks must be nonempty");
    if (s_grid_.empty()) throw std::invalid_argument("s grid must be nonempty");
    for (std::size_t j = 1; j < s_grid_.size(); ++j) {
      if (!(s_grid_[j] > s_grid_[j - 1])) throw std::invalid_argument("s grid must be strictly increasing");
    }
    if (s_grid_.front() < 0.0) throw std::invalid_argument("s grid must be nonnegative");
    if (nodes_ < 3 || nodes_ % 2 == 0) throw std::invalid_argument("nodes per axis must be odd and >= 3");
    if (!(delta_ > 0.0)) throw std::invalid_argument("delta must be positive");
    half_ = (nodes_ - 1) / 2;
    per_slice_ = 1;
    for (std::size_t d = 0; d < n_e_; ++d) per_slice_ *= nodes_;
    rho_.resize(s_grid_.size());
    for (std::size_t j = 0; j < s_grid_.size(); ++j) rho_[j] = delta_ * radius_->beta(s_grid_[j]);
    values_.assign(s_grid_.size() * per_slice_ * n_f_, 0.0);
  }

  [[nodiscard]] std::size_t n_e() const noexcept { return n_e_; }
  [[nodiscard]] std::size_t n_f() const noexcept { return n_f_; }
  [[nodiscard]] const std::vector<double>& s_grid() const noexcept { return s_grid_; }
  [[nodiscard]] std::size_t slices() const noexcept { return s_grid_.size(); }
  [[nodiscard]] std::size_t nodes_per_axis() const noexcept { return nodes_; }
  [[nodiscard]] std::size_t nodes_per_slice() const noexcept { return per_slice_; }
  [[nodiscard]] double delta() const noexcept { return delta_; }
  [[nodiscard]] double C() const noexcept { return C_; }
  [[nodiscard]] const RadiusProfile& radius_profile() const noexcept { return *radius_; }
  [[nodiscard]] std::shared_ptr<const RadiusProfile> radius_profile_ptr() const noexcept { return radius_; }

  /// Ball radius delta * beta(t).
  [[nodiscard]] double radius(double t) const { return delta_ * radius_->beta(t); }
  [[nodiscard]] double slice_radius(std::size_t j) const { return rho_[j]; }
  /// Node spacing on slice j.
  [[nodiscard]] double spacing(std::size_t j) const { return rho_[j] / static_cast<double>(half_); }

  [[nodiscard]] Vector node(std::size_t j, std::size_t idx) const {
    Vector xi(n_e_);
    for (std::size_t d = 0; d < n_e_; ++d) {
      const std::size_t k = idx % nodes_;
      idx /= nodes_;
      xi[d] = rho_[j] * (static_cast<double>(k) - static_cast<double>(half_)) / static_cast<double>(half_);
    }
    return xi;
  }

  [[nodiscard]] bool in_ball(std::size_t j, std::size_t idx) const {
    return euclidean_norm(node(j, idx)) <= rho_[j] * (1.0 + 1e-12);
  }

  [[nodiscard]] std::span<double> value(std::size_t j, std::size_t idx) {
    return {values_.data() + (j * per_slice_ + idx) * n_f_, n_f_};
  }
  [[nodiscard]] std::span<const double> value(std::size_t j, std::size_t idx) const {
    return {values_.data() + (j * per_slice_ + idx) * n_f_, n_f_};
  }

  /// phi(s, xi) with the radial extension outside B_{s,delta,beta}.
  [[nodiscard]] Vector eval(double s, std::span<const double> xi) const {
    Vector out(n_f_, 0.0);
    eval_into(s, xi, out);
    return out;
  }

  void eval_into(double s, std::span<const double> xi, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    const double nx = euclidean_norm(xi);
    if (nx == 0.0) {
      return;
    }
    const double rs = radius(s);
    const double scale = nx > rs ? rs / nx : 1.0;
    std::size_t j = 0;
    double w = 0.0;
    if (s >= s_grid_.back()) {
      j = s_grid_.size() - 1;
    } else if (s > s_grid_.front()) {
      j = static_cast<std::size_t>(std::upper_bound(s_grid_.begin(), s_grid_.end(), s) - s_grid_.begin()) - 1;
      w = (s - s_grid_[j]) / (s_grid_[j + 1] - s_grid_[j]);
    }
    slice_eval(j, xi, scale, 1.0 - w, out);
    if (w > 0.0) {
      slice_eval(j + 1, xi, scale, w, out);
    }
  }

  /// Largest |phi(xi) - phi(xi')| / |xi - xi'| over axis-adjacent in-ball node pairs.
  [[nodiscard]] double lipschitz_ratio() const {
    double worst = 0.0;
    for (std::size_t j = 0; j < slices(); ++j) {
      const double hstep = spacing(j);
      for (std::size_t idx = 0; idx < per_slice_; ++idx) {
        if (!in_ball(j, idx)) continue;
        std::size_t stride = 1;
        for (std::size_t d = 0; d < n_e_; ++d) {
          const std::size_t k = (idx / stride) % nodes_;
          if (k + 1 < nodes_) {
            const std::size_t nb = idx + stride;
            if (in_ball(j, nb)) {
              const auto a = value(j, idx);
              const auto b = value(j, nb);
              double acc = 0.0;
              for (std::size_t i = 0; i < n_f_; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
              worst = std::max(worst, std::sqrt(acc) / hstep);
            }
          }
          stride *= nodes_;
        }
      }
    }
    return worst;
  }

  [[nodiscard]] bool same_layout(const ManifoldGraph& o) const {
    return n_e_ == o.n_e_ && n_f_ == o.n_f_ && nodes_ == o.nodes_ && s_grid_ == o.s_grid_ && rho_ == o.rho_;
  }

 private:
  // Adds weight * (multilinear interpolant on slice j at scale * xi, radially clamped to rho_j).
  void slice_eval(std::size_t j, std::span<const double> xi, double scale, double weight, std::span<double> out) const {
    const double nx = euclidean_norm(xi) * scale;
    const double clamp = nx > rho_[j] ? rho_[j] / nx : 1.0;
    const double inv_h = static_cast<double>(half_) / rho_[j];
    const double top = static_cast<double>(nodes_ - 1);
    if (n_e_ == 1) {
      double u = xi[0] * scale * clamp * inv_h + static_cast<double>(half_);
      u = std::clamp(u, 0.0, top);
      std::size_t i = std::min(static_cast<std::size_t>(u), nodes_ - 2);
      const double fr = u - static_cast<double>(i);
      const auto a = value(j, i);
      const auto b = value(j, i + 1);
      for (std::size_t c = 0; c < n_f_; ++c) out[c] += weight * ((1.0 - fr) * a[c] + fr * b[c]);
      return;
    }
    std::vector<std::size_t> base(n_e_);
    std::vector<double> frac(n_e_);
    for (std::size_t d = 0; d < n_e_; ++d) {
      double u = xi[d] * scale * clamp * inv_h + static_cast<double>(half_);
      u = std::clamp(u, 0.0, top);
      base[d] = std::min(static_cast<std::size_t>(u), nodes_ - 2);
      frac[d] = u - static_cast<double>(base[d]);
    }
    const std::size_t corners = std::size_t{1} << n_e_;
    for (std::size_t corner = 0; corner < corners; ++corner) {
      double cw = weight;
      std::size_t idx = 0;
      std::size_t stride = 1;
      for (std::size_t d = 0; d < n_e_; ++d) {
        const bool up = (corner >> d) & 1U;
        cw *= up ? frac[d] : 1.0 - frac[d];
        idx += (base[d] + (up ? 1 : 0)) * stride;
        stride *= nodes_;
      }
      if (cw == 0.0) continue;
      const auto v = value(j, idx);
      for (std::size_t c = 0; c < n_f_; ++c) out[c] += cw * v[c];
    }
  }

  std::size_t n_e_;
  std::size_t n_f_;
  std::vector<double> s_grid_;
  std::size_t nodes_;
  double delta_;
  double C_;
  std::shared_ptr<const RadiusProfile> radius_;
  std::size_t half_ = 1;
  std::size_t per_slice_ = 1;
  std::vector<double> rho_;
  std::vector<double> values_;
};

/// Node-sampled ||phi - psi||' = sup |phi(s,xi) - psi(s,xi)| / |xi| over in-ball nodes, xi != 0.
[[nodiscard]] inline double graph_distance(const ManifoldGraph& a, const ManifoldGraph& b) {
  if (!a.same_layout(b)) {
    throw std::invalid_argument("graphs have different node layouts");
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < a.slices(); ++j) {
    for (std::size_t idx = 0; idx < a.nodes_per_slice(); ++idx) {
      if (!a.in_ball(j, idx)) continue;
      const double nx = euclidean_norm(a.node(j, idx));
      if (nx == 0.0) continue;
      const auto va = a.value(j, idx);
      const auto vb = b.value(j, idx);
      double acc = 0.0;
      for (std::size_t i = 0; i < a.n_f(); ++i) acc += (va[i] - vb[i]) * (va[i] - vb[i]);
      worst = std::max(worst, std::sqrt(acc) / nx);
    }
  }
  return worst;
}

struct InnerOptions {
  double h = 1e-2;
  double picard_tol = 1e-10;
  int max_picard = 200;
  double decay_slack = 1.05;
};

/// Sampled x_phi(t, xi) on [s, t_end], with the matching -int V^{-1} f_F dr.
struct InnerTrajectory {
  std::vector<double> times;
  std::vector<double> x;  // times.size() x n_E, row-major
  Vector phi_value;       // (Phi phi)(s, xi) computed from this path
  int picard_iterations = 0;
  double max_decay_ratio = 0.0;  // max |x(t)| / (C (mu(t)/mu(s))^a nu(s)^eps |xi|)
};

namespace detail {

inline void check_block_diagonal(const LinearSystem& sys, double t0, double t1) {
  if (!sys.coordinate_split()) {
    throw std::invalid_argument("manifold solver requires coordinate projections P = diag(I_E, 0)");
  }
  if (sys.form() != SystemForm::matrix) return;
  for (double t : uniform_grid(t0, t1, 5)) {
    const Matrix a = sys.generator(t);
    const double scale = std::max(1.0, max_abs(a));
    for (std::size_t i = 0; i < sys.dimension(); ++i) {
      for (std::size_t k = 0; k < sys.dimension(); ++k) {
        if ((i < sys.n_e()) != (k < sys.n_e()) && std::abs(a(i, k)) > 1e-12 * scale) {
          throw std::invalid_argument("A(t) couples E and F blocks; coordinate projections are not invariant");
        }
      }
    }
  }
}

inline InnerTrajectory solve_node(const ManifoldGraph& phi, const LinearSystem& sys, const DichotomyParams& params,
                                  const Perturbation& pert, double s, std::span<const double> xi, double t_end,
                                  const InnerOptions& opt) {
  const std::size_t ne = sys.n_e();
  const std::size_t nf = sys.n_f();
  const std::size_t n = ne + nf;
  InnerTrajectory out;
  out.phi_value.assign(nf, 0.0);
  const double nxi = euclidean_norm(xi);
  std::size_t steps = std::max<std::size_t>(step_count(s, t_end, opt.h), 2);
  if (steps % 2 == 1) ++steps;
  const double dt = (t_end - s) / static_cast<double>(steps);
  out.times.resize(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) out.times[i] = s + dt * static_cast<double>(i);
  out.x.assign((steps + 1) * ne, 0.0);
  if (nxi == 0.0) {
    return out;
  }
  const double C = phi.C();
  Vector v(n), fv(n);

  auto decay_ratio = [&](std::size_t i) {
    const double nx = euclidean_norm(std::span<const double>(out.x).subspan(i * ne, ne));
    return nx / (C * std::exp(params.log_stable_bound(out.times[i], s)) * nxi);
  };

  if (sys.form() == SystemForm::closed_form) {
    const ClosedForm& cf = sys.closed();
    std::vector<double> u(steps + 1), vv(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) {
      u[i] = cf.U(out.times[i], s);
      vv[i] = cf.V(out.times[i], s);
      for (std::size_t d = 0; d < ne; ++d) out.x[i * ne + d] = u[i] * xi[d];
    }
    std::vector<std::vector<double>> g(ne, std::vector<double>(steps + 1));
    std::vector<double> xnew(out.x.size());
    int it = 0;
    for (;; ++it) {
      if (it >= opt.max_picard) {
        throw SolverError("inner Picard iteration did not converge at s = " + std::to_string(s));
      }
      for (std::size_t i = 0; i <= steps; ++i) {
        std::copy_n(out.x.begin() + static_cast<std::ptrdiff_t>(i * ne), ne, v.begin());
        phi.eval_into(out.times[i], std::span<const double>(v).first(ne), std::span<double>(v).subspan(ne));
        pert.f(out.times[i], v, fv);
        for (std::size_t d = 0; d < ne; ++d) g[d][i] = fv[d] / u[i];
      }
      double change = 0.0;
      for (std::size_t d = 0; d < ne; ++d) {
        const auto G = cumulative_simpson(g[d], dt);
        for (std::size_t i = 0; i <= steps; ++i) {
          const double nxv = u[i] * (xi[d] + G[i]);
          change = std::max(change, std::abs(nxv - out.x[i * ne + d]));
          xnew[i * ne + d] = nxv;
        }
      }
      out.x.swap(xnew);
      if (!std::isfinite(change)) {
        throw SolverError("inner trajectory became nonfinite at s = " + std::to_string(s));
      }
      if (change <= opt.picard_tol * nxi) {
        break;
      }
    }
    out.picard_iterations = it + 1;
    std::vector<std::vector<double>> w(nf, std::vector<double>(steps + 1));
    for (std::size_t i = 0; i <= steps; ++i) {
      std::copy_n(out.x.begin() + static_cast<std::ptrdiff_t>(i * ne), ne, v.begin());
      phi.eval_into(out.times[i], std::span<const double>(v).first(ne), std::span<double>(v).subspan(ne));
      pert.f(out.times[i], v, fv);
      for (std::size_t d = 0; d < nf; ++d) w[d][i] = fv[ne + d] / vv[i];
      out.max_decay_ratio = std::max(out.max_decay_ratio, decay_ratio(i));
    }
    for (std::size_t d = 0; d < nf; ++d) out.phi_value[d] = -simpson_samples(w[d], dt);
  } else {
    // Augmented state: x (n_E), W = V(t,s)^{-1} (n_F x n_F), J = int W f_F.
    const std::size_t dim = ne + nf * nf + nf;
    std::vector<double> y(dim, 0.0);
    for (std::size_t d = 0; d < ne; ++d) y[d] = xi[d];
    for (std::size_t d = 0; d < nf; ++d) y[ne + d * nf + d] = 1.0;
    auto rhs = [&](double t, const std::vector<double>& st, std::vector<double>& ds) {
      const Matrix a = sys.generator(t);
      std::copy_n(st.begin(), ne, v.begin());
      phi.eval_into(t, std::span<const double>(v).first(ne), std::span<double>(v).subspan(ne));
      pert.f(t, v, fv);
      for (std::size_t i = 0; i < ne; ++i) {
        double acc = fv[i];
        for (std::size_t k = 0; k < ne; ++k) acc += a(i, k) * st[k];
        ds[i] = acc;
      }
      const double* W = st.data() + ne;
      for (std::size_t i = 0; i < nf; ++i) {
        for (std::size_t k = 0; k < nf; ++k) {
          double acc = 0.0;
          for (std::size_t m = 0; m < nf; ++m) acc -= W[i * nf + m] * a(ne + m, ne + k);
          ds[ne + i * nf + k] = acc;
        }
        double jacc = 0.0;
        for (std::size_t m = 0; m < nf; ++m) jacc += W[i * nf + m] * fv[ne + m];
        ds[ne + nf * nf + i] = jacc;
      }
    };
    Rk4Stepper stepper(dim);
    out.max_decay_ratio = 1.0 / C;
    for (std::size_t i = 0; i < steps; ++i) {
      stepper.step(rhs, out.times[i], dt, y);
      std::copy_n(y.begin(), ne, out.x.begin() + static_cast<std::ptrdiff_t>((i + 1) * ne));
      out.max_decay_ratio = std::max(out.max_decay_ratio, decay_ratio(i + 1));
    }
    for (std::size_t d = 0; d < nf; ++d) out.phi_value[d] = -y[ne + nf * nf + d];
    if (!std::all_of(y.begin(), y.end(), [](double z) { return std::isfinite(z); })) {
      throw SolverError("inner trajectory became nonfinite at s = " + std::to_string(s));
    }
  }
  for (std::size_t d = 0; d < ne; ++d) out.x[d] = xi[d];
  if (out.max_decay_ratio > opt.decay_slack) {
    std::ostringstream msg;
    msg << "inner trajectory violates the decay bound (ratio " << out.max_decay_ratio << ") at s = " << s
        << "; delta too large or graph iterate out of class";
    throw SolverError(msg.str());
  }
  return out;
}

}  // namespace detail

/// x_phi(t, xi) on [s, t_end]; xi must lie in the closed ball of radius delta * beta(s).
[[nodiscard]] inline InnerTrajectory inner_trajectory(const ManifoldGraph& phi, const LinearSystem& sys,
                                                      const DichotomyParams& params, const Perturbation& pert,
                                                      double s, std::span<const double> xi, double t_end,
                                                      InnerOptions opt = {}) {
  if (!(opt.h > 0.0)) throw std::invalid_argument("step size h must be positive");
  if (!(t_end > s)) throw std::invalid_argument("trajectory end must exceed s");
  if (xi.size() != sys.n_e()) throw std::invalid_argument("xi has wrong dimension");
  if (euclidean_norm(xi) > phi.radius(s) * (1.0 + 1e-12)) {
    throw std::invalid_argument("xi lies outside the ball of radius delta * beta(s)");
  }
  detail::check_block_diagonal(sys, s, t_end);
  return detail::solve_node(phi, sys, params, pert, s, xi, t_end, opt);
}

/// Applies Phi to every node; horizons[j] is the truncation time for slice j.
[[nodiscard]] inline ManifoldGraph apply_phi_operator(const ManifoldGraph& phi, const LinearSystem& sys,
                                                      const DichotomyParams& params, const Perturbation& pert,
                                                      const std::vector<double>& horizons, InnerOptions opt = {},
                                                      unsigned threads = 1, double* max_decay_ratio = nullptr) {
  if (horizons.size() != phi.slices()) {
    throw std::invalid_argument("one truncation time per slice is required");
  }
  detail::check_block_diagonal(sys, phi.s_grid().front(), horizons.back());
  ManifoldGraph next = phi;
  const std::size_t per = phi.nodes_per_slice();
  std::vector<double> decay(phi.slices() * per, 0.0);
  parallel_for(phi.slices() * per, threads, [&](std::size_t flat) {
    const std::size_t j = flat / per;
    const std::size_t idx = flat % per;
    Vector xi = phi.node(j, idx);
    const double nx = euclidean_norm(xi);
    auto dst = next.value(j, idx);
    if (nx == 0.0) {
      std::fill(dst.begin(), dst.end(), 0.0);
      return;
    }
    const double rho = phi.slice_radius(j);
    if (nx > rho) {
      for (double& c : xi) c *= rho / nx;
    }
    const InnerTrajectory tr = detail::solve_node(phi, sys, params, pert, phi.s_grid()[j], xi, horizons[j], opt);
    std::copy(tr.phi_value.begin(), tr.phi_value.end(), dst.begin());
    decay[flat] = tr.max_decay_ratio;
  });
  if (max_decay_ratio != nullptr) {
    *max_decay_ratio = *std::max_element(decay.begin(), decay.end());
  }
  return next;
}

struct SolverConfig {
  std::optional<double> delta;  // nullopt: delta_max
  double C = std::numeric_limits<double>::quiet_NaN();  // NaN: 2D
  double s_start = 0.0;
  double s_end = 10.0;
  std::size_t s_count = 21;
  std::size_t nodes = 41;
  std::optional<double> horizon;  // fixed T_cut - s; nullopt: from the tail bound
  double horizon_max = 200.0;
  double tail_tol = 1e-10;
  double outer_tol = 1e-10;
  int max_outer_iters = 20;
  InnerOptions inner{};
  double lipschitz_tol = 1e-3;
  double contraction_slack = 1.1;
  double delta_cap = 1.0;
  unsigned threads = 1;
  BetaOptions beta{};
};

struct IterationRecord {
  int iteration = 0;
  double distance = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();  // NaN for the first iteration
  double lipschitz = 0.0;
};

enum class SolveStatus { converged, max_iterations, non_contraction };

[[nodiscard]] inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::non_contraction: return "non_contraction";
  }
  return "unknown";
}

struct ManifoldSolution {
  ManifoldGraph graph;
  std::vector<IterationRecord> history;
  SolveStatus status = SolveStatus::max_iterations;
  double delta = 0.0;
  double delta_max = 0.0;
  double C = 0.0;
  double contraction_bound = 0.0;
  std::vector<double> horizons;     // T_cut per slice
  std::vector<double> tail_bounds;  // certified tail bound per slice (relative to |xi|)
  double max_decay_ratio = 0.0;
  double max_contraction_ratio = 0.0;

  [[nodiscard]] bool converged() const noexcept { return status == SolveStatus::converged; }
};

/**
 * Truncation time for slice s: smallest T with K * I(T) / I(s) <= tol, K = 3^{q+1} c C^{q+1} D delta^q.
 * This bounds the neglected part of Phi phi relative to |xi|.
 */
[[nodiscard]] inline std::pair<double, double> truncation_time(const DichotomyParams& params, double q, double c,
                                                               double C, double delta, double s, double tol,
                                                               double horizon_max, TailIntegralOptions quad = {}) {
  const double K = std::pow(3.0, q + 1.0) * c * std::pow(C, q + 1.0) * params.D * std::pow(delta, q);
  const TailIntegral base = tail_integral(params, q, s, quad);
  if (!base.converged || !(base.value > 0.0)) {
    throw SolverError("tail integral does not converge at s = " + std::to_string(s));
  }
  auto bound = [&](double T) { return K * std::exp(tail_integral(params, q, T, quad).log_value - base.log_value); };
  if (K <= tol) {
    return {s + 1.0, K};
  }
  double hi = s + horizon_max;
  const double bhi = bound(hi);
  if (bhi > tol) {
    std::ostringstream msg;
    msg << "tail bound " << bhi << " not achievable within T_cut limit s + " << horizon_max << " at s = " << s;
    throw SolverError(msg.str());
  }
  double lo = s;
  for (int it = 0; it < 60 && hi - lo > 1e-3 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (bound(mid) <= tol) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return {hi, bound(hi)};
}

/// Iterates phi_{k+1} = Phi(phi_k) from phi_0 = 0 until ||phi_{k+1} - phi_k||' <= outer_tol.
[[nodiscard]] inline ManifoldSolution solve_manifold(const LinearSystem& sys, const DichotomyParams& params,
                                                     const Perturbation& pert, const SolverConfig& cfg) {
  params.validate();
  pert.validate();
  if (pert.dimension != sys.dimension()) {
    throw std::invalid_argument("perturbation and system dimensions differ");
  }
  if (cfg.s_count == 0 || !(cfg.s_end >= cfg.s_start) || cfg.s_start < 0.0) {
    throw std::invalid_argument("invalid s grid");
  }
  const double q = pert.q;
  const double c = pert.c;
  const double C = std::isnan(cfg.C) ? 2.0 * params.D : cfg.C;
  const DeltaMax dm = delta_max(c, q, C, params.D, cfg.delta_cap);
  const double delta = cfg.delta.value_or(dm.delta);
  if (!(delta > 0.0)) {
    throw std::invalid_argument("delta must be positive");
  }
  if (delta > dm.delta * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "delta " << delta << " exceeds delta_max " << dm.delta;
    throw std::invalid_argument(msg.str());
  }

  const std::vector<double> s_grid =
      cfg.s_count == 1 ? std::vector<double>{cfg.s_start} : uniform_grid(cfg.s_start, cfg.s_end, cfg.s_count);
  std::vector<double> horizons(s_grid.size());
  std::vector<double> tails(s_grid.size());
  for (std::size_t j = 0; j < s_grid.size(); ++j) {
    if (cfg.horizon) {
      horizons[j] = s_grid[j] + *cfg.horizon;
      const double K = std::pow(3.0, q + 1.0) * c * std::pow(C, q + 1.0) * params.D * std::pow(delta, q);
      tails[j] = K * std::exp(tail_integral(params, q, horizons[j], cfg.beta.quadrature).log_value -
                              tail_integral(params, q, s_grid[j], cfg.beta.quadrature).log_value);
    } else {
      std::tie(horizons[j], tails[j]) = truncation_time(params, q, c, C, delta, s_grid[j], cfg.tail_tol,
                                                        cfg.horizon_max, cfg.beta.quadrature);
    }
  }

  auto beta = std::make_shared<const BetaFunction>(params, q, cfg.beta);
  auto profile = std::make_shared<const RadiusProfile>(beta, s_grid.front(),
                                                       *std::max_element(horizons.begin(), horizons.end()));
  ManifoldGraph phi(sys.n_e(), sys.n_f(), s_grid, cfg.nodes, delta, C, profile);

  ManifoldSolution sol{phi, {}, SolveStatus::max_iterations, delta, dm.delta, C,
                       graph_contraction_factor(c, q, C, params.D, delta), horizons, tails};
  const double ratio_cap = sol.contraction_bound * cfg.contraction_slack;
  int strikes = 0;
  for (int k = 0; k < cfg.max_outer_iters; ++k) {
    double decay = 0.0;
    ManifoldGraph next = apply_phi_operator(phi, sys, params, pert, horizons, cfg.inner, cfg.threads, &decay);
    sol.max_decay_ratio = std::max(sol.max_decay_ratio, decay);
    IterationRecord rec;
    rec.iteration = k + 1;
    rec.distance = graph_distance(next, phi);
    rec.lipschitz = next.lipschitz_ratio();
    if (!sol.history.empty()) {
      const double prev = sol.history.back().distance;
      rec.ratio = prev > 0.0 ? rec.distance / prev : 0.0;
      sol.max_contraction_ratio = std::max(sol.max_contraction_ratio, rec.ratio);
    }
    sol.history.push_back(rec);
    if (rec.lipschitz > 1.0 + cfg.lipschitz_tol) {
      std::ostringstream msg;
      msg << "graph iterate " << rec.iteration << " violates the Lipschitz-1 bound (ratio " << rec.lipschitz << ")";
      throw SolverError(msg.str());
    }
    phi = std::move(next);
    if (rec.distance <= cfg.outer_tol) {
      sol.status = SolveStatus::converged;
      break;
    }
    if (!std::isnan(rec.ratio) && rec.ratio > ratio_cap) {
      if (++strikes >= 2) {
        sol.status = SolveStatus::non_contraction;
        break;
      }
    } else {
      strikes = 0;
    }
  }
  sol.graph = std::move(phi);
  return sol;
}

struct FlowResult {
  double t = 0.0;
  Vector x;  // E component
  Vector y;  // F component
  bool blown_up = false;
  double blowup_time = std::numeric_limits<double>::quiet_NaN();
};

/// Psi_tau(s, v_s) for v' = A(t) v + f(t, v) by fixed-step RK4.
[[nodiscard]] inline FlowResult nonlinear_flow(const LinearSystem& sys, const Perturbation& pert, double s,
                                               std::span<const double> v_s, double tau, double h = 0.0) {
  if (!(tau >= 0.0)) throw std::invalid_argument("flow time must be nonnegative");
  if (v_s.size() != sys.dimension()) throw std::invalid_argument("initial state has wrong dimension");
  const double step = h > 0.0 ? h : sys.step();
  const std::size_t n = sys.dimension();
  std::vector<double> y(v_s.begin(), v_s.end());
  Vector fv(n);
  auto rhs = [&](double t, const std::vector<double>& st, std::vector<double>& ds) {
    const Matrix a = sys.generator(t);
    pert.f(t, st, fv);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = fv[i];
      for (std::size_t k = 0; k < n; ++k) acc += a(i, k) * st[k];
      ds[i] = acc;
    }
  };
  FlowResult out;
  const std::size_t steps = step_count(s, s + tau, step);
  const double dt = steps > 0 ? tau / static_cast<double>(steps) : 0.0;
  Rk4Stepper stepper(n);
  for (std::size_t i = 0; i < steps; ++i) {
    stepper.step(rhs, s + dt * static_cast<double>(i), dt, y);
    const double ny = euclidean_norm(y);
    if (!std::isfinite(ny) || ny > 1e150) {
      out.blown_up = true;
      out.blowup_time = s + dt * static_cast<double>(i + 1);
      break;
    }
  }
  out.t = out.blown_up ? out.blowup_time : s + tau;
  out.x.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(sys.n_e()));
  out.y.assign(y.begin() + static_cast<std::ptrdiff_t>(sys.n_e()), y.end());
  return out;
}

}  // namespace lpm
