// Checks of the manifold conclusions: invariance under the semiflow, the decay estimate,
// and sensitivity of phi to the perturbation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "lpm/manifold.hpp"

namespace lpm {

struct InvarianceSample {
  double s = 0.0;
  Vector xi;
  double tau = 0.0;
};

struct InvarianceRow {
  double s = 0.0;
  double tau = 0.0;
  double xi_norm = 0.0;
  double x_norm = 0.0;
  double residual = 0.0;
  bool in_ball = true;
};

struct InvarianceReport {
  std::vector<InvarianceRow> rows;
  double max_residual = 0.0;
  double tol = 1e-3;
  bool all_in_ball = true;
  [[nodiscard]] bool pass() const noexcept { return max_residual <= tol && all_in_ball; }
};

struct DecaySample {
  double s = 0.0;
  Vector xi;
  Vector xi_bar;
  double t = 0.0;
};

struct DecayRow {
  double s = 0.0;
  double t = 0.0;
  double observed = 0.0;
  double bound = 0.0;
  double ratio = 0.0;
};

struct DecayReport {
  std::vector<DecayRow> rows;
  double max_ratio = 0.0;
  double tol = 1e-2;
  [[nodiscard]] bool pass() const noexcept { return max_ratio <= 1.0 + tol; }
};

/// Radius (delta / C) * beta-tilde(s) of the ball on which invariance is asserted.
[[nodiscard]] inline double small_ball_radius(const ManifoldGraph& g, double s) {
  return g.delta() / g.C() * g.radius_profile().beta_tilde(s);
}

namespace detail {

inline void require_small_ball(const ManifoldGraph& g, double s, std::span<const double> xi) {
  if (xi.size() != g.n_e()) throw std::invalid_argument("sample xi has wrong dimension");
  if (euclidean_norm(xi) > small_ball_radius(g, s) * (1.0 + 1e-12)) {
    throw std::invalid_argument("sample lies outside the ball of radius (delta/C) * beta-tilde(s)");
  }
}

inline Vector graph_point(const ManifoldGraph& g, double s, std::span<const double> xi) {
  Vector v(xi.begin(), xi.end());
  const Vector y = g.eval(s, xi);
  v.insert(v.end(), y.begin(), y.end());
  return v;
}

// Uniform direction, radius r * U^{1/n}.
inline Vector ball_point(std::mt19937_64& gen, std::size_t n, double r) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Vector v(n);
  double nv = 0.0;
  while (nv == 0.0) {
    for (double& x : v) x = nd(gen);
    nv = euclidean_norm(v);
  }
  const double rad = r * std::pow(ud(gen), 1.0 / static_cast<double>(n));
  for (double& x : v) x *= rad / nv;
  return v;
}

}  // namespace detail

[[nodiscard]] inline InvarianceReport check_invariance(const ManifoldGraph& g, const LinearSystem& sys,
                                                       const Perturbation& pert,
                                                       const std::vector<InvarianceSample>& samples,
                                                       double tol = 1e-3, double h = 0.0, unsigned threads = 1) {
  for (const auto& smp : samples) {
    detail::require_small_ball(g, smp.s, smp.xi);
    if (!(smp.tau >= 0.0)) throw std::invalid_argument("flow time must be nonnegative");
  }
  InvarianceReport rep;
  rep.tol = tol;
  rep.rows.resize(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto& smp = samples[i];
    const FlowResult fl = nonlinear_flow(sys, pert, smp.s, detail::graph_point(g, smp.s, smp.xi), smp.tau, h);
    InvarianceRow& row = rep.rows[i];
    row.s = smp.s;
    row.tau = smp.tau;
    row.xi_norm = euclidean_norm(smp.xi);
    if (fl.blown_up) {
      row.residual = std::numeric_limits<double>::infinity();
      row.in_ball = false;
      return;
    }
    row.x_norm = euclidean_norm(fl.x);
    const Vector y = g.eval(fl.t, fl.x);
    double acc = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) acc += (fl.y[k] - y[k]) * (fl.y[k] - y[k]);
    row.residual = std::sqrt(acc) / std::max(row.x_norm, 1e-12);
    row.in_ball = row.x_norm <= g.radius(fl.t) * (1.0 + tol);
  });
  for (const auto& row : rep.rows) {
    rep.max_residual = std::max(rep.max_residual, row.residual);
    rep.all_in_ball = rep.all_in_ball && row.in_ball;
  }
  return rep;
}

[[nodiscard]] inline DecayReport check_decay(const ManifoldGraph& g, const LinearSystem& sys,
                                             const DichotomyParams& params, const Perturbation& pert,
                                             const std::vector<DecaySample>& samples, double tol = 1e-2,
                                             double h = 0.0, unsigned threads = 1) {
  for (const auto& smp : samples) {
    detail::require_small_ball(g, smp.s, smp.xi);
    detail::require_small_ball(g, smp.s, smp.xi_bar);
    if (!(smp.t >= smp.s)) throw std::invalid_argument("decay sample requires t >= s");
  }
  DecayReport rep;
  rep.tol = tol;
  rep.rows.resize(samples.size());
  const std::size_t ne = sys.n_e();
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto& smp = samples[i];
    DecayRow& row = rep.rows[i];
    row.s = smp.s;
    row.t = smp.t;
    Vector d(ne);
    for (std::size_t k = 0; k < ne; ++k) d[k] = smp.xi[k] - smp.xi_bar[k];
    const double dxi = euclidean_norm(d);
    row.bound = 2.0 * g.C() * std::exp(params.log_stable_bound(smp.t, smp.s)) * dxi;
    if (dxi == 0.0) {
      return;
    }
    const FlowResult a = nonlinear_flow(sys, pert, smp.s, detail::graph_point(g, smp.s, smp.xi), smp.t - smp.s, h);
    const FlowResult b =
        nonlinear_flow(sys, pert, smp.s, detail::graph_point(g, smp.s, smp.xi_bar), smp.t - smp.s, h);
    if (a.blown_up || b.blown_up) {
      row.observed = std::numeric_limits<double>::infinity();
      row.ratio = row.observed;
      return;
    }
    Vector diff(a.x.size() + a.y.size());
    for (std::size_t k = 0; k < a.x.size(); ++k) diff[k] = a.x[k] - b.x[k];
    for (std::size_t k = 0; k < a.y.size(); ++k) diff[a.x.size() + k] = a.y[k] - b.y[k];
    row.observed = split_norm(diff, ne);
    row.ratio = row.observed / row.bound;
  });
  for (const auto& row : rep.rows) rep.max_ratio = std::max(rep.max_ratio, row.ratio);
  return rep;
}

/// Random invariance samples with s + tau inside the graph's s range.
[[nodiscard]] inline std::vector<InvarianceSample> random_invariance_samples(const ManifoldGraph& g,
                                                                             std::size_t count, double tau_max,
                                                                             std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const double lo = g.s_grid().front();
  const double hi = std::max(lo, g.s_grid().back() - tau_max);
  std::uniform_real_distribution<double> us(lo, hi);
  std::uniform_real_distribution<double> ut(0.0, tau_max);
  std::vector<InvarianceSample> out(count);
  for (auto& smp : out) {
    smp.s = us(gen);
    smp.tau = ut(gen);
    smp.xi = detail::ball_point(gen, g.n_e(), small_ball_radius(g, smp.s));
  }
  return out;
}

[[nodiscard]] inline std::vector<DecaySample> random_decay_samples(const ManifoldGraph& g, std::size_t count,
                                                                   double span_max, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const double lo = g.s_grid().front();
  const double hi = std::max(lo, g.s_grid().back() - span_max);
  std::uniform_real_distribution<double> us(lo, hi);
  std::uniform_real_distribution<double> ut(0.0, span_max);
  std::vector<DecaySample> out(count);
  for (auto& smp : out) {
    smp.s = us(gen);
    smp.t = smp.s + ut(gen);
    const double r = small_ball_radius(g, smp.s);
    smp.xi = detail::ball_point(gen, g.n_e(), r);
    smp.xi_bar = detail::ball_point(gen, g.n_e(), r);
  }
  return out;
}

struct VerificationReport {
  InvarianceReport invariance;
  DecayReport decay;
  double lipschitz = 0.0;
  double lipschitz_tol = 1e-3;
  [[nodiscard]] bool lipschitz_pass() const noexcept { return lipschitz <= 1.0 + lipschitz_tol; }
  [[nodiscard]] bool pass() const noexcept { return invariance.pass() && decay.pass() && lipschitz_pass(); }
};

/// Points (t, u) for the sup in ||f - g||' = sup |f(t,u) - g(t,u)| / |u|^{q+1}.
struct PerturbationSampleSet {
  std::vector<double> times;
  std::vector<double> radii;
  std::vector<Vector> directions;  // unit vectors in the split norm
  std::size_t n_e = 1;

  [[nodiscard]] std::size_t size() const noexcept { return times.size() * radii.size() * directions.size(); }
};

/// Axis directions (both signs), plus `random_directions` uniform ones, all normalized in the split norm.
[[nodiscard]] inline PerturbationSampleSet default_perturbation_samples(std::size_t n, std::size_t n_e, double t_max,
                                                                        double r_max, std::size_t n_times = 11,
                                                                        std::size_t n_radii = 8,
                                                                        std::size_t random_directions = 64,
                                                                        std::uint64_t seed = 7) {
  PerturbationSampleSet set;
  set.n_e = n_e;
  set.times = n_times == 1 ? std::vector<double>{0.0} : uniform_grid(0.0, t_max, n_times);
  for (std::size_t k = 1; k <= n_radii; ++k) {
    set.radii.push_back(r_max * static_cast<double>(k) / static_cast<double>(n_radii));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (double sg : {1.0, -1.0}) {
      Vector d(n, 0.0);
      d[i] = sg;
      set.directions.push_back(d);
    }
  }
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  for (std::size_t k = 0; k < random_directions; ++k) {
    Vector d(n);
    for (double& x : d) x = nd(gen);
    const double nd_ = split_norm(d, n_e);
    if (nd_ == 0.0) continue;
    for (double& x : d) x /= nd_;
    set.directions.push_back(d);
  }
  return set;
}

struct PerturbationDistance {
  double value = 0.0;  // lower bound on the true sup
  std::size_t samples = 0;
  double time_spacing = 0.0;
  double radius_spacing = 0.0;
  std::size_t directions = 0;
};

[[nodiscard]] inline PerturbationDistance perturbation_distance(const Perturbation& f, const Perturbation& g,
                                                                const PerturbationSampleSet& set) {
  if (set.size() == 0) throw std::invalid_argument("perturbation sample set is empty");
  if (f.dimension != g.dimension) throw std::invalid_argument("perturbations have different dimensions");
  if (f.q != g.q) throw std::invalid_argument("perturbations have different exponents q");
  const std::size_t n = f.dimension;
  PerturbationDistance out;
  out.samples = set.size();
  out.directions = set.directions.size();
  out.time_spacing = set.times.size() > 1 ? set.times[1] - set.times[0] : 0.0;
  out.radius_spacing = set.radii.size() > 1 ? set.radii[1] - set.radii[0] : set.radii[0];
  Vector u(n), fu(n), gu(n), d(n);
  for (double t : set.times) {
    for (double r : set.radii) {
      for (const auto& dir : set.directions) {
        if (dir.size() != n) throw std::invalid_argument("sample direction has wrong dimension");
        for (std::size_t i = 0; i < n; ++i) u[i] = r * dir[i];
        const double nu = split_norm(u, set.n_e);
        if (nu == 0.0) continue;
        f.f(t, u, fu);
        g.f(t, u, gu);
        for (std::size_t i = 0; i < n; ++i) d[i] = fu[i] - gu[i];
        out.value = std::max(out.value, split_norm(d, set.n_e) / std::pow(nu, f.q + 1.0));
      }
    }
  }
  return out;
}

struct PerturbationBoundReport {
  double graph_distance = 0.0;         // ||phi - phi_bar||'
  double perturbation_distance = 0.0;  // ||f - f_bar||'
  double K = 0.0;
  double delta = 0.0;
  double c = 0.0;
  double ratio = 0.0;  // graph_distance / perturbation_distance, 0 when both vanish
  bool bound_holds = false;
  ManifoldSolution solution;
  ManifoldSolution solution_bar;
};

/// Solves both manifolds at a common delta (from the larger c) and checks ||phi - phi_bar||' <= K ||f - f_bar||'.
[[nodiscard]] inline PerturbationBoundReport check_perturbation_bound(const LinearSystem& sys,
                                                                      const DichotomyParams& params,
                                                                      const Perturbation& f, const Perturbation& f_bar,
                                                                      SolverConfig cfg,
                                                                      const PerturbationSampleSet& samples) {
  if (f.q != f_bar.q) throw std::invalid_argument("perturbations have different exponents q");
  const double c = std::max(f.c, f_bar.c);
  Perturbation a = f;
  Perturbation b = f_bar;
  a.c = c;
  b.c = c;
  const double C = std::isnan(cfg.C) ? 2.0 * params.D : cfg.C;
  cfg.C = C;
  if (!cfg.delta) cfg.delta = delta_max(c, f.q, C, params.D, cfg.delta_cap).delta;
  ManifoldSolution sa = solve_manifold(sys, params, a, cfg);
  ManifoldSolution sb = solve_manifold(sys, params, b, cfg);
  if (!sa.converged() || !sb.converged()) {
    throw SolverError("manifold solve did not converge for one of the perturbations");
  }
  PerturbationBoundReport rep{0.0, 0.0, 0.0, *cfg.delta, c, 0.0, false, sa, sb};
  rep.graph_distance = graph_distance(sa.graph, sb.graph);
  rep.perturbation_distance = perturbation_distance(a, b, samples).value;
  rep.K = 4.0 * std::pow(3.0, f.q + 1.0) * std::pow(C, f.q + 1.0) * params.D * std::pow(*cfg.delta, f.q);
  rep.ratio = rep.perturbation_distance > 0.0 ? rep.graph_distance / rep.perturbation_distance : 0.0;
  rep.bound_holds = rep.graph_distance <= rep.K * rep.perturbation_distance * (1.0 + 1e-12);
  return rep;
}

}  // namespace lpm
