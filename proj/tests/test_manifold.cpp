#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "lpm/manifold.hpp"

using namespace lpm;

namespace {

GrowthRate expo() { return builtin_rate(RateFamily::exponential); }
DichotomyParams saddle_params() { return {1, -1, 1, 0, expo(), expo()}; }
LinearSystem saddle() { return example_system(-1, 1, 0, expo(), expo()); }

LinearSystem saddle_matrix() {
  return LinearSystem::from_matrix(2, 1, [](double) {
    Matrix m(2, 2);
    m(0, 0) = -1.0;
    m(1, 1) = 1.0;
    return m;
  });
}

SolverConfig small_config() {
  SolverConfig cfg;
  cfg.delta = 0.02;
  cfg.C = 2.0;
  cfg.s_end = 4.0;
  cfg.s_count = 5;
  cfg.nodes = 21;
  return cfg;
}

ManifoldGraph make_graph(double delta = 0.02, std::size_t nodes = 21) {
  auto beta = std::make_shared<const BetaFunction>(saddle_params(), 2.0);
  auto profile = std::make_shared<const RadiusProfile>(beta, 0.0, 10.0);
  return ManifoldGraph(1, 1, uniform_grid(0.0, 4.0, 5), nodes, delta, 2.0, profile);
}

// Fills every slice with phi(s, xi) = fn(s, xi).
template <class F>
void fill(ManifoldGraph& g, F fn) {
  for (std::size_t j = 0; j < g.slices(); ++j) {
    for (std::size_t i = 0; i < g.nodes_per_slice(); ++i) {
      const Vector xi = g.node(j, i);
      const double r = g.slice_radius(j);
      const double x = std::abs(xi[0]) > r ? std::copysign(r, xi[0]) : xi[0];
      g.value(j, i)[0] = fn(g.s_grid()[j], x);
    }
  }
}

double max_cubic_error(const ManifoldGraph& g, double coef) {
  double worst = 0.0;
  for (std::size_t j = 0; j < g.slices(); ++j) {
    for (std::size_t i = 0; i < g.nodes_per_slice(); ++i) {
      const double x = g.node(j, i)[0];
      if (x == 0.0 || !g.in_ball(j, i)) continue;
      worst = std::max(worst, std::abs(g.value(j, i)[0] + coef * x * x * x / 4.0) / std::abs(x * x * x));
    }
  }
  return worst;
}

}  // namespace

TEST(Graph, OriginMapsToZero) {
  ManifoldGraph g = make_graph();
  fill(g, [](double, double x) { return -x * x * x / 4.0; });
  for (double s : {0.0, 1.7, 4.0, 9.0}) EXPECT_EQ(g.eval(s, std::vector<double>{0.0})[0], 0.0);
}

TEST(Graph, RadialClampOutsideBall) {
  ManifoldGraph g = make_graph();
  fill(g, [](double s, double x) { return -x * x * x / 4.0 + 1e-3 * s * x; });
  for (double s : {0.0, 1.5, 4.0}) {
    const double r = g.radius(s);
    for (double sign : {1.0, -1.0}) {
      const double far = g.eval(s, std::vector<double>{2.0 * sign * r})[0];
      const double edge = g.eval(s, std::vector<double>{sign * r})[0];
      EXPECT_DOUBLE_EQ(far, edge);
    }
  }
}

TEST(Graph, MidpointIsAverageOfNodes) {
  ManifoldGraph g = make_graph();
  fill(g, [](double, double x) { return std::sin(50.0 * x) * 1e-3; });
  const std::size_t j = 2;
  const double s = g.s_grid()[j];
  for (std::size_t i : {3U, 10U, 15U}) {
    const double a = g.node(j, i)[0], b = g.node(j, i + 1)[0];
    const double mid = g.eval(s, std::vector<double>{0.5 * (a + b)})[0];
    EXPECT_NEAR(mid, 0.5 * (g.value(j, i)[0] + g.value(j, i + 1)[0]), 1e-18);
  }
}

TEST(Graph, LinearBetweenSlicesAndHeldBeyondLast) {
  ManifoldGraph g = make_graph();
  fill(g, [](double s, double x) { return 1e-3 * (1.0 + s) * x; });
  const double x = 0.25 * g.radius(10.0);
  const double v0 = g.eval(1.0, std::vector<double>{x})[0];
  const double v1 = g.eval(2.0, std::vector<double>{x})[0];
  EXPECT_NEAR(g.eval(1.5, std::vector<double>{x})[0], 0.5 * (v0 + v1), 1e-15);
  EXPECT_NEAR(g.eval(25.0, std::vector<double>{x})[0], g.eval(4.0, std::vector<double>{x})[0], 1e-15);
}

TEST(Graph, LayoutValidation) {
  auto beta = std::make_shared<const BetaFunction>(saddle_params(), 2.0);
  auto prof = std::make_shared<const RadiusProfile>(beta, 0.0, 1.0);
  EXPECT_THROW(ManifoldGraph(1, 1, {0.0, 1.0}, 20, 0.02, 2.0, prof), std::invalid_argument);
  EXPECT_THROW(ManifoldGraph(1, 1, {1.0, 0.0}, 21, 0.02, 2.0, prof), std::invalid_argument);
  EXPECT_THROW(ManifoldGraph(1, 1, {0.0}, 21, 0.0, 2.0, prof), std::invalid_argument);
}

TEST(Graph, DistanceIsSymmetricAndVanishesOnSelf) {
  ManifoldGraph a = make_graph(), b = make_graph(), c = make_graph();
  fill(a, [](double, double x) { return -x * x * x / 4.0; });
  fill(b, [](double, double x) { return -x * x * x / 3.0; });
  fill(c, [](double s, double x) { return 1e-3 * s * x; });
  EXPECT_EQ(graph_distance(a, a), 0.0);
  EXPECT_EQ(graph_distance(a, b), graph_distance(b, a));
  EXPECT_LE(graph_distance(a, c), graph_distance(a, b) + graph_distance(b, c) + 1e-18);
}

TEST(Inner, LinearFlowWithoutPerturbation) {
  const ManifoldGraph g = make_graph();
  const auto tr = inner_trajectory(g, saddle(), saddle_params(), zero_perturbation(2), 1.0,
                                   std::vector<double>{0.015}, 6.0);
  for (std::size_t i = 0; i < tr.times.size(); i += 50) {
    EXPECT_NEAR(tr.x[i], 0.015 * std::exp(-(tr.times[i] - 1.0)), 1e-15);
  }
  EXPECT_EQ(tr.phi_value[0], 0.0);
}

TEST(Inner, OracleStableComponentUnchanged) {
  ManifoldGraph g = make_graph();
  fill(g, [](double, double x) { return -x * x * x / 4.0; });
  for (const auto& sys : {saddle(), saddle_matrix()}) {
    const auto tr = inner_trajectory(g, sys, saddle_params(), cubic_perturbation(1.0), 0.0,
                                     std::vector<double>{0.02}, 8.0);
    for (std::size_t i = 0; i < tr.times.size(); i += 40) {
      EXPECT_NEAR(tr.x[i], 0.02 * std::exp(-tr.times[i]), 1e-12);
    }
    EXPECT_LE(tr.max_decay_ratio, 0.5 + 1e-9);
  }
}

TEST(Inner, ZeroStartStaysAtZero) {
  const ManifoldGraph g = make_graph();
  const auto tr = inner_trajectory(g, saddle(), saddle_params(), cubic_perturbation(1.0), 0.0,
                                   std::vector<double>{0.0}, 3.0);
  for (double x : tr.x) EXPECT_EQ(x, 0.0);
}

TEST(Inner, Preconditions) {
  const ManifoldGraph g = make_graph();
  const auto f = cubic_perturbation(1.0);
  EXPECT_THROW((void)inner_trajectory(g, saddle(), saddle_params(), f, 0.0, std::vector<double>{0.1}, 3.0),
               std::invalid_argument);
  InnerOptions bad;
  bad.h = 0.0;
  EXPECT_THROW((void)inner_trajectory(g, saddle(), saddle_params(), f, 0.0, std::vector<double>{0.01}, 3.0, bad),
               std::invalid_argument);
  InnerOptions strict;
  strict.decay_slack = 0.4;  // below the exact ratio 1/C
  EXPECT_THROW((void)inner_trajectory(g, saddle(), saddle_params(), f, 0.0, std::vector<double>{0.01}, 3.0, strict),
               SolverError);
}

TEST(Inner, RejectsCoupledBlocks) {
  const auto coupled = LinearSystem::from_matrix(2, 1, [](double) {
    Matrix m(2, 2);
    m(0, 0) = -1.0;
    m(0, 1) = 0.5;
    m(1, 1) = 1.0;
    return m;
  });
  const ManifoldGraph g = make_graph();
  EXPECT_THROW((void)inner_trajectory(g, coupled, saddle_params(), cubic_perturbation(1.0), 0.0,
                                      std::vector<double>{0.01}, 2.0),
               std::invalid_argument);
}

TEST(PhiOperator, ZeroPerturbationGivesZero) {
  ManifoldGraph g = make_graph();
  fill(g, [](double, double x) { return 0.3 * x; });
  const std::vector<double> horizons(g.slices(), 20.0);
  const ManifoldGraph next = apply_phi_operator(g, saddle(), saddle_params(), zero_perturbation(2), horizons);
  for (std::size_t j = 0; j < next.slices(); ++j)
    for (std::size_t i = 0; i < next.nodes_per_slice(); ++i) EXPECT_EQ(next.value(j, i)[0], 0.0);
}

TEST(PhiOperator, OneStepFromZeroIsExactCubic) {
  const ManifoldGraph g = make_graph();
  std::vector<double> horizons;
  for (double s : g.s_grid()) horizons.push_back(s + 20.0);
  const ManifoldGraph next = apply_phi_operator(g, saddle(), saddle_params(), cubic_perturbation(1.0), horizons);
  EXPECT_LE(max_cubic_error(next, 1.0), 1e-6);
  const std::size_t centre = (g.nodes_per_axis() - 1) / 2;
  for (std::size_t j = 0; j < next.slices(); ++j) EXPECT_EQ(next.value(j, centre)[0], 0.0);
}

TEST(Solve, OracleCubicManifold) {
  const auto sol = solve_manifold(saddle(), saddle_params(), cubic_perturbation(1.0), small_config());
  EXPECT_TRUE(sol.converged());
  EXPECT_LE(sol.history.size(), 5U);
  EXPECT_LE(max_cubic_error(sol.graph, 1.0), 1e-4);
  EXPECT_DOUBLE_EQ(sol.contraction_bound, graph_contraction_factor(1, 2, 2, 1, 0.02));
  for (const auto& rec : sol.history) EXPECT_LE(rec.lipschitz, 1.0 + 1e-3);
}

TEST(Solve, MatrixFormAgreesWithClosedForm) {
  SolverConfig cfg = small_config();
  cfg.inner.h = 5e-3;
  const auto a = solve_manifold(saddle(), saddle_params(), cubic_perturbation(1.0), cfg);
  const auto b = solve_manifold(saddle_matrix(), saddle_params(), cubic_perturbation(1.0), cfg);
  EXPECT_LE(max_cubic_error(b.graph, 1.0), 1e-4);
  EXPECT_LE(graph_distance(a.graph, b.graph), 1e-9);
}

TEST(Solve, ZeroPerturbationConvergesImmediately) {
  const auto sol = solve_manifold(saddle(), saddle_params(), zero_perturbation(2), small_config());
  EXPECT_TRUE(sol.converged());
  ASSERT_EQ(sol.history.size(), 1U);
  EXPECT_EQ(sol.history[0].distance, 0.0);
}

TEST(Solve, ScaledCubic) {
  const auto sol = solve_manifold(saddle(), saddle_params(), cubic_perturbation(2.0, 2.0), small_config());
  EXPECT_TRUE(sol.converged());
  EXPECT_LE(max_cubic_error(sol.graph, 2.0), 1e-4);
}

TEST(Solve, CoupledNonlinearityContracts) {
  const DichotomyParams p{1, -1, 1, 0.1, expo(), expo()};
  const auto sys = example_system(-1, 1, 0.1, expo(), expo());
  const auto f = expression_perturbation({"0.5*v^3 + 0.3*u^2*v", "u^3 - 0.2*u*v^2"}, 1.0, 2.0);
  SolverConfig cfg = small_config();
  cfg.delta.reset();
  const auto sol = solve_manifold(sys, p, f, cfg);
  ASSERT_TRUE(sol.converged());
  EXPECT_GE(sol.history.size(), 2U);
  for (const auto& rec : sol.history) {
    if (!std::isnan(rec.ratio)) {
      EXPECT_LE(rec.ratio, sol.contraction_bound * 1.1);
    }
    EXPECT_LE(rec.lipschitz, 1.0 + 1e-3);
  }
  EXPECT_LE(sol.max_decay_ratio, 1.05);
}

TEST(Solve, TruncationConsistency) {
  const DichotomyParams p{1, -1, 1, 0.1, expo(), expo()};
  const auto sys = example_system(-1, 1, 0.1, expo(), expo());
  const auto f = expression_perturbation({"0.5*v^3", "u^3"}, 1.0, 2.0);
  SolverConfig cfg = small_config();
  const auto base = solve_manifold(sys, p, f, cfg);
  cfg.horizon = 2.0 * (base.horizons.front() - cfg.s_start);
  const auto longer = solve_manifold(sys, p, f, cfg);
  double worst = 0.0;
  for (std::size_t j = 0; j < base.graph.slices(); ++j)
    for (std::size_t i = 0; i < base.graph.nodes_per_slice(); ++i)
      worst = std::max(worst, std::abs(base.graph.value(j, i)[0] - longer.graph.value(j, i)[0]));
  EXPECT_LT(worst, cfg.outer_tol);
}

TEST(Solve, DeterministicAcrossThreadCounts) {
  SolverConfig cfg = small_config();
  const auto a = solve_manifold(saddle(), saddle_params(), cubic_perturbation(1.0), cfg);
  cfg.threads = 4;
  const auto b = solve_manifold(saddle(), saddle_params(), cubic_perturbation(1.0), cfg);
  EXPECT_EQ(graph_distance(a.graph, b.graph), 0.0);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) EXPECT_EQ(a.history[k].distance, b.history[k].distance);
}

TEST(Solve, DeltaAboveMaximumRejected) {
  SolverConfig cfg = small_config();
  cfg.delta = 0.05;
  EXPECT_THROW((void)solve_manifold(saddle(), saddle_params(), cubic_perturbation(1.0), cfg), std::invalid_argument);
}

TEST(Solve, MisdeclaredClassBreaksLipschitzBound) {
  // coef 5000 declared as c = 1: the exact graph -1250 xi^3 has slope about 2.9 at the ball edge.
  EXPECT_THROW((void)solve_manifold(saddle(), saddle_params(), cubic_perturbation(5000.0, 1.0), small_config()),
               SolverError);
}

TEST(Solve, UnreachableTailTolerance) {
  SolverConfig cfg = small_config();
  cfg.horizon_max = 2.0;
  EXPECT_THROW((void)solve_manifold(saddle(), saddle_params(), cubic_perturbation(1.0), cfg), SolverError);
}

TEST(Flow, LinearStableBundleInvariant) {
  const auto fl = nonlinear_flow(saddle(), zero_perturbation(2), 0.5, std::vector<double>{0.02, 0.0}, 3.0);
  EXPECT_NEAR(fl.x[0], 0.02 * std::exp(-3.0), 1e-12);
  EXPECT_EQ(fl.y[0], 0.0);
  EXPECT_DOUBLE_EQ(fl.t, 3.5);
}

TEST(Flow, OnManifoldOracle) {
  const double u0 = 0.02;
  const auto fl = nonlinear_flow(saddle(), cubic_perturbation(1.0), 0.0, std::vector<double>{u0, -u0 * u0 * u0 / 4},
                                 1.0);
  const double u1 = u0 * std::exp(-1.0);
  EXPECT_NEAR(fl.x[0], u1, 1e-9);
  EXPECT_NEAR(fl.y[0], -u1 * u1 * u1 / 4.0, 1e-9);
}

TEST(Flow, OffManifoldGrowsAndBlowsUp) {
  const auto f = cubic_perturbation(1.0);
  const auto fl = nonlinear_flow(saddle(), f, 0.0, std::vector<double>{0.02, 0.01}, 5.0);
  EXPECT_GE(fl.y[0], 0.01 * std::exp(5.0) * (1.0 - 1e-9));
  const auto cubic_growth = expression_perturbation({"0", "v^3"}, 1.0, 2.0);
  const auto bl = nonlinear_flow(saddle(), cubic_growth, 0.0, std::vector<double>{0.0, 0.5}, 10.0, 1e-3);
  EXPECT_TRUE(bl.blown_up);
  EXPECT_LT(bl.blowup_time, 10.0);
  EXPECT_THROW((void)nonlinear_flow(saddle(), f, 0.0, std::vector<double>{0.0, 0.0}, -1.0), std::invalid_argument);
}
