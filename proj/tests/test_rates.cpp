#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "lpm/admissibility.hpp"
#include "lpm/rates.hpp"

using namespace lpm;

namespace {

std::vector<GrowthRate> all_builtins() {
  return {builtin_rate(RateFamily::exponential),
          builtin_rate(RateFamily::polynomial),
          builtin_rate(RateFamily::log_poly, {{"lambda", 4.0}}),
          builtin_rate(RateFamily::loglog_poly, {{"lambda", 4.0}}),
          builtin_rate(RateFamily::log_poly, {}, true),
          builtin_rate(RateFamily::loglog_poly, {}, true),
          builtin_rate(RateFamily::log_poly, {{"lambda", 0.5}})};
}

}  // namespace

TEST(Rates, BuiltinValues) {
  EXPECT_NEAR(builtin_rate(RateFamily::exponential)(1.0), std::numbers::e, 1e-15);
  EXPECT_EQ(builtin_rate(RateFamily::polynomial)(0.0), 1.0);
  EXPECT_NEAR(builtin_rate("log_poly", {{"lambda", 4.0}})(std::numbers::e - 1.0), 16.0 * std::numbers::e, 1e-12);
  EXPECT_NEAR(builtin_rate(RateFamily::log_poly, {}, true)(std::numbers::e - 1.0), 2.0, 1e-14);
  const double t = 5.0;
  const double L = std::log1p(t);
  EXPECT_NEAR(builtin_rate(RateFamily::loglog_poly, {{"lambda", 2.0}})(t),
              (1 + t) * (1 + L) * std::pow(1 + std::log1p(L), 2.0), 1e-12);
  EXPECT_NEAR(builtin_rate(RateFamily::loglog_poly, {}, true)(t), 1 + std::log1p(L), 1e-14);
}

TEST(Rates, UnitAtZeroExactly) {
  for (const auto& r : all_builtins()) EXPECT_EQ(r(0.0), 1.0) << r.label();
}

TEST(Rates, StrictlyIncreasingOnDenseGrid) {
  const auto grid = uniform_grid(0.0, 100.0, 10000);
  for (const auto& r : all_builtins()) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
      ASSERT_GT(r(grid[i]), r(grid[i - 1])) << r.label() << " at " << grid[i];
    }
  }
}

TEST(Rates, DerivativeMatchesCentralDifferences) {
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> ut(0.0, 50.0);
  for (const auto& r : all_builtins()) {
    ASSERT_TRUE(r.has_derivative());
    for (int i = 0; i < 100; ++i) {
      const double t = ut(gen);
      const double h = 1e-5 * (1.0 + t);
      const double fd = (r(t + h) - r(t - h)) / (2.0 * h);
      const double d = *r.derivative(t);
      EXPECT_NEAR(fd, d, 1e-6 * std::abs(d)) << r.label() << " at t = " << t;
    }
  }
}

TEST(Rates, LogValueConsistentWithValue) {
  for (const auto& r : all_builtins()) {
    for (double t : {0.0, 0.3, 2.0, 17.0, 450.0}) {
      EXPECT_NEAR(r.log_value(t), std::log(r(t)), 1e-12 * (1.0 + std::log(r(t)))) << r.label();
    }
  }
}

TEST(Rates, ParameterErrors) {
  EXPECT_THROW((void)builtin_rate("sigmoid"), std::invalid_argument);
  EXPECT_THROW((void)builtin_rate(RateFamily::log_poly), std::invalid_argument);
  EXPECT_THROW((void)builtin_rate(RateFamily::log_poly, {{"lambda", -1.0}}), std::invalid_argument);
  EXPECT_THROW((void)builtin_rate(RateFamily::loglog_poly, {{"lambda", 0.0}}), std::invalid_argument);
  EXPECT_THROW((void)builtin_rate(RateFamily::exponential, {{"lambda", 1.0}}), std::invalid_argument);
  EXPECT_THROW((void)builtin_rate(RateFamily::log_poly, {{"lambda", 1.0}, {"kappa", 2.0}}), std::invalid_argument);
  EXPECT_THROW((void)builtin_rate(RateFamily::log_poly, {{"lambda", 1.0}}, true), std::invalid_argument);
}

TEST(Rates, ExpressionRate) {
  const GrowthRate r = expression_rate("(1+t)^2");
  EXPECT_DOUBLE_EQ(r(3.0), 16.0);
  EXPECT_FALSE(r.has_derivative());
  EXPECT_NEAR(r.log_derivative(3.0), 2.0 / 4.0, 1e-6);
  EXPECT_THROW((void)expression_rate("(1+t"), ExprError);
}

TEST(Axioms, ExponentialPasses) {
  const auto rep = check_growth_axioms(builtin_rate(RateFamily::exponential), uniform_grid(0, 10, 11), {20.0, 1e3});
  EXPECT_TRUE(rep.unit_at_zero);
  EXPECT_TRUE(rep.monotone);
  EXPECT_TRUE(rep.divergence);
  EXPECT_TRUE(rep.pass());
  EXPECT_EQ(rep.worst_violation, 0.0);
}

TEST(Axioms, SineRateFailsMonotonicity) {
  const double pi = std::numbers::pi;
  const auto rep = check_growth_axioms(expression_rate("1 + sin(t)"), {0.0, pi / 2, pi}, {pi / 2, 1.5});
  EXPECT_TRUE(rep.unit_at_zero);
  EXPECT_FALSE(rep.monotone);
  ASSERT_TRUE(rep.monotone_violation.has_value());
  EXPECT_DOUBLE_EQ(rep.monotone_violation->first, pi / 2);
  EXPECT_DOUBLE_EQ(rep.monotone_violation->second, pi);
  EXPECT_NEAR(rep.worst_violation, 1.0, 1e-12);
}

TEST(Axioms, LogPolyDivergenceProxy) {
  const auto rep = check_growth_axioms(builtin_rate(RateFamily::log_poly, {{"lambda", 4.0}}), {0.0, 1.0}, {1e6, 1e3});
  EXPECT_TRUE(rep.divergence);
  EXPECT_GT(rep.value_at_probe, 1e10);
}

TEST(Axioms, UserRateUnitTolerance) {
  EXPECT_TRUE(check_growth_axioms(expression_rate("1 + 1e-13 + t"), {0.0, 1.0}, {1e6, 1e3}).unit_at_zero);
  EXPECT_FALSE(check_growth_axioms(expression_rate("1 + 1e-9 + t"), {0.0, 1.0}, {1e6, 1e3}).unit_at_zero);
}

TEST(Axioms, BoundedRateFailsDivergence) {
  const auto rep = check_growth_axioms(expression_rate("2 - exp(-t)"), {0.0, 1.0, 2.0});
  EXPECT_TRUE(rep.monotone);
  EXPECT_FALSE(rep.divergence);
}

TEST(Axioms, GridPreconditions) {
  const auto r = builtin_rate(RateFamily::exponential);
  EXPECT_THROW((void)check_growth_axioms(r, {}), std::invalid_argument);
  EXPECT_THROW((void)check_growth_axioms(r, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW((void)check_growth_axioms(r, {0.0, 2.0, 1.0}), std::invalid_argument);
}
