#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "lpm/admissibility.hpp"

using namespace lpm;

namespace {

GrowthRate expo() { return builtin_rate(RateFamily::exponential); }
GrowthRate poly() { return builtin_rate(RateFamily::polynomial); }
GrowthRate logp(double lambda) { return builtin_rate(RateFamily::log_poly, {{"lambda", lambda}}); }
GrowthRate logn() { return builtin_rate(RateFamily::log_poly, {}, true); }
GrowthRate loglogp(double lambda) { return builtin_rate(RateFamily::loglog_poly, {{"lambda", lambda}}); }
GrowthRate loglogn() { return builtin_rate(RateFamily::loglog_poly, {}, true); }

struct Family {
  const char* name;
  DichotomyParams p;
  double q;
};

// Admissible constants for each builtin family (aq = -1 for the log families).
std::vector<Family> families() {
  return {{"exponential", {1, -1, 1, 0.1, expo(), expo()}, 2},
          {"polynomial", {1, -2, 1, 0.3, poly(), poly()}, 2},
          {"log_poly", {1, -0.5, 0.5, 0.5, logp(4), logn()}, 2},
          {"loglog_poly", {1, -0.5, 0.5, 0.5, loglogp(4), loglogn()}, 2}};
}

}  // namespace

TEST(TailIntegral, ExponentialWithEps) {
  const auto I = tail_integral({1, -1, 1, 0.1, expo(), expo()}, 2, 0.0);
  EXPECT_TRUE(I.converged);
  EXPECT_NEAR(I.value, 1.0 / 1.9, 1e-8 / 1.9);
}

TEST(TailIntegral, ExponentialShifted) {
  const auto I = tail_integral({1, -1, 1, 0.0, expo(), expo()}, 2, 1.0);
  EXPECT_NEAR(I.value, std::exp(-2.0) / 2.0, 1e-8 * std::exp(-2.0) / 2.0);
}

TEST(TailIntegral, LogValueBeyondUnderflow) {
  const DichotomyParams p{1, -1, 1, 0.1, expo(), expo()};
  const auto I = tail_integral(p, 2, 1000.0);
  EXPECT_TRUE(I.converged);
  EXPECT_EQ(I.value, 0.0);
  EXPECT_NEAR(I.log_value, -1.9 * 1000.0 - std::log(1.9), 1e-8);
  EXPECT_NEAR(std::log(beta_quadrature(p, 2, 1000.0)), std::log(std::sqrt(1.9)) - 0.2 * 1000.0, 1e-8);
  EXPECT_LE(fundamental_identity_residual(p, 2, 1000.0), 1e-9);
}

TEST(TailIntegral, PolynomialPowerRule) {
  const auto I = tail_integral({1, -1, 1, 0.5, poly(), poly()}, 2, 0.0);
  EXPECT_TRUE(I.converged);
  EXPECT_NEAR(I.value, 2.0, 2e-8);
}

TEST(TailIntegral, ExpressionRateMatchesBuiltin) {
  const auto a = tail_integral({1, -1, 1, 0.1, expo(), expo()}, 2, 0.5);
  const auto e = expression_rate("exp(t)", 0);
  const auto b = tail_integral({1, -1, 1, 0.1, e, e}, 2, 0.5);
  EXPECT_NEAR(b.value, a.value, 1e-8 * a.value);
}

TEST(TailIntegral, DivergenceDetected) {
  EXPECT_FALSE(tail_integral({1, -1, 0, 2.5, expo(), expo()}, 2, 0.0).converged);
  EXPECT_FALSE(tail_integral({1, -0.25, 1, 0.0, poly(), poly()}, 2, 0.0).converged);
}

TEST(TailIntegral, RequiresQAboveOne) {
  EXPECT_THROW((void)tail_integral({1, -1, 1, 0.1, expo(), expo()}, 1.0, 0.0), std::invalid_argument);
}

TEST(Beta, PrintedValues) {
  EXPECT_NEAR(BetaFunction({1, -1, 1, 0.1, expo(), expo()}, 2)(0.0), std::sqrt(1.9), 1e-12);
  EXPECT_NEAR(BetaFunction({1, -1, 1, 0.1, expo(), expo()}, 2)(0.0), 1.378405, 1e-6);
  EXPECT_NEAR(BetaFunction({1, -0.5, 0.5, 0.5, logp(4), logn()}, 2)(0.0), std::sqrt(2.5), 1e-12);
}

TEST(Beta, ConstantWithoutNonuniformPart) {
  BetaOptions quad;
  quad.prefer_closed_form = false;
  const BetaFunction b({1, -1, 1, 0.0, expo(), expo()}, 2, quad);
  for (double s : {0.0, 1.0, 4.0, 9.0}) EXPECT_NEAR(b(s), std::sqrt(2.0), 1e-8) << s;
}

TEST(Beta, ClosedFormsMatchQuadrature) {
  BetaOptions quad;
  quad.prefer_closed_form = false;
  const auto grid = uniform_grid(0.0, 20.0, 20);
  for (const auto& f : families()) {
    const auto cf = closed_form_beta(f.p, f.q);
    ASSERT_TRUE(cf.has_value()) << f.name;
    const BetaFunction b(f.p, f.q, quad);
    for (double t : grid) {
      const double exact = std::exp(cf->log_beta(t));
      EXPECT_NEAR(b(t), exact, 1e-6 * exact) << f.name << " t = " << t;
    }
  }
}

TEST(Beta, NoClosedFormOffTheCriticalExponent) {
  EXPECT_FALSE(closed_form_beta({1, -0.75, 0.5, 0.5, logp(4), logn()}, 2).has_value());
  EXPECT_FALSE(closed_form_beta({1, -1, 1, 0.1, expression_rate("exp(t)", 0), expo()}, 2).has_value());
}

TEST(Beta, TildeBelowBeta) {
  for (const auto& f : families()) {
    const BetaFunction b(f.p, f.q);
    for (double t : {0.0, 0.5, 3.0, 12.0}) EXPECT_LE(b.tilde(t), b(t)) << f.name;
  }
}

TEST(FundamentalIdentity, AllFamiliesRandomTimes) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> us(0.0, 20.0);
  for (const auto& f : families()) {
    for (int i = 0; i < 10; ++i) {
      const double s = us(gen);
      EXPECT_LE(fundamental_identity_residual(f.p, f.q, s), 1e-6) << f.name << " s = " << s;
    }
  }
}

TEST(FundamentalIdentity, ExponentialTight) {
  for (double s : {0.0, 1.0, 5.0}) {
    EXPECT_LE(fundamental_identity_residual({1, -1, 1, 0.1, expo(), expo()}, 2, s), 1e-8);
  }
  EXPECT_LE(fundamental_identity_residual({1, -1, 1, 0.0, expo(), expo()}, 2, 3.0), 1e-9);
}

TEST(FundamentalIdentity, LogLogAtTwo) {
  EXPECT_LE(fundamental_identity_residual({1, -0.5, 0.5, 0.5, loglogp(4), loglogn()}, 2, 2.0), 1e-6);
}

TEST(FundamentalIdentity, WithoutClosedForm) {
  // a q != -1: no closed form, beta comes from quadrature at another depth.
  const DichotomyParams p{1, -0.75, 0.5, 0.5, logp(4), logn()};
  for (double s : {0.0, 3.0, 10.0}) EXPECT_LE(fundamental_identity_residual(p, 2, s), 1e-6);
}

TEST(LimitCondition, Examples) {
  EXPECT_TRUE(check_limit_condition({1, -1, 1, 0.1, expo(), expo()}).pass);
  EXPECT_FALSE(check_limit_condition({1, -1, 0, 1.5, expo(), expo()}).pass);
  EXPECT_TRUE(check_limit_condition({1, -0.5, 0.5, 0.5, logp(4), logn()}).pass);
}

TEST(Monotonicity, Examples) {
  const auto grid = uniform_grid(0.0, 20.0, 41);
  const auto ok = check_monotonicity(BetaFunction({1, -1, 1, 0.1, expo(), expo()}, 2), grid);
  EXPECT_TRUE(ok.beta_nonincreasing);
  EXPECT_TRUE(ok.mu_a_over_beta_nonincreasing);
  const auto bad = check_monotonicity(BetaFunction({1, -1, 1, 0.6, expo(), expo()}, 2), grid);
  EXPECT_FALSE(bad.mu_a_over_beta_nonincreasing);
  const auto flat = check_monotonicity(BetaFunction({1, -1, 1, 0.0, expo(), expo()}, 2), grid);
  EXPECT_TRUE(flat.beta_nonincreasing);
  EXPECT_TRUE(flat.mu_a_over_beta_nonincreasing);
}

TEST(DeltaMax, ReferenceValue) {
  const DeltaMax d = delta_max(1, 2, 2, 1);
  EXPECT_NEAR(d.delta, 0.99 / std::sqrt(1152.0), 1e-12);
  EXPECT_NEAR(d.delta, 0.0291, 1e-4);
  EXPECT_EQ(d.binding, 4);
}

TEST(DeltaMax, SatisfiesEveryInequality) {
  for (double c : {0.1, 1.0, 3.0}) {
    for (double C : {1.5, 2.0, 4.0}) {
      const double q = 2.0, D = 1.0;
      const double x = std::pow(delta_max(c, q, C, D).delta, q);
      const double k = c * D * x;
      EXPECT_LE(D + std::pow(2, q) * std::pow(3, q + 1) * k * std::pow(C, q + 1), C);
      EXPECT_LT(std::pow(2, q) * std::pow(3, q + 1) * k * std::pow(C, q), 1.0);
      EXPECT_LT(std::pow(2, q + 2) * std::pow(3, q) * k * std::pow(C, q), 1.0);
      EXPECT_LT(std::pow(2, q + 2) * std::pow(3, q) * k * std::pow(C, q + 1), 1.0);
      EXPECT_LT(std::pow(2, q) * std::pow(3, q + 1) * k * std::pow(C, q), 0.5);
      EXPECT_LT(std::pow(2, q + 1) * std::pow(3, q) * k * std::pow(C, q + 1), 0.5);
    }
  }
}

TEST(DeltaMax, CapWithoutNonlinearity) { EXPECT_EQ(delta_max(0.0, 2, 2, 1, 0.75).delta, 0.75); }

TEST(DeltaMax, RequiresCAboveD) {
  EXPECT_THROW((void)delta_max(1, 2, 1, 1), std::invalid_argument);
  EXPECT_THROW((void)delta_max(1, 2, 0.5, 1), std::invalid_argument);
}

TEST(DeltaMax, NonincreasingInC) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double c1 = u(gen), c2 = c1 + u(gen);
    const double C = 1.0 + u(gen), q = 1.0 + u(gen);
    EXPECT_GE(delta_max(c1, q, C, 1.0).delta, delta_max(c2, q, C, 1.0).delta);
  }
}

TEST(DeltaMax, NonincreasingInConstantOnceInclusionIsSlack) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  int checked = 0;
  for (int i = 0; i < 400; ++i) {
    const double c = u(gen), q = 1.0 + u(gen);
    const double C1 = 1.0 + u(gen), C2 = C1 + u(gen);
    const DeltaMax d1 = delta_max(c, q, C1, 1.0);
    if (d1.binding == 1) continue;
    ++checked;
    EXPECT_GE(d1.delta, delta_max(c, q, C2, 1.0).delta);
  }
  EXPECT_GT(checked, 100);
}

TEST(DeltaMax, InclusionMakesSmallConstantsWorse) {
  // Near C = D the inclusion D + K C^{q+1} delta^q <= C binds and delta_max grows with C.
  const DeltaMax near = delta_max(1, 2, 1.05, 1);
  EXPECT_EQ(near.binding, 1);
  EXPECT_LT(near.delta, delta_max(1, 2, 1.5, 1).delta);
}

TEST(ContractionFactor, ReferenceValue) { EXPECT_NEAR(graph_contraction_factor(1, 2, 2, 1, 0.02), 0.4608, 1e-12); }

TEST(Assess, ExponentialPasses) {
  const auto rep = assess_admissibility({1, -1, 1, 0.1, expo(), expo()}, 2, 1);
  EXPECT_TRUE(rep.pass());
  EXPECT_EQ(rep.C, 2.0);
  EXPECT_NEAR(rep.beta_at_zero, std::sqrt(1.9), 1e-12);
  ASSERT_TRUE(rep.closed_form.has_value());
}

TEST(Assess, LogFamiliesPass) {
  EXPECT_TRUE(assess_admissibility({1, -0.5, 0.5, 0.5, logp(4), logn()}, 2, 1).pass());
  EXPECT_TRUE(assess_admissibility({1, -0.5, 0.5, 0.5, loglogp(4), loglogn()}, 2, 1).pass());
}

TEST(Assess, FailingLimitReported) {
  const auto rep = assess_admissibility({1, -1, 0, 1.5, expo(), expo()}, 2, 1);
  EXPECT_FALSE(rep.pass());
  EXPECT_FALSE(rep.limit.pass);
}
