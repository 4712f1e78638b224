#include "vgl/policy.hpp"

#include <gtest/gtest.h>

using namespace vgl;

namespace {

double greedy_a(const ToyProblem& m, const auto& critic, int t, double x) {
  return greedy_action(m, critic, t, Vec<1>(x)).action;
}

}  // namespace

TEST(Greedy, Exp1ClosedForm) {
  ToyProblem m(1, 0.0);
  const auto c = exp1_critic(0.0, Vec<2>(2.0, 0.0));
  EXPECT_DOUBLE_EQ(greedy_a(m, c, 0, 0.0), 1.0);
  SeededRng rng(1);
  for (int s = 0; s < 20; ++s) {
    const double c1 = rng.uniform(-3, 3), x0 = rng.uniform(-5, 5), w1 = rng.uniform(-10, 10);
    const auto cc = exp1_critic(c1, Vec<2>(w1, 0.0));
    EXPECT_NEAR(greedy_a(m, cc, 0, x0), (2 * c1 - 2 * x0 + w1) / 2, 1e-12);
  }
}

TEST(Greedy, AppendixBClosedForm) {
  ToyProblem m(1, 1.0);
  for (double w2 : {-3.0, 0.0, 4.5}) {
    const auto c = appendix_b_critic(Vec<2>(1.0, w2));
    EXPECT_DOUBLE_EQ(greedy_a(m, c, 0, 5.0), w2 / 2);
  }
}

TEST(Greedy, Exp2SecondStepClosedForm) {
  const double k = 1.0, c1 = 0.5, c2 = 1.0;
  ToyProblem m(2, k);
  const Vec<4> w(0.3, 2.0, -1.7, 4.0);
  const auto c = exp2_critic(c1, c2, w);
  for (double x1 : {-2.0, 0.0, 1.25})
    EXPECT_NEAR(greedy_a(m, c, 1, x1), (w[2] - 2 * c2 * x1) / (2 * (c2 + k)), 1e-12);
}

TEST(Greedy, ActionFreeStepHasNoAction) {
  ToyProblem m(2, 1.0);
  const auto pe = greedy_action(m, exp2_critic(0.5, 1, Vec<4>(1, 1, 1, 1)), 2, Vec<1>(3.0));
  EXPECT_EQ(pe.action, 0.0);
  EXPECT_FALSE(pe.saturated);
  ASSERT_TRUE(pe.dpi_dx.has_value());
  EXPECT_EQ((*pe.dpi_dx)[0], 0.0);
}

TEST(Greedy, ClosedFormAgreesWithNumericSearch) {
  SeededRng rng(2);
  for (int s = 0; s < 200; ++s) {
    const double x = rng.uniform(-10, 10);
    if (s % 2 == 0) {
      ToyProblem m(1, 0.0);
      const auto c = exp1_critic(rng.uniform(-3, 3), Vec<2>(rng.uniform(-10, 10), rng.uniform(-10, 10)));
      EXPECT_NEAR(greedy_a(m, c, 0, x), greedy_numeric_action(m, c, 0, Vec<1>(x)), 1e-8);
    } else {
      ToyProblem m(2, rng.uniform(0.01, 2));
      const Vec<4> w(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
      const auto c = exp2_critic(rng.uniform(0.05, 2), rng.uniform(0.05, 2), w);
      for (int t : {0, 1}) EXPECT_NEAR(greedy_a(m, c, t, x), greedy_numeric_action(m, c, t, Vec<1>(x)), 1e-8);
    }
  }
}

TEST(Greedy, UnsaturatedStationarityAndCurvature) {
  SeededRng rng(3);
  for (int s = 0; s < 100; ++s) {
    ToyProblem m(2, rng.uniform(0.01, 2));
    const Vec<4> w(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    const auto c = exp2_critic(rng.uniform(0.05, 2), rng.uniform(0.05, 2), w);
    for (int t : {0, 1}) {
      const Vec<1> x(rng.uniform(-10, 10));
      const auto pe = greedy_action(m, c, t, x);
      EXPECT_FALSE(pe.saturated);
      EXPECT_LE(std::abs(pe.dQda), 1e-8);
      EXPECT_LE(pe.d2Qda2, 0.0);
      // dr/da = -df/da . G_{t+1}
      const auto p = m.partials(t, x, pe.action);
      const auto next = c.eval(t + 1, m.step(t, x, pe.action).next);
      EXPECT_NEAR(p.drda, -p.dfda.dot(next.G), 1e-8);
    }
  }
}

TEST(Greedy, SaturationOnBoundedModel) {
  ToyProblem m(1, 1.0, true);
  const auto c = appendix_b_critic(Vec<2>(0.0, 10.0));  // unconstrained optimum a = 5
  const auto pe = greedy_action(m, c, 0, Vec<1>(0.0));
  EXPECT_EQ(pe.action, 1.0);
  EXPECT_TRUE(pe.saturated);
  EXPECT_TRUE(pe.dpi_dx->isZero(0.0));
  EXPECT_TRUE(pe.dpi_dw->isZero(0.0));
  EXPECT_EQ(greedy_numeric_action(m, c, 0, Vec<1>(0.0)), 1.0);
}

TEST(Greedy, NumericSearchFailsWithoutMaximiser) {
  ToyProblem m(1, 0.0);
  ToyStepForm<1> f;
  f.quad = 1.0;  // convex next-step value: Q unbounded above
  ToyCritic<1> c(CriticForm::kCustom, {f}, Vec<1>(0.0));
  EXPECT_THROW(greedy_action(m, c, 0, Vec<1>(0.5)), PolicyError);
}

TEST(PolicyDerivatives, Exp2FirstStepSlope) {
  const double c2 = 1.0, k = 1.0;
  ToyProblem m(2, k);
  const auto c = exp2_critic(0.5, c2, Vec<4>(0.1, 0.2, 0.3, 0.4));
  const auto pe = greedy_action(m, c, 1, Vec<1>(2.0));
  EXPECT_NEAR((*pe.dpi_dx)[0], -c2 / (c2 + k), 1e-14);
}

TEST(PolicyDerivatives, Exp1SlopeMatchesFd) {
  ToyProblem m(1, 0.0);
  const auto c = exp1_critic(0.3, Vec<2>(1.0, 0.0));
  const auto pe = greedy_action(m, c, 0, Vec<1>(0.8));
  EXPECT_NEAR((*pe.dpi_dx)[0], -1.0, 1e-14);
  EXPECT_NEAR(fd_derivative([&](double x) { return greedy_a(m, c, 0, x); }, 0.8), -1.0, 1e-8);
}

TEST(PolicyDerivatives, MatchFiniteDifferences) {
  SeededRng rng(4);
  for (int s = 0; s < 100; ++s) {
    ToyProblem m(2, rng.uniform(0.01, 2));
    const Vec<4> w(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    const auto c = exp2_critic(rng.uniform(0.05, 2), rng.uniform(0.05, 2), w);
    const int t = s % 2;
    const Vec<1> x(rng.uniform(-10, 10));
    const auto pe = greedy_action(m, c, t, x);
    const Vec<1> fdx = fd_gradient([&](const Vec<1>& xx) { return greedy_action(m, c, t, xx).action; }, x);
    EXPECT_LE(relative_error(*pe.dpi_dx, fdx), 1e-5);
    const Vec<4> fdw = fd_gradient(
        [&](const Vec<4>& ww) {
          auto cc = c;
          cc.set_weights(ww);
          return greedy_action(m, cc, t, x).action;
        },
        w);
    EXPECT_LE(relative_error(*pe.dpi_dw, fdw), 1e-5);
  }
}

TEST(PolicyDerivatives, UndefinedWhenCurvatureVanishes) {
  ToyProblem m(1, 0.0, true);
  ToyStepForm<1> f;  // V_1 = w x: Q linear in a, maximiser on the bound
  f.lin_w << 1.0;
  ToyCritic<1> c(CriticForm::kCustom, {f}, Vec<1>(0.0));
  const auto pe = evaluate_policy_at(m, c, 0, Vec<1>(0.0), 0.3);
  EXPECT_FALSE(pe.dpi_dx.has_value());
  EXPECT_FALSE(pe.dpi_dw.has_value());
}

TEST(EpsilonGreedy, ZeroNoiseIsGreedy) {
  ToyProblem m(2, 1.0);
  const auto c = exp2_critic(0.5, 1, Vec<4>(1, 2, 3, 4));
  SeededRng rng(5);
  const auto g = greedy_action(m, c, 0, Vec<1>(1.0));
  const auto e = epsilon_greedy(m, c, 0, Vec<1>(1.0), 0.0, rng);
  EXPECT_EQ(g.action, e.action);
  EXPECT_EQ(g.dpi_dx, e.dpi_dx);
  EXPECT_THROW(epsilon_greedy(m, c, 0, Vec<1>(1.0), -0.1, rng), ArgumentError);
}

TEST(EpsilonGreedy, ReproducibleNoise) {
  ToyProblem m(1, 0.0);
  const auto c = exp1_critic(0.0, Vec<2>(2.0, 0.0));
  SeededRng a(77), b(77);
  const double draw = b.normal(1.0);
  EXPECT_EQ(epsilon_greedy(m, c, 0, Vec<1>(0.0), 1.0, a).action, 1.0 + draw);
}

TEST(EpsilonGreedy, NoiseHasZeroMean) {
  ToyProblem m(1, 0.0);
  const auto c = exp1_critic(0.0, Vec<2>(2.0, 0.0));
  SeededRng rng(8);
  const double eps = 0.7;
  const int n = 100000;
  double s = 0;
  for (int i = 0; i < n; ++i) s += epsilon_greedy(m, c, 0, Vec<1>(0.0), eps, rng).action - 1.0;
  EXPECT_NEAR(s / n, 0.0, 3 * eps / std::sqrt(double(n)));
}

TEST(CtPolicy, MidpointExamples) {
  LunarLander m(0.01);
  CriticBundle<3, 34> cb;
  cb.G = Vec<3>(0, 2, 0);
  const auto pe = ct_policy_from_bundle(m, cb);
  EXPECT_DOUBLE_EQ(pe.pre, 0.0);
  EXPECT_DOUBLE_EQ(pe.action, 0.5);
  cb.G = Vec<3>(5, 3.5, 1.5);
  EXPECT_DOUBLE_EQ(ct_policy_from_bundle(m, cb).action, 0.5);
}

TEST(CtPolicy, ActionStrictlyInside) {
  LunarLander m(0.01);
  for (double g : {-1e6, -50.0, -2.0, 0.0, 2.0, 50.0, 1e6}) {
    CriticBundle<3, 34> cb;
    cb.G = Vec<3>(0, g, 0);
    const double a = ct_policy_from_bundle(m, cb).action;
    EXPECT_GT(a, 0.0);
    EXPECT_LT(a, 1.0);
  }
}

TEST(CtPolicy, DerivativesMatchFiniteDifferences) {
  LunarLander m(0.5);  // soft squash keeps differences well conditioned
  SeededRng rng(9);
  for (int s = 0; s < 100; ++s) {
    const MlpCritic c = MlpCritic::random(rng);
    const Vec<3> x(rng.uniform(5, 100), rng.uniform(-10, 5), rng.uniform(5, 50));
    const auto pe = ct_policy(m, c, x);
    const Vec<34> fdw = fd_gradient(
        [&](const Vec<34>& w) {
          MlpCritic cc(w);
          return ct_policy(m, cc, x).action;
        },
        c.weights());
    EXPECT_LE(relative_error(pe.dpi_dw, fdw, 1e-6), 1e-4);
    const Vec<3> fdx = fd_gradient([&](const Vec<3>& xx) { return ct_policy(m, c, xx).action; }, x);
    EXPECT_LE(relative_error(pe.dpi_dx, fdx, 1e-6), 1e-4);
  }
}
