#include "vgl/learners.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vgl;

namespace {

ToyCritic<4> random_exp2(SeededRng& rng, double lo = -10, double hi = 10) {
  const Vec<4> w(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
  return exp2_critic(rng.uniform(0.05, 2), rng.uniform(0.05, 2), w);
}

template <class C>
double greedy_return(const ToyProblem& m, C c, const Vec<1>& x0, const Vec<C::kWeights>& w) {
  c.set_weights(w);
  return rollout(m, c, x0).total_reward();
}

// Quadratic value function V_t(x) = q_t x^2 + l_t x + k_t defined at every
// t, including t = 0.
struct QuadraticCritic {
  static constexpr int kStateDim = 1;
  static constexpr int kWeights = 1;
  std::vector<double> q, l, k;
  CriticBundle<1, 1> eval(int t, const Vec<1>& x) const {
    CriticBundle<1, 1> b;
    if (t < 0 || t >= static_cast<int>(q.size())) return b;
    b.V = q[t] * x[0] * x[0] + l[t] * x[0] + k[t];
    b.G[0] = 2 * q[t] * x[0] + l[t];
    return b;
  }
  Vec<1> weights() const { return Vec<1>::Zero(); }
  void set_weights(const Vec<1>&) {}
};

// Exact value of the linear policy a = z0 + z1 x on the toy problem.
QuadraticCritic policy_value(const ToyProblem& m, const Vec<2>& z) {
  const int n = m.n();
  QuadraticCritic c;
  c.q.assign(n + 2, 0.0);
  c.l.assign(n + 2, 0.0);
  c.k.assign(n + 2, 0.0);
  c.q[n] = -1.0;
  for (int t = n - 1; t >= 0; --t) {
    // x' = z0 + (1 + z1) x, r = -k (z0 + z1 x)^2
    const double s = 1 + z[1], o = z[0];
    c.q[t] = -m.k() * z[1] * z[1] + c.q[t + 1] * s * s;
    c.l[t] = -2 * m.k() * z[0] * z[1] + 2 * c.q[t + 1] * s * o + c.l[t + 1] * s;
    c.k[t] = -m.k() * z[0] * z[0] + c.q[t + 1] * o * o + c.l[t + 1] * o + c.k[t + 1];
  }
  return c;
}

// Counterexample critic with the constant-curvature flag hidden
struct Hidden {
  static constexpr int kStateDim = 1;
  static constexpr int kWeights = 1;
  ToyCritic<1> inner = counterexample_critic(1.0);
  CriticBundle<1, 1> eval(int t, const Vec<1>& x) const { return inner.eval(t, x); }
  Vec<1> weights() const { return inner.weights(); }
  void set_weights(const Vec<1>& w) { inner.set_weights(w); }
};

}  // namespace

// ---------------------------------------------------------------------------
// TD

TEST(TdLambda, AppendixBExamples) {
  ToyProblem m(1, 1.0);
  const double alpha = 0.1;
  {
    const auto tr = rollout(m, appendix_b_critic(Vec<2>(-25.0, 0.0)), Vec<1>(5.0));
    const auto u = td_lambda(tr, compute_targets_V(tr, 0.0), alpha);
    EXPECT_TRUE(u.dw.isZero(0.0));
  }
  const auto tr = rollout(m, appendix_b_critic(Vec<2>(0.0, 0.0)), Vec<1>(5.0));
  const auto u = td_lambda(tr, compute_targets_V(tr, 0.0), alpha);
  EXPECT_DOUBLE_EQ(u.dw[0], alpha * -25.0);
  EXPECT_DOUBLE_EQ(u.dw[1], alpha * -125.0);
}

TEST(TdLambda, TracesFormMatches) {
  SeededRng rng(1);
  for (int s = 0; s < 100; ++s) {
    ToyProblem m(1 + s % 4, rng.uniform(0.1, 2));
    std::vector<ToyStepForm<3>> forms(m.n());
    for (auto& f : forms) {
      f.quad = -rng.uniform(0.1, 2);
      f.lin_w = Vec<3>(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      f.const_w = Vec<3>(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    ToyCritic<3> c(CriticForm::kCustom, forms, Vec<3>(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)));
    const auto tr = rollout(m, c, Vec<1>(rng.uniform(-5, 5)), 0.5, &rng);
    for (double lambda : {0.0, 0.3, 1.0}) {
      const auto a = td_lambda(tr, compute_targets_V(tr, lambda), 0.7);
      const auto b = td_lambda_traces(tr, lambda, 0.7);
      EXPECT_LE((a.dw - b.dw).norm(), 1e-12 * std::max(1.0, a.dw.norm()));
    }
  }
}

TEST(TdLambda, TraceCollapsesAtLambdaZero) {
  SeededRng rng(2);
  ToyProblem m(2, 1.0);
  const auto tr = rollout(m, random_exp2(rng), Vec<1>(1.0), 1.0, &rng);
  Vec<4> expect = Vec<4>::Zero();
  for (int t = 1; t < tr.F(); ++t)
    expect += tr.steps[t].critic.dVdw * (tr.steps[t].r + tr.critic_at(t + 1).V - tr.steps[t].critic.V);
  EXPECT_LE((td_lambda_traces(tr, 0.0, 1.0).dw - expect).norm(), 1e-12 * expect.norm());
}

TEST(TdLambda, ZeroAtConsistentValues) {
  SeededRng rng(3);
  ToyProblem m(2, 1.0);
  const auto tr = rollout(m, random_exp2(rng), Vec<1>(1.0));
  std::vector<double> vp(tr.F() + 1, 0.0);
  for (int t = 0; t < tr.F(); ++t) vp[t] = tr.steps[t].critic.V;
  EXPECT_TRUE(td_lambda(tr, vp, 1.0).dw.isZero(0.0));
  EXPECT_THROW(td_lambda(tr, std::vector<double>(2), 1.0), ArgumentError);
}

// ---------------------------------------------------------------------------
// VGL

TEST(Vgl, Exp1ClosedFormUpdate) {
  ToyProblem m(1, 0.0);
  SeededRng rng(4);
  for (int s = 0; s < 20; ++s) {
    const double c1 = rng.uniform(-3, 3), alpha = rng.uniform(0.01, 1);
    const Vec<2> w(rng.uniform(-10, 10), rng.uniform(-10, 10));
    const auto c = exp1_critic(c1, w);
    const auto tr = rollout(m, c, Vec<1>(0.0));
    for (double lambda : {0.0, 1.0}) {
      const auto u = vgl::vgl(tr, compute_targets(tr, lambda), alpha, OmegaMode::kIdentity);
      EXPECT_NEAR(u.dw[0], -alpha * (2 * c1 + w[0]), 1e-12 * (1 + std::abs(w[0])));
      EXPECT_EQ(u.dw[1], 0.0);
    }
  }
}

TEST(Vgl, Exp1ConvergesInOneStepAtUnitRate) {
  ToyProblem m(1, 0.0);
  const double c1 = 0.8;
  auto c = exp1_critic(c1, Vec<2>(7.0, -2.0));
  const auto tr = rollout(m, c, Vec<1>(0.0));
  c.set_weights(sgd_apply(c.weights(), vgl::vgl(tr, compute_targets(tr, 1.0), 1.0, OmegaMode::kIdentity)));
  EXPECT_NEAR(c.weights()[0], -2 * c1, 1e-14);
}

TEST(Vgl, ZeroWhenGradientsMatchTargets) {
  SeededRng rng(5);
  ToyProblem m(2, 1.0);
  const auto tr = rollout(m, random_exp2(rng), Vec<1>(1.0));
  auto tb = compute_targets(tr, 1.0);
  for (int t = 0; t < tr.F(); ++t) tb.Gprime[t] = tr.steps[t].critic.G;
  tb.Gprime[tr.F()] = tr.critic_final.G;
  EXPECT_TRUE(vgl::vgl(tr, tb, 1.0, OmegaMode::kIdentity).dw.isZero(0.0));
  EXPECT_TRUE(vgl::vgl(tr, tb, 1.0, OmegaMode::kGreedy).dw.isZero(0.0));
  tb.Omega.clear();
  EXPECT_THROW(vgl::vgl(tr, tb, 1.0, OmegaMode::kGreedy), ArgumentError);
}

TEST(Vgl, GreedyOmegaAtLambdaOneIsReturnGradient) {
  SeededRng rng(6);
  for (int s = 0; s < 100; ++s) {
    ToyProblem m(2, rng.uniform(0.1, 2));
    const auto c = random_exp2(rng);
    const Vec<1> x0(rng.uniform(-5, 5));
    const auto tr = rollout(m, c, x0);
    const double alpha = 0.01;
    const auto u = vgl::vgl(tr, compute_targets(tr, 1.0), alpha, OmegaMode::kGreedy);
    const Vec<4> fd = alpha * fd_gradient([&](const Vec<4>& w) { return greedy_return(m, c, x0, w); }, c.weights());
    EXPECT_LE(relative_error(u.dw, fd), 1e-5);
  }
}

TEST(Vgl, GreedyOmegaAscendsOnExp4) {
  ToyProblem m(2, 2.0);
  auto c = exp4_critic(2.0, 0.1, 10.0, Vec<1>(5.0));
  const double alpha = 0.01;
  double prev = rollout(m, c, Vec<1>(0.0)).total_reward();
  for (int it = 0; it < 100000; ++it) {
    const auto tr = rollout(m, c, Vec<1>(0.0));
    const auto u = vgl::vgl(tr, compute_targets(tr, 1.0), alpha, OmegaMode::kGreedy);
    c.set_weights(sgd_apply(c.weights(), u));
    const double r = rollout(m, c, Vec<1>(0.0)).total_reward();
    ASSERT_GE(r, prev - 1e-15) << "iteration " << it;
    prev = r;
    if (std::abs(u.dw[0]) < 1e-7 * alpha) break;
  }
  EXPECT_NEAR(prev, -2.65816, 1e-5);
}

// ---------------------------------------------------------------------------
// residual gradients

TEST(VglRg, BackendsAgree) {
  SeededRng rng(7);
  for (int s = 0; s < 20; ++s) {
    ToyProblem m(2, rng.uniform(0.1, 2));
    const auto c = random_exp2(rng);
    const Vec<1> x0(rng.uniform(-5, 5));
    for (double lambda : {0.0, 1.0}) {
      const auto a = vgl_rg(m, c, x0, lambda, 0.1, RgBackend::kNumeric);
      const auto b = vgl_rg(m, c, x0, lambda, 0.1, RgBackend::kAnalytic);
      EXPECT_LE(relative_error(b.dw, a.dw), 1e-3);
      EXPECT_NEAR(a.error, b.error, 1e-12 * (1 + a.error));
    }
  }
}

TEST(VglRg, AnalyticBackendNeedsConstantCurvature) {
  ToyProblem m(1, 0.0);
  EXPECT_THROW(vgl_rg(m, Hidden{}, Vec<1>(0.0), 0.0, 0.1, RgBackend::kAnalytic), ArgumentError);
  EXPECT_NO_THROW(vgl_rg(m, Hidden{}, Vec<1>(0.0), 0.0, 0.1, RgBackend::kNumeric));
}

TEST(VglRg, ZeroAtGlobalMinimum) {
  ToyProblem m(2, 1.0);
  const auto c = exp2_critic(0.5, 1.0, Vec<4>(0.0, 3.0, 0.0, -8.0));
  for (double lambda : {0.0, 1.0}) {
    for (auto backend : {RgBackend::kNumeric, RgBackend::kAnalytic}) {
      const auto u = vgl_rg(m, c, Vec<1>(0.0), lambda, 0.1, backend);
      EXPECT_EQ(u.error, 0.0);
      EXPECT_LE(u.dw.norm(), 1e-12);
    }
  }
}

TEST(VglRg, CounterexampleDescendsToSpuriousMinimum) {
  ToyProblem m(1, 0.0, false, 4.0);
  for (auto backend : {RgBackend::kNumeric, RgBackend::kAnalytic}) {
    auto c = counterexample_critic(6.0);
    UpdateVector<1> u;
    for (int it = 0; it < 20000; ++it) {
      u = vgl_rg(m, c, Vec<1>(0.0), 0.0, 0.01, backend);
      c.set_weights(sgd_apply(c.weights(), u));
      if (std::abs(u.dw[0]) < 1e-12) break;
    }
    EXPECT_NEAR(c.weights()[0], 8 * M_PI / 3, 1e-6);
    EXPECT_NEAR(u.error, 0.5 * std::pow(8 * M_PI / 3 - 4 * std::sin(M_PI / 3), 2), 1e-6);
    EXPECT_GT(u.error, 1.0);
  }
}

// ---------------------------------------------------------------------------
// BPTT and actor-critic

TEST(Bptt, MatchesFiniteDifferencesOfReturn) {
  SeededRng rng(8);
  for (int s = 0; s < 100; ++s) {
    ToyProblem m(1 + s % 3, rng.uniform(0.1, 2));
    const PolynomialPolicy<3> pol(Vec<3>(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)));
    const Vec<1> x0(rng.uniform(-2, 2));
    const double alpha = 0.05;
    const auto u = bptt(policy_rollout(m, pol, x0), alpha);
    const Vec<3> fd = alpha * fd_gradient(
                                  [&](const Vec<3>& z) {
                                    PolynomialPolicy<3> p(z);
                                    return policy_rollout(m, p, x0).total_reward();
                                  },
                                  pol.params());
    EXPECT_LE(relative_error(u.dw, fd), 1e-5);
  }
}

TEST(Bptt, HandExampleOneStep) {
  ToyProblem m(1, 1.0);
  for (double z : {-1.5, 0.0, 2.0}) {
    const double x0 = 0.7, alpha = 0.1;
    const auto u = bptt(policy_rollout(m, PolynomialPolicy<1>(Vec<1>(z)), Vec<1>(x0)), alpha);
    EXPECT_NEAR(u.dw[0], alpha * (-2 * z - 2 * (x0 + z)), 1e-14);
  }
}

TEST(Bptt, ZeroAtOptimalPolicy) {
  const double k = 0.6;
  ToyProblem m(1, k);
  const PolynomialPolicy<2> pol(Vec<2>(0.0, -1.0 / (1.0 + k)));
  for (double x0 : {-3.0, 0.5, 4.0}) EXPECT_LE(bptt(policy_rollout(m, pol, Vec<1>(x0)), 1.0).dw.norm(), 1e-14);
}

TEST(ActorUpdate, IdealCriticGivesBptt) {
  SeededRng rng(9);
  for (int s = 0; s < 50; ++s) {
    ToyProblem m(1 + s % 4, rng.uniform(0.1, 2));
    const PolynomialPolicy<3> pol(Vec<3>(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)));
    const auto tr = policy_rollout(m, pol, Vec<1>(rng.uniform(-2, 2)));
    const auto g = return_gradients(tr);
    const auto a = actor_update(tr, [&](int t, const Vec<1>&) { return g[t]; }, 0.3);
    const auto b = bptt(tr, 0.3);
    EXPECT_LE((a.dw - b.dw).norm(), 1e-10 * std::max(1.0, b.dw.norm()));
  }
}

TEST(ActorUpdate, ZeroCriticUsesImmediateReward) {
  ToyProblem m(2, 1.5);
  const PolynomialPolicy<2> pol(Vec<2>(0.4, -0.2));
  const auto tr = policy_rollout(m, pol, Vec<1>(1.0));
  const auto u = actor_update(tr, [](int, const Vec<1>&) { return Vec<1>::Zero(); }, 0.5);
  Vec<2> expect = Vec<2>::Zero();
  for (const auto& st : tr.steps) expect += st.dpi_dz * st.partials.drda;
  EXPECT_LE((u.dw - 0.5 * expect).norm(), 1e-14);
}

TEST(ActorUpdate, SrvMonteCarloAgrees) {
  ToyProblem m(2, 1.0);
  const PolynomialPolicy<2> pol(Vec<2>(0.3, -0.2));
  const auto critic = policy_value(m, pol.params());
  const Vec<1> x0(1.0);
  const double eps = 0.3, alpha = 1.0;
  SeededRng rng(10);
  const int samples = 1000000;
  Vec<2> mean = Vec<2>::Zero();
  for (int i = 0; i < samples; ++i) mean += srv_update(m, pol, critic, x0, eps, rng, alpha).dw;
  mean /= samples;
  const Vec<2> expect = (eps * eps / 3.0) * actor_update_with_critic(policy_rollout(m, pol, x0), critic, alpha).dw;
  EXPECT_LE(relative_error(mean, expect), 5e-2) << mean.transpose() << " vs " << expect.transpose();
}

// ---------------------------------------------------------------------------
// continuous time

TEST(CtVglOmega, MatchesReturnGradient) {
  SeededRng rng(11);
  const double dt = 1e-2, alpha = 1.0;
  for (double c_sharp : {0.5, 0.01}) {
    LunarLander m(c_sharp);
    for (int s = 0; s < 3; ++s) {
      const MlpCritic c = MlpCritic::random(rng);
      const Vec<3> x0(rng.uniform(20, 60), rng.uniform(-3, 0), 30);
      const auto tr = ct_rollout(m, c, x0, dt);
      const auto u = ct_vgl_omega(m, tr, ct_targets_G(m, tr, 0.0), alpha);
      const Vec<34> fd = alpha * fd_gradient(
                                     [&](const Vec<34>& w) {
                                       MlpCritic cc(w);
                                       return ct_rollout(m, cc, x0, dt).total_reward();
                                     },
                                     c.weights());
      EXPECT_LE(relative_error(u.unscaled(), fd), 1e-2) << "c=" << c_sharp;
    }
  }
}

TEST(CtVglOmega, ZeroWhenTargetsMatch) {
  LunarLander m(0.01);
  SeededRng rng(12);
  const auto tr = ct_rollout(m, MlpCritic::random(rng), Vec<3>(50, -1, 30), 0.1);
  // G'_{t+1} is paired with G_t
  std::vector<Vec<3>> gp(tr.F() + 1, Vec<3>::Zero());
  for (int t = 0; t < tr.F(); ++t) gp[t + 1] = tr.steps[t].critic.G;
  EXPECT_TRUE(ct_vgl_omega(m, tr, gp, 1.0).dw.isZero(0.0));
  EXPECT_THROW(ct_vgl_omega(m, tr, std::vector<Vec<3>>(1), 1.0), ArgumentError);
}

TEST(CtVglOmega, RescalesWhenSquashUnderflows) {
  LunarLander m(0.01);
  SeededRng rng(13);
  MlpCritic c = MlpCritic::random(rng, true);
  Vec<34> w = c.weights();
  w[MlpCritic::kOffC + 1] = -0.6;  // G_v ~ -6: pre ~ -8, every g'(pre) underflows
  c.set_weights(w);
  const auto tr = ct_rollout(m, c, Vec<3>(60, -1, 30), 0.1);
  const auto gp = ct_targets_G(m, tr, 0.0);
  for (const auto& st : tr.steps) ASSERT_EQ(st.policy.gprime, 0.0);
  const auto u = ct_vgl_omega(m, tr, gp, 1.0);
  EXPECT_LT(u.log_scale, kRescaleBelowLog);
  ASSERT_FALSE(u.dw.isZero(0.0));
  // same sum in extended precision, where exp(log g') is still representable
  Eigen::Matrix<long double, 34, 1> ref = Eigen::Matrix<long double, 34, 1>::Zero();
  for (int t = 0; t < tr.F(); ++t) {
    const auto& st = tr.steps[t];
    const long double proj = m.dfbar_da().dot(gp[t + 1] - st.critic.G);
    ref += (st.dt * proj * std::exp(static_cast<long double>(st.policy.log_gprime))) * st.policy.dpre_dw.cast<long double>();
  }
  ASSERT_GT(ref.norm(), 0.0L);
  const Vec<34> dir = (ref / ref.norm()).cast<double>();
  EXPECT_LE(relative_error(Vec<34>(u.dw.normalized()), dir), 1e-10);
  EXPECT_NEAR(static_cast<double>(std::log(ref.norm())), std::log(u.dw.norm()) + u.log_scale, 1e-9);
}

TEST(UpdateVector, AccumulateMixesScales) {
  UpdateVector<2> a, b, acc;
  a.dw = Vec<2>(1.0, -2.0);
  a.log_scale = -3.0;
  a.error = 0.5;
  b.dw = Vec<2>(0.25, 4.0);
  b.log_scale = 2.0;
  b.error = 1.0;
  accumulate(acc, a);
  EXPECT_EQ(acc.log_scale, -3.0);
  accumulate(acc, b);
  EXPECT_EQ(acc.log_scale, 2.0);
  EXPECT_LE(relative_error(acc.unscaled(), Vec<2>(a.unscaled() + b.unscaled())), 1e-14);
  EXPECT_DOUBLE_EQ(acc.error, 1.5);
}

TEST(CtVglOmega, WeightingIsRankOnePsd) {
  LunarLander m(0.01);
  for (double z : {-1.0, -0.01, 0.0, 0.003, 2.0}) {
    const Mat<3, 3> om = m.squash_prime(z) * m.dfbar_da() * m.dfbar_da().transpose();
    Eigen::SelfAdjointEigenSolver<Mat<3, 3>> es(om);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    EXPECT_LE((Eigen::FullPivLU<Mat<3, 3>>(om).rank()), 1);
  }
}

// ---------------------------------------------------------------------------
// appliers

TEST(Sgd, AddsUpdate) {
  UpdateVector<2> u;
  u.dw = Vec<2>(0.5, -1);
  EXPECT_EQ(sgd_apply(Vec<2>(1, 1), u), Vec<2>(1.5, 0));
}

TEST(Rprop, ConstantSignGrowsGeometrically) {
  RpropState<1> st;
  Vec<1> w(0.0);
  double moved = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Vec<1> nw = rprop_apply(w, Vec<1>(3.0), st);
    moved = nw[0] - w[0];
    w = nw;
  }
  EXPECT_NEAR(st.step[0], std::min(0.1 * std::pow(1.2, 9), 50.0), 1e-15);
  EXPECT_NEAR(moved, st.step[0], 1e-15);
  for (int i = 0; i < 100; ++i) w = rprop_apply(w, Vec<1>(3.0), st);
  EXPECT_EQ(st.step[0], 50.0);
}

TEST(Rprop, SignFlipHalvesAndSkips) {
  RpropState<2> st;
  Vec<2> w(1.0, 1.0);
  w = rprop_apply(w, Vec<2>(1.0, 1.0), st);
  w = rprop_apply(w, Vec<2>(1.0, 1.0), st);
  const double before = st.step[0];
  const Vec<2> w2 = rprop_apply(w, Vec<2>(-1.0, 1.0), st);
  EXPECT_EQ(w2[0], w[0]);
  EXPECT_DOUBLE_EQ(st.step[0], 0.5 * before);
  // next iteration steps with the reduced size, no further shrink
  const Vec<2> w3 = rprop_apply(w2, Vec<2>(-1.0, 1.0), st);
  EXPECT_DOUBLE_EQ(w3[0], w2[0] - 0.5 * before);
  EXPECT_DOUBLE_EQ(st.step[0], 0.5 * before);
}

TEST(Rprop, ZeroGradientLeavesEverything) {
  RpropState<2> st;
  Vec<2> w(1.0, -2.0);
  w = rprop_apply(w, Vec<2>(1.0, -1.0), st);
  const auto before = st;
  EXPECT_EQ(rprop_apply(w, Vec<2>(Vec<2>::Zero()), st), w);
  EXPECT_EQ(st.step, before.step);
  EXPECT_EQ(st.prev, before.prev);
}

TEST(Rprop, StepStaysInBounds) {
  RpropState<1> st;
  Vec<1> w(0.0);
  for (int i = 0; i < 200; ++i) w = rprop_apply(w, Vec<1>(i % 2 ? 1.0 : -1.0), st);
  EXPECT_GE(st.step[0], st.params.delta_min);
  EXPECT_LE(st.step[0], st.params.delta_max);
}
