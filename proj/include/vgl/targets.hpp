#pragma once

// Trajectories and the backward recursions for V', G' and Omega, in discrete
// and continuous time.

#include "vgl/core.hpp"
#include "vgl/critics.hpp"
#include "vgl/models.hpp"
#include "vgl/policy.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace vgl {

inline constexpr int kMaxEpisodeSteps = 10000;
inline constexpr int kMaxCtSteps = 1000000;

template <int N, int W>
struct TrajectoryStep {
  int t = 0;
  Vec<N> x = Vec<N>::Zero();
  double a = 0.0;
  double r = 0.0;
  bool saturated = false;
  ModelPartials<N> partials;
  CriticBundle<N, W> critic;  // at (t, x_t)
  PolicyEval<N, W> policy;
};

template <int N, int W>
struct Trajectory {
  std::vector<TrajectoryStep<N, W>> steps;  // t = 0 .. F-1
  Vec<N> x_final = Vec<N>::Zero();
  CriticBundle<N, W> critic_final;  // at (F, x_F)

  int F() const { return static_cast<int>(steps.size()); }
  const CriticBundle<N, W>& critic_at(int t) const { return t < F() ? steps[t].critic : critic_final; }
  const Vec<N>& state_at(int t) const { return t < F() ? steps[t].x : x_final; }
  double total_reward() const {
    double s = 0.0;
    for (const auto& st : steps) s += st.r;
    return s;
  }
  std::vector<double> actions() const {
    std::vector<double> a;
    a.reserve(steps.size());
    for (const auto& st : steps) a.push_back(st.a);
    return a;
  }
};

template <int N>
struct TargetsBundle {
  double lambda = 0.0;
  std::vector<double> Vprime;     // t = 0 .. F
  std::vector<Vec<N>> Gprime;     // t = 0 .. F
  std::vector<Mat<N, N>> Omega;   // t = 0 .. F-1
};

// Rolls out with the greedy policy (eps = 0) or epsilon-greedy (eps > 0),
// reusing the storage in `out`.
template <DiscreteModel M, Critic C>
void rollout_into(const M& m, const C& critic, const Vec<M::kStateDim>& x0, double eps, SeededRng* rng,
                  Trajectory<M::kStateDim, C::kWeights>& out, int max_steps = kMaxEpisodeSteps) {
  if (eps > 0.0 && rng == nullptr) throw ArgumentError("rollout: exploration needs an rng");
  out.steps.clear();
  Vec<M::kStateDim> x = x0;
  int t = 0;
  while (!m.is_terminal(t, x)) {
    if (t >= max_steps) throw RunawayTrajectoryError("rollout: episode cap exceeded");
    auto pe = eps > 0.0 ? epsilon_greedy(m, critic, t, x, eps, *rng) : greedy_action(m, critic, t, x);
    const auto tr = m.step(t, x, pe.action);
    if (!std::isfinite(tr.reward) || !tr.next.allFinite()) throw DomainError("rollout: non-finite transition");
    auto& st = out.steps.emplace_back();
    st.t = t;
    st.x = x;
    st.a = pe.action;
    st.r = tr.reward;
    st.saturated = pe.saturated;
    st.partials = m.partials(t, x, pe.action);
    st.critic = critic.eval(t, x);
    st.policy = pe;
    x = tr.next;
    ++t;
  }
  out.x_final = x;
  out.critic_final = critic.eval(t, x);
}

template <DiscreteModel M, Critic C>
Trajectory<M::kStateDim, C::kWeights> rollout(const M& m, const C& critic, const Vec<M::kStateDim>& x0, double eps = 0.0,
                                              SeededRng* rng = nullptr) {
  Trajectory<M::kStateDim, C::kWeights> tr;
  rollout_into(m, critic, x0, eps, rng, tr);
  return tr;
}

// Total reward of an open-loop action sequence from x0.
template <DiscreteModel M>
double replay_reward(const M& m, const Vec<M::kStateDim>& x0, const std::vector<double>& actions) {
  Vec<M::kStateDim> x = x0;
  double total = 0.0;
  for (int t = 0; t < static_cast<int>(actions.size()); ++t) {
    const auto tr = m.step(t, x, actions[t]);
    total += tr.reward;
    x = tr.next;
  }
  return total;
}

template <int N, int W>
void compute_targets_V_into(const Trajectory<N, W>& tr, double lambda, std::vector<double>& vp) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("targets: lambda outside [0, 1]");
  const int F = tr.F();
  vp.assign(F + 1, 0.0);
  for (int t = F - 1; t >= 0; --t)
    vp[t] = tr.steps[t].r + lambda * vp[t + 1] + (1.0 - lambda) * tr.critic_at(t + 1).V;
}

template <int N, int W>
std::vector<double> compute_targets_V(const Trajectory<N, W>& tr, double lambda) {
  std::vector<double> vp;
  compute_targets_V_into(tr, lambda, vp);
  return vp;
}

template <int N, int W>
void compute_targets_G_into(const Trajectory<N, W>& tr, double lambda, std::vector<Vec<N>>& gp) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("targets: lambda outside [0, 1]");
  const int F = tr.F();
  gp.assign(F + 1, Vec<N>::Zero());
  for (int t = F - 1; t >= 0; --t) {
    const auto& st = tr.steps[t];
    const auto& p = st.partials;
    const Vec<N>& g_next = tr.critic_at(t + 1).G;
    if (lambda == 0.0) {
      gp[t] = p.drdx + p.dfdx * g_next;
      continue;
    }
    if (!st.policy.dpi_dx) throw TargetsUndefinedError(t, "dpi/dx undefined with lambda > 0");
    const Vec<N>& dpx = *st.policy.dpi_dx;
    const Vec<N> blend = lambda * gp[t + 1] + (1.0 - lambda) * g_next;
    gp[t] = p.drdx + dpx * p.drda + p.dfdx * blend + dpx * p.dfda.dot(blend);
  }
}

template <int N, int W>
std::vector<Vec<N>> compute_targets_G(const Trajectory<N, W>& tr, double lambda) {
  std::vector<Vec<N>> gp;
  compute_targets_G_into(tr, lambda, gp);
  return gp;
}

template <int N, int W>
void compute_omega_into(const Trajectory<N, W>& tr, std::vector<Mat<N, N>>& om) {
  const int F = tr.F();
  om.assign(F, Mat<N, N>::Zero());
  for (int t = 0; t < F; ++t) {
    const auto& st = tr.steps[t];
    const Vec<N>& dfda = st.partials.dfda;
    if (st.saturated || dfda.isZero(0.0)) continue;
    if (st.policy.d2Qda2 == 0.0) throw SingularCurvatureError("compute_omega: zero Q curvature at step " + std::to_string(t));
    om[t] = -(dfda * dfda.transpose()) / st.policy.d2Qda2;
  }
}

template <int N, int W>
std::vector<Mat<N, N>> compute_omega(const Trajectory<N, W>& tr) {
  std::vector<Mat<N, N>> om;
  compute_omega_into(tr, om);
  return om;
}

template <int N, int W>
TargetsBundle<N> compute_targets(const Trajectory<N, W>& tr, double lambda, bool with_omega = true) {
  TargetsBundle<N> tb;
  tb.lambda = lambda;
  compute_targets_V_into(tr, lambda, tb.Vprime);
  compute_targets_G_into(tr, lambda, tb.Gprime);
  if (with_omega) compute_omega_into(tr, tb.Omega);
  return tb;
}

// ---------------------------------------------------------------------------
// continuous time

template <int N, int W>
struct CtStep {
  Vec<N> x = Vec<N>::Zero();
  double dt = 0.0;  // equals the grid step except on a clipped final step
  double rbar = 0.0;
  CriticBundle<N, W> critic;
  CtPolicyEval<N, W> policy;
};

template <int N, int W>
struct CtTrajectory {
  std::vector<CtStep<N, W>> steps;
  Vec<N> x_final = Vec<N>::Zero();
  CriticBundle<N, W> critic_final;
  double dt = 0.0;
  double clipped_fraction = 1.0;  // last step length / dt
  double integral_reward = 0.0;
  double impulse = 0.0;

  int F() const { return static_cast<int>(steps.size()); }
  double total_reward() const { return integral_reward + impulse; }
  const CriticBundle<N, W>& critic_at(int t) const { return t < F() ? steps[t].critic : critic_final; }
  const Vec<N>& state_at(int t) const { return t < F() ? steps[t].x : x_final; }
};

template <ContinuousModel M, Critic C>
CtTrajectory<M::kStateDim, C::kWeights> ct_rollout(const M& m, const C& critic, const Vec<M::kStateDim>& x0, double dt,
                                                   int max_steps = kMaxCtSteps) {
  if (!(dt > 0.0)) throw ArgumentError("ct_rollout: dt must be > 0");
  if (m.is_terminal(x0)) throw DomainError("ct_rollout: start state is terminal");
  CtTrajectory<M::kStateDim, C::kWeights> tr;
  tr.dt = dt;
  Vec<M::kStateDim> x = x0;
  while (true) {
    if (tr.F() >= max_steps) throw RunawayTrajectoryError("ct_rollout: episode cap exceeded");
    auto& st = tr.steps.emplace_back();
    st.x = x;
    st.critic = critic.eval(0, x);
    st.policy = ct_policy_from_bundle(m, st.critic);
    st.rbar = m.rbar_pre(st.policy.pre);
    const auto tau = m.fraction_to_terminal(x, st.policy.action, dt);
    st.dt = tau ? *tau : dt;
    tr.integral_reward += st.dt * st.rbar;
    x = x + st.dt * m.fbar(x, st.policy.action);
    if (tau) {
      tr.clipped_fraction = *tau / dt;
      break;
    }
    if (!x.allFinite()) throw DomainError("ct_rollout: non-finite state");
  }
  if constexpr (requires { m.snap_to_surface(x); }) x = m.snap_to_surface(x);
  tr.x_final = x;
  tr.critic_final = critic.eval(0, x);
  tr.impulse = m.impulse(x);
  return tr;
}

// Backward Euler sweep of the G' equation on the forward grid.  Node t pairs
// the derivatives of step t with G'_{t+1}, which makes the lambda-bar = 0 sweep
// the exact gradient of the simulated return (up to the final-step limit).
template <ContinuousModel M, int W>
std::vector<Vec<M::kStateDim>> ct_targets_G(const M& m, const CtTrajectory<M::kStateDim, W>& tr, double lambda_bar) {
  constexpr int N = M::kStateDim;
  if (!(lambda_bar >= 0.0)) throw ArgumentError("ct_targets_G: lambda-bar must be >= 0");
  const int F = tr.F();
  std::vector<Vec<N>> gp(F + 1, Vec<N>::Zero());
  if (F == 0) return gp;
  gp[F] = m.boundary_gradient_pre(tr.x_final, tr.steps[F - 1].policy.pre);
  const Vec<N> dfda = m.dfbar_da();
  for (int t = F - 1; t >= 0; --t) {
    const auto& st = tr.steps[t];
    const Vec<N>& dpx = st.policy.dpi_dx;
    const Vec<N> dr = m.drbar_dx(st.x) + dpx * m.drbar_da_pre(st.policy.pre);
    const Mat<N, N> df = m.dfbar_dx(st.x) + dpx * dfda.transpose();
    const Vec<N>& g_next = tr.critic_at(t + 1).G;
    gp[t] = gp[t + 1] + st.dt * (dr + df * gp[t + 1] - lambda_bar * (gp[t + 1] - g_next));
  }
  return gp;
}

}  // namespace vgl
