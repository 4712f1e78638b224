#pragma once

// Weight updates: TD(lambda), VGL(lambda) with identity or greedy Omega,
// residual-gradient VGL, BPTT, the actor update, the continuous-time VGL
// update, and the SGD / RPROP appliers.

#include "vgl/core.hpp"
#include "vgl/critics.hpp"
#include "vgl/models.hpp"
#include "vgl/policy.hpp"
#include "vgl/targets.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace vgl {

template <int W>
struct UpdateVector {
  Vec<W> dw = Vec<W>::Zero();
  double error = 0.0;      // 1/2 sum of squared target errors where meaningful
  double log_scale = 0.0;  // the update is dw * exp(log_scale); nonzero only when dw alone would underflow
  Vec<W> unscaled() const { return dw * std::exp(log_scale); }
};

// acc += u, keeping the larger of the two scales.
template <int W>
void accumulate(UpdateVector<W>& acc, const UpdateVector<W>& u) {
  if (acc.dw.isZero(0.0)) {
    const double e = acc.error;
    acc = u;
    acc.error += e;
    return;
  }
  if (u.dw.isZero(0.0)) {
    acc.error += u.error;
    return;
  }
  const double s = std::max(acc.log_scale, u.log_scale);
  acc.dw = acc.dw * std::exp(acc.log_scale - s) + u.dw * std::exp(u.log_scale - s);
  acc.log_scale = s;
  acc.error += u.error;
}

enum class OmegaMode { kIdentity, kGreedy };

// ---------------------------------------------------------------------------
// value learning

template <int N, int W>
UpdateVector<W> td_lambda(const Trajectory<N, W>& tr, const std::vector<double>& vprime, double alpha) {
  if (static_cast<int>(vprime.size()) != tr.F() + 1) throw ArgumentError("td_lambda: targets do not match trajectory");
  UpdateVector<W> u;
  for (int t = 1; t < tr.F(); ++t) {
    const auto& cb = tr.steps[t].critic;
    const double err = vprime[t] - cb.V;
    u.dw += cb.dVdw * err;
    u.error += 0.5 * err * err;
  }
  u.dw *= alpha;
  return u;
}

// Batch eligibility-trace form of the same update.
template <int N, int W>
UpdateVector<W> td_lambda_traces(const Trajectory<N, W>& tr, double lambda, double alpha) {
  UpdateVector<W> u;
  Vec<W> trace = Vec<W>::Zero();
  for (int t = 1; t < tr.F(); ++t) {
    trace = lambda * trace + tr.steps[t].critic.dVdw;
    const double delta = tr.steps[t].r + tr.critic_at(t + 1).V - tr.steps[t].critic.V;
    u.dw += delta * trace;
  }
  u.dw *= alpha;
  return u;
}

// ---------------------------------------------------------------------------
// value-gradient learning

template <int N, int W>
UpdateVector<W> vgl(const Trajectory<N, W>& tr, const TargetsBundle<N>& tb, double alpha, OmegaMode mode) {
  const int F = tr.F();
  if (static_cast<int>(tb.Gprime.size()) != F + 1) throw ArgumentError("vgl: targets do not match trajectory");
  UpdateVector<W> u;
  if (mode == OmegaMode::kIdentity) {
    for (int t = 1; t < F; ++t) {
      const auto& cb = tr.steps[t].critic;
      const Vec<N> err = tb.Gprime[t] - cb.G;
      u.dw += cb.dGdw * err;
      u.error += 0.5 * err.squaredNorm();
    }
  } else {
    if (static_cast<int>(tb.Omega.size()) != F) throw ArgumentError("vgl: greedy-Omega mode needs Omega");
    for (int t = 0; t < F; ++t) {
      const auto& cb = tr.critic_at(t + 1);
      const Vec<N> err = tb.Gprime[t + 1] - cb.G;
      u.dw += cb.dGdw * (tb.Omega[t] * err);
      u.error += 0.5 * err.dot(tb.Omega[t] * err);
    }
  }
  u.dw *= alpha;
  return u;
}

// ---------------------------------------------------------------------------
// residual gradients

enum class RgBackend { kNumeric, kAnalytic };

// E(x0, w) = 1/2 sum_{t>=1} |G_t - G'_t|^2 along the greedy trajectory for w.
template <DiscreteModel M, Critic C>
double rg_error(const M& m, C critic, const Vec<M::kStateDim>& x0, double lambda, const Vec<C::kWeights>& w) {
  critic.set_weights(w);
  const auto tr = rollout(m, critic, x0);
  const auto gp = compute_targets_G(tr, lambda);
  double e = 0.0;
  for (int t = 1; t < tr.F(); ++t) e += 0.5 * (tr.steps[t].critic.G - gp[t]).squaredNorm();
  return e;
}

namespace detail {

// Backward recursion for dE/dw.  Valid when f is affine, r has the second
// partials reported by the model, and the critic's dG/dx is constant, so
// the policy's x-derivative does not move with x or w.
template <DiscreteModel M, Critic C>
  requires C::kConstantCurvature
Vec<C::kWeights> rg_gradient_analytic(const M&, const Trajectory<M::kStateDim, C::kWeights>& tr,
                                      const std::vector<Vec<M::kStateDim>>& gp, double lambda) {
  constexpr int N = M::kStateDim;
  constexpr int W = C::kWeights;
  const int F = tr.F();
  Mat<N, N> jx_next = Mat<N, N>::Zero();  // dG'_{t+1}/dx_{t+1}
  Mat<W, N> jw_next = Mat<W, N>::Zero();  // dG'_{t+1}/dw
  Vec<N> ex_next = Vec<N>::Zero();        // dE_{t+1}/dx_{t+1}
  Vec<W> ew_next = Vec<W>::Zero();        // dE_{t+1}/dw
  for (int t = F - 1; t >= 0; --t) {
    const auto& st = tr.steps[t];
    const auto& p = st.partials;
    if (!st.policy.dpi_dx || !st.policy.dpi_dw) throw TargetsUndefinedError(t, "policy derivatives undefined");
    const Vec<N>& dpx = *st.policy.dpi_dx;
    const Vec<W>& dpw = *st.policy.dpi_dw;
    const auto& cb_next = tr.critic_at(t + 1);

    const Mat<N, N> mt = p.dfdx + dpx * p.dfda.transpose();
    const Mat<N, N> k_next = lambda * jx_next + (1.0 - lambda) * cb_next.dGdx;
    const Vec<N> ra = p.d2rdxda + dpx * p.d2rda2;
    const Mat<N, N> dpdx = p.d2rdx2 + dpx * p.d2rdxda.transpose() + ra * dpx.transpose();
    const Mat<N, N> jx = dpdx + mt * k_next * mt.transpose();
    const Mat<W, N> dbdw = (dpw * p.dfda.transpose()) * k_next + lambda * jw_next + (1.0 - lambda) * cb_next.dGdw;
    const Mat<W, N> jw = dpw * ra.transpose() + dbdw * mt.transpose();

    Vec<N> ex = mt * ex_next;
    Vec<W> ew = dpw * p.dfda.dot(ex_next) + ew_next;
    if (t >= 1) {
      const Vec<N> err = st.critic.G - gp[t];
      ex += (st.critic.dGdx - jx) * err;
      ew += (st.critic.dGdw - jw) * err;
    }
    jx_next = jx;
    jw_next = jw;
    ex_next = ex;
    ew_next = ew;
  }
  return ew_next;
}

}  // namespace detail

template <DiscreteModel M, Critic C>
UpdateVector<C::kWeights> vgl_rg(const M& m, const C& critic, const Vec<M::kStateDim>& x0, double lambda, double alpha,
                                 RgBackend backend = RgBackend::kNumeric) {
  UpdateVector<C::kWeights> u;
  const Vec<C::kWeights> w = critic.weights();
  if (backend == RgBackend::kNumeric) {
    u.error = rg_error(m, critic, x0, lambda, w);
    u.dw = -alpha * fd_gradient([&](const Vec<C::kWeights>& wp) { return rg_error(m, critic, x0, lambda, wp); }, w);
  } else {
    if constexpr (requires { requires C::kConstantCurvature; }) {
      const auto tr = rollout(m, critic, x0);
      const auto gp = compute_targets_G(tr, lambda);
      for (int t = 1; t < tr.F(); ++t) u.error += 0.5 * (tr.steps[t].critic.G - gp[t]).squaredNorm();
      u.dw = -alpha * detail::rg_gradient_analytic<M, C>(m, tr, gp, lambda);
    } else {
      throw ArgumentError("vgl_rg: analytic backend needs a constant-curvature critic");
    }
  }
  return u;
}

// ---------------------------------------------------------------------------
// policy-gradient side: explicit parametric policies

template <class P>
concept ParametricPolicy = requires(const P& p, P& mp, int t, const Vec<P::kStateDim>& x, const Vec<P::kParams>& z) {
  { P::kStateDim } -> std::convertible_to<int>;
  { P::kParams } -> std::convertible_to<int>;
  { p.action(t, x) } -> std::same_as<double>;
  { p.dpi_dz(t, x) } -> std::same_as<Vec<P::kParams>>;
  { p.dpi_dx(t, x) } -> std::same_as<Vec<P::kStateDim>>;
  { p.params() } -> std::convertible_to<Vec<P::kParams>>;
  mp.set_params(z);
};

// a = sum_d z_d x^d on a scalar state, shared across time steps.
template <int D>
class PolynomialPolicy {
 public:
  static constexpr int kStateDim = 1;
  static constexpr int kParams = D;

  explicit PolynomialPolicy(const Vec<D>& z = Vec<D>::Zero()) : z_(z) {}
  const Vec<D>& params() const { return z_; }
  void set_params(const Vec<D>& z) { z_ = z; }

  double action(int, const Vec<1>& x) const { return dpi_dz(0, x).dot(z_); }
  Vec<D> dpi_dz(int, const Vec<1>& x) const {
    Vec<D> phi;
    double p = 1.0;
    for (int d = 0; d < D; ++d, p *= x[0]) phi[d] = p;
    return phi;
  }
  Vec<1> dpi_dx(int, const Vec<1>& x) const {
    double s = 0.0, p = 1.0;
    for (int d = 1; d < D; ++d, p *= x[0]) s += d * z_[d] * p;
    return Vec<1>(s);
  }

 private:
  Vec<D> z_;
};

template <int N, int Z>
struct PolicyStep {
  int t = 0;
  Vec<N> x = Vec<N>::Zero();
  double a = 0.0;
  double r = 0.0;
  ModelPartials<N> partials;
  Vec<Z> dpi_dz = Vec<Z>::Zero();
  Vec<N> dpi_dx = Vec<N>::Zero();
};

template <int N, int Z>
struct PolicyTrajectory {
  std::vector<PolicyStep<N, Z>> steps;
  Vec<N> x_final = Vec<N>::Zero();
  int F() const { return static_cast<int>(steps.size()); }
  const Vec<N>& state_at(int t) const { return t < F() ? steps[t].x : x_final; }
  double total_reward() const {
    double s = 0.0;
    for (const auto& st : steps) s += st.r;
    return s;
  }
};

// Rollout under an explicit policy; `noise(t)` is added to each action.
template <DiscreteModel M, ParametricPolicy P>
PolicyTrajectory<M::kStateDim, P::kParams> policy_rollout(const M& m, const P& pol, const Vec<M::kStateDim>& x0,
                                                          const std::function<double(int)>& noise = {}) {
  PolicyTrajectory<M::kStateDim, P::kParams> tr;
  Vec<M::kStateDim> x = x0;
  int t = 0;
  while (!m.is_terminal(t, x)) {
    if (t >= kMaxEpisodeSteps) throw RunawayTrajectoryError("policy_rollout: episode cap exceeded");
    auto& st = tr.steps.emplace_back();
    st.t = t;
    st.x = x;
    if (!m.action_free(t)) {
      st.a = pol.action(t, x) + (noise ? noise(t) : 0.0);
      st.dpi_dz = pol.dpi_dz(t, x);
      st.dpi_dx = pol.dpi_dx(t, x);
    }
    const auto step = m.step(t, x, st.a);
    st.r = step.reward;
    st.partials = m.partials(t, x, st.a);
    x = step.next;
    ++t;
  }
  tr.x_final = x;
  return tr;
}

// dR/dx_t along the trajectory, t = 0 .. F (zero at F).
template <int N, int Z>
std::vector<Vec<N>> return_gradients(const PolicyTrajectory<N, Z>& tr) {
  std::vector<Vec<N>> g(tr.F() + 1, Vec<N>::Zero());
  for (int t = tr.F() - 1; t >= 0; --t) {
    const auto& st = tr.steps[t];
    const double dRda = st.partials.drda + st.partials.dfda.dot(g[t + 1]);
    g[t] = st.partials.drdx + st.partials.dfdx * g[t + 1] + st.dpi_dx * dRda;
  }
  return g;
}

template <int N, int Z>
UpdateVector<Z> bptt(const PolicyTrajectory<N, Z>& tr, double alpha) {
  UpdateVector<Z> u;
  Vec<N> g_next = Vec<N>::Zero();
  for (int t = tr.F() - 1; t >= 0; --t) {
    const auto& st = tr.steps[t];
    const double dRda = st.partials.drda + st.partials.dfda.dot(g_next);
    u.dw += st.dpi_dz * dRda;
    g_next = st.partials.drdx + st.partials.dfdx * g_next + st.dpi_dx * dRda;
  }
  u.dw *= alpha;
  return u;
}

// Actor update with the critic's value-gradient G(t, x) standing in for
// dR/dx at the next state.
template <int N, int Z, class GradFn>
UpdateVector<Z> actor_update(const PolicyTrajectory<N, Z>& tr, GradFn&& grad, double alpha) {
  UpdateVector<Z> u;
  for (int t = 0; t < tr.F(); ++t) {
    const auto& st = tr.steps[t];
    const Vec<N> g = grad(t + 1, tr.state_at(t + 1));
    u.dw += st.dpi_dz * (st.partials.drda + st.partials.dfda.dot(g));
  }
  u.dw *= alpha;
  return u;
}

template <int N, int Z, Critic C>
UpdateVector<Z> actor_update_with_critic(const PolicyTrajectory<N, Z>& tr, const C& critic, double alpha) {
  return actor_update(tr, [&](int t, const Vec<N>& x) { return critic.eval(t, x).G; }, alpha);
}

// One stochastic-real-valued-unit update: uniform noise n_t in [-eps, eps]
// on each action, reinforcement n_t (r_t + V_{t+1} - V_t).
template <DiscreteModel M, ParametricPolicy P, Critic C>
UpdateVector<P::kParams> srv_update(const M& m, const P& pol, const C& critic, const Vec<M::kStateDim>& x0, double eps,
                                    SeededRng& rng, double alpha) {
  std::vector<double> n;
  const auto tr = policy_rollout(m, pol, x0, [&](int) {
    n.push_back(rng.uniform(-eps, eps));
    return n.back();
  });
  UpdateVector<P::kParams> u;
  int k = 0;
  for (int t = 0; t < tr.F(); ++t) {
    const auto& st = tr.steps[t];
    if (m.action_free(t)) continue;
    const double delta = st.r + critic.eval(t + 1, tr.state_at(t + 1)).V - critic.eval(t, st.x).V;
    u.dw += n[k++] * delta * st.dpi_dz;
  }
  u.dw *= alpha;
  return u;
}

// ---------------------------------------------------------------------------
// continuous time

// dw = alpha sum_t dt_t dG/dw_t Omega_t (G'_{t+1} - G_t), with
// Omega_t = g'(pre_t) dfda dfda^T.  With a sharp squash every g'(pre_t) can
// underflow; the sum is then formed relative to the largest one and the
// offset returned in log_scale.
inline constexpr double kRescaleBelowLog = -500.0;

template <ContinuousModel M, int W>
UpdateVector<W> ct_vgl_omega(const M& m, const CtTrajectory<M::kStateDim, W>& tr,
                             const std::vector<Vec<M::kStateDim>>& gp, double alpha) {
  if (static_cast<int>(gp.size()) != tr.F() + 1) throw ArgumentError("ct_vgl_omega: targets do not match trajectory");
  const Vec<M::kStateDim> dfda = m.dfbar_da();
  UpdateVector<W> u;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& st : tr.steps) top = std::max(top, st.policy.log_gprime);
  const double shift = top < kRescaleBelowLog ? top : 0.0;
  for (int t = 0; t < tr.F(); ++t) {
    const auto& st = tr.steps[t];
    const double proj = dfda.dot(gp[t + 1] - st.critic.G);
    u.dw += st.dt * proj * std::exp(st.policy.log_gprime - shift) * st.policy.dpre_dw;
    u.error += 0.5 * st.dt * st.policy.gprime * proj * proj;
  }
  u.dw *= alpha;
  u.log_scale = shift;
  return u;
}

// ---------------------------------------------------------------------------
// appliers

template <int W>
Vec<W> sgd_apply(const Vec<W>& w, const UpdateVector<W>& u) {
  return w + u.dw;
}

struct RpropParams {
  double eta_plus = 1.2;
  double eta_minus = 0.5;
  double delta0 = 0.1;
  double delta_max = 50.0;
  double delta_min = 1e-6;
};

template <int W>
struct RpropState {
  explicit RpropState(const RpropParams& p = {}) : params(p), step(Vec<W>::Constant(p.delta0)), prev(Vec<W>::Zero()) {}
  RpropParams params;
  Vec<W> step;
  Vec<W> prev;  // previous ascent direction, zeroed after a sign flip
};

// Sign-based step along `direction` (an ascent direction such as an
// accumulated weight update).  A sign flip shrinks the step and skips that
// weight for one iteration; a zero component leaves weight and state alone.
template <int W>
Vec<W> rprop_apply(const Vec<W>& w, const Vec<W>& direction, RpropState<W>& st) {
  Vec<W> out = w;
  const auto& p = st.params;
  for (int i = 0; i < W; ++i) {
    const double g = direction[i];
    if (g == 0.0) continue;
    const double s = g * st.prev[i];
    if (s > 0.0) {
      st.step[i] = std::min(st.step[i] * p.eta_plus, p.delta_max);
      out[i] += (g > 0 ? 1.0 : -1.0) * st.step[i];
      st.prev[i] = g;
    } else if (s < 0.0) {
      st.step[i] = std::max(st.step[i] * p.eta_minus, p.delta_min);
      st.prev[i] = 0.0;
    } else {
      out[i] += (g > 0 ? 1.0 : -1.0) * st.step[i];
      st.prev[i] = g;
    }
  }
  return out;
}

}  // namespace vgl
