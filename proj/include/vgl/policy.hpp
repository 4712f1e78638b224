#pragma once

// Greedy and epsilon-greedy action selection with policy derivatives, plus
// the squashed greedy policy used in continuous time.

#include "vgl/core.hpp"
#include "vgl/critics.hpp"
#include "vgl/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace vgl {

inline constexpr double kSaturationTol = 1e-9;

template <int N, int W>
struct PolicyEval {
  double action = 0.0;
  bool saturated = false;
  bool greedy = true;  // false once exploration noise has been added
  double dQda = 0.0;
  double d2Qda2 = 0.0;
  std::optional<Vec<N>> dpi_dx;
  std::optional<Vec<W>> dpi_dw;
};

namespace detail {

template <DiscreteModel M, Critic C>
struct QProbe {
  double q;
  double dq;
  double d2q;
};

template <DiscreteModel M, Critic C>
QProbe<M, C> probe_q(const M& m, const C& critic, int t, const Vec<M::kStateDim>& x, double a) {
  const auto tr = m.step(t, x, a);
  const auto p = m.partials(t, x, a);
  const auto cb = critic.eval(t + 1, tr.next);
  return {tr.reward + cb.V, p.drda + p.dfda.dot(cb.G), p.d2rda2 + p.dfda.dot(cb.dGdx * p.dfda)};
}

// Newton from a few seeds, golden section as a fallback; ties go to the
// smallest action.
template <DiscreteModel M, Critic C>
double numeric_argmax(const M& m, const C& critic, int t, const Vec<M::kStateDim>& x) {
  const bool bounded = m.action_bounded();
  const double lo = bounded ? -1.0 : -std::numeric_limits<double>::infinity();
  const double hi = bounded ? 1.0 : std::numeric_limits<double>::infinity();
  const std::array<double, 3> seeds = bounded ? std::array<double, 3>{-1.0, 0.0, 1.0} : std::array<double, 3>{-10.0, 0.0, 10.0};

  std::vector<double> candidates;
  for (double a : seeds) {
    bool ok = false;
    for (int it = 0; it < 100; ++it) {
      const auto pr = probe_q(m, critic, t, x, a);
      if (!(pr.d2q < 0.0)) break;
      const double na = std::clamp(a - pr.dq / pr.d2q, lo, hi);
      if (std::abs(na - a) <= 1e-13 * std::max(1.0, std::abs(a))) {
        a = na;
        ok = true;
        break;
      }
      a = na;
    }
    if (ok) candidates.push_back(a);
  }
  if (bounded) {
    candidates.push_back(lo);
    candidates.push_back(hi);
  }
  if (candidates.empty()) {
    // golden section over a wide bracket; accepted only if it lands interior
    double a0 = bounded ? lo : -1e3, a1 = bounded ? hi : 1e3;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = a1 - gr * (a1 - a0), d = a0 + gr * (a1 - a0);
    double qc = probe_q(m, critic, t, x, c).q, qd = probe_q(m, critic, t, x, d).q;
    for (int it = 0; it < 200 && (a1 - a0) > 1e-12 * std::max(1.0, std::abs(a0)); ++it) {
      if (qc >= qd) {
        a1 = d, d = c, qd = qc;
        c = a1 - gr * (a1 - a0);
        qc = probe_q(m, critic, t, x, c).q;
      } else {
        a0 = c, c = d, qc = qd;
        d = a0 + gr * (a1 - a0);
        qd = probe_q(m, critic, t, x, d).q;
      }
    }
    const double a = 0.5 * (a0 + a1);
    if (!bounded && (std::abs(a) > 0.999e3 || std::abs(probe_q(m, critic, t, x, a).dq) > 1e-6))
      throw PolicyError("greedy_action: no maximiser of Q found");
    candidates.push_back(a);
  }
  double best = candidates.front();
  double best_q = probe_q(m, critic, t, x, best).q;
  for (double a : candidates) {
    const double q = probe_q(m, critic, t, x, a).q;
    const double tol = 1e-12 * std::max(1.0, std::abs(best_q));
    if (q > best_q + tol || (std::abs(q - best_q) <= tol && a < best)) {
      best = a;
      best_q = q;
    }
  }
  return best;
}

}  // namespace detail

// Fill in Q derivatives, saturation and policy derivatives for action a.
template <DiscreteModel M, Critic C>
PolicyEval<M::kStateDim, C::kWeights> evaluate_policy_at(const M& m, const C& critic, int t, const Vec<M::kStateDim>& x,
                                                         double a) {
  constexpr int N = M::kStateDim;
  constexpr int W = C::kWeights;
  PolicyEval<N, W> pe;
  pe.action = a;
  if (m.action_free(t)) {
    pe.dpi_dx = Vec<N>::Zero();
    pe.dpi_dw = Vec<W>::Zero();
    return pe;
  }
  const auto tr = m.step(t, x, a);
  const auto p = m.partials(t, x, a);
  const auto cb = critic.eval(t + 1, tr.next);
  pe.dQda = p.drda + p.dfda.dot(cb.G);
  pe.d2Qda2 = p.d2rda2 + p.dfda.dot(cb.dGdx * p.dfda);
  pe.saturated = m.action_bounded() && std::abs(a) >= 1.0 && std::abs(pe.dQda) > kSaturationTol;
  if (pe.saturated) {
    pe.dpi_dx = Vec<N>::Zero();
    pe.dpi_dw = Vec<W>::Zero();
  } else if (pe.d2Qda2 < 0.0) {
    const Vec<N> cross = p.d2rdxda + p.dfdx * (cb.dGdx * p.dfda);
    pe.dpi_dx = -cross / pe.d2Qda2;
    pe.dpi_dw = -(cb.dGdw * p.dfda) / pe.d2Qda2;
  }
  return pe;
}

template <DiscreteModel M, Critic C>
double greedy_numeric_action(const M& m, const C& critic, int t, const Vec<M::kStateDim>& x) {
  if (m.action_free(t)) return 0.0;
  return detail::numeric_argmax(m, critic, t, x);
}

template <DiscreteModel M, Critic C>
PolicyEval<M::kStateDim, C::kWeights> greedy_action(const M& m, const C& critic, int t, const Vec<M::kStateDim>& x) {
  double a = 0.0;
  if (!m.action_free(t)) {
    std::optional<double> closed;
    if constexpr (requires { critic.greedy_closed_form(m, t, x[0]); }) closed = critic.greedy_closed_form(m, t, x[0]);
    a = closed ? *closed : detail::numeric_argmax(m, critic, t, x);
  }
  return evaluate_policy_at(m, critic, t, x, a);
}

// Greedy action plus N(0, eps) noise.  Noise is not re-clipped; bounded
// models re-check saturation.  Policy derivatives are dropped for noisy
// actions since the result is no longer the greedy map.
template <DiscreteModel M, Critic C>
PolicyEval<M::kStateDim, C::kWeights> epsilon_greedy(const M& m, const C& critic, int t, const Vec<M::kStateDim>& x,
                                                     double eps, SeededRng& rng) {
  if (!(eps >= 0.0)) throw ArgumentError("epsilon_greedy: eps must be >= 0");
  auto pe = greedy_action(m, critic, t, x);
  if (eps == 0.0 || m.action_free(t)) return pe;
  const double a = pe.action + rnd(eps, rng);
  if (m.action_bounded() && std::abs(a) > 1.0) {
    // out of range for a bounded model: treat as the boundary action
    pe = evaluate_policy_at(m, critic, t, x, std::clamp(a, -1.0, 1.0));
  } else {
    pe.action = a;
    pe.saturated = false;
  }
  pe.greedy = false;
  pe.dpi_dx.reset();
  pe.dpi_dw.reset();
  return pe;
}

template <DiscreteModel M, Critic C>
std::optional<Vec<M::kStateDim>> dpi_dx(const M&, const C&, int, const Vec<M::kStateDim>&,
                                        const PolicyEval<M::kStateDim, C::kWeights>& pe) {
  return pe.dpi_dx;
}

// ---------------------------------------------------------------------------
// continuous time

template <int N, int W>
struct CtPolicyEval {
  double action = 0.5;
  double pre = 0.0;     // pre-activation, a = g(pre)
  double gprime = 0.0;  // g'(pre)
  double log_gprime = 0.0;
  Vec<W> dpre_dw = Vec<W>::Zero();
  Vec<W> dpi_dw = Vec<W>::Zero();
  Vec<N> dpi_dx = Vec<N>::Zero();
};

// Keeps g(pre) strictly inside (0, 1) when it rounds to an end point.
inline double open_unit(double a) {
  return std::clamp(a, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

template <ContinuousModel M, int W>
CtPolicyEval<M::kStateDim, W> ct_policy_from_bundle(const M& m, const CriticBundle<M::kStateDim, W>& cb) {
  CtPolicyEval<M::kStateDim, W> pe;
  const Vec<M::kStateDim> dfda = m.dfbar_da();
  pe.pre = m.drbar_linear_da() + dfda.dot(cb.G);
  pe.action = open_unit(m.squash(pe.pre));
  pe.gprime = m.squash_prime(pe.pre);
  pe.log_gprime = m.log_squash_prime(pe.pre);
  pe.dpre_dw = cb.dGdw * dfda;
  pe.dpi_dw = pe.gprime * pe.dpre_dw;
  pe.dpi_dx = pe.gprime * (cb.dGdx * dfda);
  return pe;
}

template <ContinuousModel M, Critic C>
CtPolicyEval<M::kStateDim, C::kWeights> ct_policy(const M& m, const C& critic, const Vec<M::kStateDim>& x) {
  if (m.is_terminal(x)) throw DomainError("ct_policy: state is terminal");
  return ct_policy_from_bundle(m, critic.eval(0, x));
}

}  // namespace vgl
