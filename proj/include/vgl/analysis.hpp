#pragma once

// Independent checks: two-step stability matrices, the residual-gradient
// counterexample landscape, the Pontryagin lander solution and the local
// extremality checker.

#include "vgl/core.hpp"
#include "vgl/models.hpp"
#include "vgl/targets.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

namespace vgl {

// ---------------------------------------------------------------------------
// stability of the two-step toy system

using Mat2 = Mat<2, 2>;

struct StabilitySystem {
  double lambda = 0.0;
  double c1 = 0.0, c2 = 0.0, k = 0.0;
  double b = 0.0;  // dpi/dx at t = 1
  Mat2 D = Mat2::Zero();
  Mat2 E = Mat2::Zero();
  Mat2 F = Mat2::Identity();
  Mat2 M_omega = Mat2::Zero();  // F^T D E D F
  Mat2 M_vgl = Mat2::Zero();    // F^T E D F
};

inline Mat2 stability_D(double c1, double c2, double k) {
  Mat2 D = Mat2::Zero();
  D(0, 0) = 1.0 / (2.0 * (k + c1));
  D(1, 1) = 1.0 / (2.0 * (k + c2));
  return D;
}

inline StabilitySystem build_stability(double lambda, double c1, double c2, double k, const Mat2& F) {
  if (!(c1 > 0.0 && c2 > 0.0)) throw ArgumentError("build_stability: c1, c2 must be > 0");
  if (!(k >= 0.0)) throw ArgumentError("build_stability: k must be >= 0");
  StabilitySystem s;
  s.lambda = lambda;
  s.c1 = c1;
  s.c2 = c2;
  s.k = k;
  s.F = F;
  const double b = -c2 / (c2 + k);
  s.b = b;
  s.D = stability_D(c1, c2, k);
  s.E << k + lambda * (1 + b) * (b * (k + 1) + 1) - b * k, lambda * (k + 1) * (b + 1) - k,  //
      1 + b * (k + 1), k + 1;
  s.E *= -2.0;
  s.M_omega = F.transpose() * s.D * s.E * s.D * F;
  s.M_vgl = F.transpose() * s.E * s.D * F;
  return s;
}

inline bool is_stable(const Mat2& M) { return M.trace() < 0.0 && M.determinant() > 0.0; }

inline std::pair<std::complex<double>, std::complex<double>> eigenvalues2(const Mat2& M) {
  const double tr = M.trace(), det = M.determinant();
  const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr / 4.0 - det, 0.0));
  return {tr / 2.0 + disc, tr / 2.0 - disc};
}

inline double leading_real_part(const Mat2& M) {
  const auto [l1, l2] = eigenvalues2(M);
  return std::max(l1.real(), l2.real());
}

struct LinearSimResult {
  bool diverged = false;
  bool converged = false;
  long steps = 0;
  std::vector<double> norm_history;  // every `record_every` steps
};

inline LinearSimResult simulate_linear(const Mat2& M, const Vec<2>& p0, double alpha = 1e-3, long steps = 10'000'000,
                                       long record_every = 1000) {
  LinearSimResult res;
  Vec<2> p = p0;
  const Mat2 step = Mat2::Identity() + alpha * M;
  res.norm_history.push_back(p.norm());
  for (long i = 1; i <= steps; ++i) {
    p = step * p;
    const double n = p.norm();
    if (i % record_every == 0) res.norm_history.push_back(n);
    if (n > 1e12) {
      res.diverged = true;
      res.steps = i;
      break;
    }
    if (n < 1e-12) {
      res.converged = true;
      res.steps = i;
      break;
    }
    res.steps = i;
  }
  return res;
}

enum class StabilityPreset { kA, kB };

// Parameter sets that separate the algorithms; F is built from the printed
// mixing matrix premultiplied by D^{-1}.
struct PresetParams {
  double lambda, c1, c2, k;
  Mat2 F;
};

inline PresetParams stability_preset(StabilityPreset p) {
  PresetParams pp{};
  Mat2 mix;
  if (p == StabilityPreset::kA) {
    pp.lambda = 0.0, pp.c1 = 0.01, pp.c2 = 0.01, pp.k = 0.01;
    mix << 10, 1, -1, -1;
  } else {
    pp.lambda = 1.0, pp.c1 = 0.99, pp.c2 = 0.01, pp.k = 0.01;
    mix << -1, -1, 10, 1;
  }
  pp.F = stability_D(pp.c1, pp.c2, pp.k).inverse() * mix;
  return pp;
}

struct StabilityRow {
  std::string algorithm;
  double lambda;
  PresetParams params;
  bool stable;
  double leading_real;
};

// VGL and VGL-Omega at lambda in {0, 1} for one preset's (c1, c2, k, F).
inline std::vector<StabilityRow> stability_report(StabilityPreset preset) {
  const PresetParams pp = stability_preset(preset);
  std::vector<StabilityRow> rows;
  for (double lambda : {0.0, 1.0}) {
    const StabilitySystem s = build_stability(lambda, pp.c1, pp.c2, pp.k, pp.F);
    rows.push_back({"VGL", lambda, pp, is_stable(s.M_vgl), leading_real_part(s.M_vgl)});
    rows.push_back({"VGLOmega", lambda, pp, is_stable(s.M_omega), leading_real_part(s.M_omega)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// residual-gradient counterexample: one step, k = 0, final reward
// -x^2 + 4 cos x, critic V_1 = -x^2 + w x, greedy x_1 = w / 2.

struct RgLandscape {
  static double x1(double w) { return w / 2.0; }
  static double residual(double w) {  // G'_1 - G_1, with G_1 = -2 x_1 + w = 0
    return -2.0 * x1(w) - 4.0 * std::sin(x1(w)) - (-2.0 * x1(w) + w);
  }
  static double E(double w) { return 0.5 * residual(w) * residual(w); }
  static double dE(double w) { return (w + 4.0 * std::sin(w / 2.0)) * (1.0 + 2.0 * std::cos(w / 2.0)); }
  static double R(double w) { return -w * w / 4.0 + 4.0 * std::cos(w / 2.0); }
  static double dR(double w) { return -w / 2.0 - 2.0 * std::sin(w / 2.0); }
};

struct RgStationary {
  std::vector<double> E_stationary;
  std::vector<double> R_stationary;
};

namespace detail {

template <class Fn>
std::vector<double> sign_change_roots(Fn&& f, double lo, double hi, int grid = 60000) {
  std::vector<double> roots;
  const double h = (hi - lo) / grid;
  double a = lo, fa = f(a);
  for (int i = 1; i <= grid; ++i) {
    const double b = lo + i * h;
    const double fb = f(b);
    if (fa == 0.0) {
      roots.push_back(a);
    } else if (fa * fb < 0.0) {
      double l = a, r = b, fl = fa;
      for (int it = 0; it < 200 && r - l > 1e-15 * std::max(1.0, std::abs(l)); ++it) {
        const double mid = 0.5 * (l + r);
        const double fm = f(mid);
        if (fm == 0.0) {
          l = r = mid;
          break;
        }
        if (fl * fm < 0.0) {
          r = mid;
        } else {
          l = mid;
          fl = fm;
        }
      }
      roots.push_back(0.5 * (l + r));
    }
    a = b;
    fa = fb;
  }
  return roots;
}

}  // namespace detail

inline RgStationary rg_landscape(double lo = -30.0, double hi = 30.0) {
  RgStationary s;
  // the grid is offset so that w = 0 falls strictly inside a cell
  s.E_stationary = detail::sign_change_roots(RgLandscape::dE, lo, hi, 60001);
  s.R_stationary = detail::sign_change_roots(RgLandscape::dR, lo, hi, 60001);
  return s;
}

// ---------------------------------------------------------------------------
// Pontryagin solution for the lander

struct PontryaginSolution {
  double vF = 0.0;
  double duration = 0.0;
  std::vector<double> time;            // forward time, 0 .. duration
  std::vector<Vec<3>> states;          // (h, v, u)
  std::vector<double> actions;
  std::vector<double> pre;             // pre-activations, actions = g(pre)
  std::vector<Vec<3>> adjoint;         // dR/dx along the path
  double integral_reward = 0.0;
  double impulse = 0.0;
  double R = 0.0;
  double dt = 0.0;
};

namespace detail {

struct BackwardLander {
  const LunarLander& m;
  double vF, aF, p0, pre0;

  BackwardLander(const LunarLander& model, double v_final) : m(model), vF(v_final) {
    pre0 = model.drbar_linear_da() - 2.0 * v_final;
    aF = model.squash(pre0);
    p0 = model.boundary_gradient_pre(Vec<3>(0.0, v_final, 1.0), pre0)[0];
  }
  double pre(double tau) const { return pre0 + tau * p0; }
  double action(double tau) const { return open_unit(m.squash(pre(tau))); }

  // y = (h, v, fuel used, reward) integrated in time-to-go
  Vec<4> deriv(double tau, const Vec<4>& y) const {
    const double z = pre(tau);
    const double a = open_unit(m.squash(z));
    return Vec<4>(-y[1], -(a - m.kg()), a, m.rbar_pre(z));
  }
  Vec<4> rk4(double tau, const Vec<4>& y, double h) const {
    const Vec<4> k1 = deriv(tau, y);
    const Vec<4> k2 = deriv(tau + h / 2, y + h / 2 * k1);
    const Vec<4> k3 = deriv(tau + h / 2, y + h / 2 * k2);
    const Vec<4> k4 = deriv(tau + h, y + h * k3);
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
};

struct ShootResult {
  double S;
  bool reached;
  double tau_end;
};

// Integrates backwards until the height reaches h0 or the apex is passed.
inline ShootResult shoot(const BackwardLander& bl, double h0, double v0, double dt, std::vector<Vec<4>>* path = nullptr,
                         std::vector<double>* taus = nullptr) {
  Vec<4> y(0.0, bl.vF, 0.0, 0.0);
  double tau = 0.0;
  if (path) path->push_back(y), taus->push_back(tau);
  const double tau_max = 1e4;
  while (tau < tau_max) {
    const Vec<4> ny = bl.rk4(tau, y, dt);
    if (ny[0] >= h0) {
      // refine the crossing by bisection on the step fraction
      double lo = 0.0, hi = dt;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (bl.rk4(tau, y, mid)[0] >= h0) hi = mid; else lo = mid;
      }
      const Vec<4> fy = bl.rk4(tau, y, hi);
      if (path) path->push_back(fy), taus->push_back(tau + hi);
      return {fy[1] - v0, true, tau + hi};
    }
    if (ny[1] >= 0.0) {  // apex below h0
      if (path) path->push_back(ny), taus->push_back(tau + dt);
      return {-v0 + (h0 - ny[0]), false, tau + dt};
    }
    y = ny;
    tau += dt;
    if (path) path->push_back(y), taus->push_back(tau);
  }
  return {-v0 + h0, false, tau};
}

}  // namespace detail

inline PontryaginSolution pontryagin_lander(const LunarLander& m, const Vec<3>& start, double dt = 1e-3) {
  const double h0 = start[0], v0 = start[1], u0 = start[2];
  if (!(dt > 0.0)) throw ArgumentError("pontryagin_lander: dt must be > 0");
  if (v0 > 0.0) throw ArgumentError("pontryagin_lander: only non-positive start velocities are supported");
  if (!(u0 > 0.0)) throw ArgumentError("pontryagin_lander: start fuel must be > 0");
  PontryaginSolution sol;
  sol.dt = dt;
  if (h0 <= 0.0) {
    sol.vF = v0;
    sol.states.push_back(start);
    sol.time.push_back(0.0);
    sol.impulse = m.impulse(Vec<3>(0.0, v0, u0));
    sol.R = sol.impulse;
    return sol;
  }
  double lo = -20.0, hi = -1e-4;  // S(lo) < 0 < S(hi)
  const double s_lo = detail::shoot(detail::BackwardLander(m, lo), h0, v0, dt).S;
  const double s_hi = detail::shoot(detail::BackwardLander(m, hi), h0, v0, dt).S;
  if (!(s_lo < 0.0 && s_hi > 0.0)) throw OracleInfeasibleError("pontryagin_lander: shooting bracket not found");
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = detail::shoot(detail::BackwardLander(m, mid), h0, v0, dt).S;
    if (s < 0.0) lo = mid; else hi = mid;
  }
  // lo always reaches h0 (S <= 0); with v0 = 0 the start is the apex and the
  // midpoint can fall just short of it
  sol.vF = lo;
  const detail::BackwardLander bl(m, sol.vF);
  std::vector<Vec<4>> path;
  std::vector<double> taus;
  const auto res = detail::shoot(bl, h0, v0, dt, &path, &taus);
  if (!res.reached) throw OracleInfeasibleError("pontryagin_lander: converged shot misses the start height");
  sol.duration = res.tau_end;
  const double fuel_used = path.back()[2];
  if (fuel_used >= u0) throw OracleInfeasibleError("pontryagin_lander: insufficient fuel");
  const int K = static_cast<int>(path.size());
  for (int i = K - 1; i >= 0; --i) {
    const double tau = taus[i];
    const Vec<4>& y = path[i];
    sol.time.push_back(res.tau_end - tau);
    sol.states.emplace_back(y[0], y[1], u0 - fuel_used + y[2]);
    sol.actions.push_back(bl.action(tau));
    sol.pre.push_back(bl.pre(tau));
    // adjoint: p^0 constant, p^1 = -2 v_F + tau p^0, p^2 = 0 (fuel not binding)
    sol.adjoint.emplace_back(bl.p0, -2.0 * sol.vF + tau * bl.p0, 0.0);
  }
  sol.integral_reward = path.back()[3];
  sol.impulse = m.impulse(Vec<3>(0.0, sol.vF, u0 - fuel_used));
  sol.R = sol.integral_reward + sol.impulse;
  return sol;
}

// ---------------------------------------------------------------------------
// local extremality of a discrete trajectory

struct LetResidual {
  int t;
  bool saturated;
  double residual;  // dR/da_t with the other actions held fixed
};

template <DiscreteModel M, int N, int W>
std::vector<LetResidual> let_check(const Trajectory<N, W>& tr, const M& m) {
  const Vec<N> x0 = tr.state_at(0);
  std::vector<double> actions = tr.actions();
  std::vector<LetResidual> out;
  for (int t = 0; t < tr.F(); ++t) {
    if (m.action_free(t)) continue;
    const double a = actions[t];
    auto R = [&](double at) {
      std::vector<double> acts = actions;
      acts[t] = at;
      return replay_reward(m, x0, acts);
    };
    double d;
    if (m.action_bounded() && std::abs(a) >= 1.0) {  // one-sided, into the feasible set
      const double h = fd_step(a);
      const double s = a > 0 ? 1.0 : -1.0;
      d = (R(a) - R(a - s * h)) / h;
    } else {
      d = fd_derivative(R, a);
    }
    out.push_back({t, tr.steps[t].saturated, d});
  }
  return out;
}

inline double max_unsaturated_residual(const std::vector<LetResidual>& rs) {
  double worst = 0.0;
  for (const auto& r : rs)
    if (!r.saturated) worst = std::max(worst, std::abs(r.residual));
  return worst;
}

// ---------------------------------------------------------------------------
// exact value of a linear policy a = z0 + z1 x on the toy problem

// V_t(x) = q_t x^2 + l_t x + k_t for t = 0..n; zero afterwards.
struct QuadraticValueCritic {
  static constexpr int kStateDim = 1;
  static constexpr int kWeights = 1;
  std::vector<double> q, l, k;

  CriticBundle<1, 1> eval(int t, const Vec<1>& x) const {
    CriticBundle<1, 1> b;
    if (t < 0 || t >= static_cast<int>(q.size())) return b;
    b.V = q[t] * x[0] * x[0] + l[t] * x[0] + k[t];
    b.G[0] = 2.0 * q[t] * x[0] + l[t];
    b.dGdx(0, 0) = 2.0 * q[t];
    return b;
  }
  Vec<1> weights() const { return Vec<1>::Zero(); }
  void set_weights(const Vec<1>&) {}
};

inline QuadraticValueCritic linear_policy_value(const ToyProblem& m, const Vec<2>& z) {
  if (m.terminal_cos() != 0.0) throw ArgumentError("linear_policy_value: quadratic final reward only");
  const int n = m.n();
  QuadraticValueCritic c;
  c.q.assign(n + 2, 0.0);
  c.l.assign(n + 2, 0.0);
  c.k.assign(n + 2, 0.0);
  c.q[n] = -1.0;
  const double s = 1.0 + z[1], o = z[0];  // x' = o + s x
  for (int t = n - 1; t >= 0; --t) {
    c.q[t] = -m.k() * z[1] * z[1] + c.q[t + 1] * s * s;
    c.l[t] = -2.0 * m.k() * z[0] * z[1] + 2.0 * c.q[t + 1] * s * o + c.l[t + 1] * s;
    c.k[t] = -m.k() * z[0] * z[0] + c.q[t + 1] * o * o + c.l[t + 1] * o + c.k[t + 1];
  }
  return c;
}

}  // namespace vgl
