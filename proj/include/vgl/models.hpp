#pragma once

// Environments: the discrete-time toy problem family and the continuous-time
// lunar lander.
//
// Matrix convention used everywhere: for a map y = f(x), the Jacobian is
// stored as (i, j) = dy^j / dx^i.

#include "vgl/core.hpp"

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>

namespace vgl {

template <int N>
struct Transition {
  Vec<N> next;
  double reward = 0.0;
};

// First and second partials of f and r at (t, x, a).  f is assumed linear in
// the action for every model here, so no second derivatives of f are kept.
template <int N>
struct ModelPartials {
  Mat<N, N> dfdx = Mat<N, N>::Zero();
  Vec<N> dfda = Vec<N>::Zero();
  Vec<N> drdx = Vec<N>::Zero();
  double drda = 0.0;
  double d2rda2 = 0.0;
  Vec<N> d2rdxda = Vec<N>::Zero();
  Mat<N, N> d2rdx2 = Mat<N, N>::Zero();
};

template <class M>
concept DiscreteModel = requires(const M& m, int t, const Vec<M::kStateDim>& x, double a) {
  { M::kStateDim } -> std::convertible_to<int>;
  { m.is_terminal(t, x) } -> std::same_as<bool>;
  { m.action_free(t) } -> std::same_as<bool>;
  { m.action_bounded() } -> std::same_as<bool>;
  { m.step(t, x, a) } -> std::same_as<Transition<M::kStateDim>>;
  { m.partials(t, x, a) } -> std::same_as<ModelPartials<M::kStateDim>>;
};

// ---------------------------------------------------------------------------
// toy problem

// x_{t+1} = x_t + a_t, r_t = -k a_t^2 for t < n; the last step t = n has no
// action and pays -x_n^2 (+ A cos x_n when terminal_cos = A is set).
class ToyProblem {
 public:
  static constexpr int kStateDim = 1;
  using State = Vec<1>;

  ToyProblem(int n, double k, bool bounded = false, double terminal_cos = 0.0)
      : n_(n), k_(k), bounded_(bounded), terminal_cos_(terminal_cos) {
    if (n < 1) throw ArgumentError("toy problem needs n >= 1");
    if (!(k >= 0.0)) throw ArgumentError("toy problem needs k >= 0");
  }

  int n() const { return n_; }
  double k() const { return k_; }
  double terminal_cos() const { return terminal_cos_; }
  int horizon() const { return n_ + 1; }

  bool is_terminal(int t, const State&) const { return t >= n_ + 1; }
  bool action_free(int t) const { return t == n_; }
  bool action_bounded() const { return bounded_; }

  Transition<1> step(int t, const State& x, double a) const {
    check_time(t);
    if (bounded_ && std::abs(a) > 1.0) throw DomainError("toy step: action outside [-1, 1]");
    Transition<1> tr;
    if (t < n_) {
      tr.next[0] = x[0] + a;
      tr.reward = -k_ * a * a;
    } else {
      tr.next[0] = x[0];
      tr.reward = -x[0] * x[0] + terminal_cos_ * std::cos(x[0]);
    }
    return tr;
  }

  ModelPartials<1> partials(int t, const State& x, double a) const {
    check_time(t);
    ModelPartials<1> p;
    p.dfdx(0, 0) = 1.0;
    if (t < n_) {
      p.dfda[0] = 1.0;
      p.drda = -2.0 * k_ * a;
      p.d2rda2 = -2.0 * k_;
    } else {
      p.drdx[0] = -2.0 * x[0] - terminal_cos_ * std::sin(x[0]);
      p.d2rdx2(0, 0) = -2.0 - terminal_cos_ * std::cos(x[0]);
    }
    return p;
  }

 private:
  void check_time(int t) const {
    if (t < 0 || t > n_) throw OutOfEpisodeError("toy step: t=" + std::to_string(t) + " outside [0, n]");
  }

  int n_;
  double k_;
  bool bounded_;
  double terminal_cos_;
};

inline Transition<1> toy_step(const ToyProblem& m, int t, double x, double a) { return m.step(t, Vec<1>(x), a); }

inline double toy_optimal_action(const ToyProblem& m, int t, double x) {
  if (t < 0 || t > m.n()) throw OutOfEpisodeError("toy_optimal_action: t outside [0, n]");
  if (t == m.n()) return 0.0;
  return -x / (m.n() - t + m.k());
}

inline double toy_optimal_value(const ToyProblem& m, int t, double x) {
  if (t < 0 || t > m.n() + 1) throw OutOfEpisodeError("toy_optimal_value: t outside [0, n+1]");
  if (t == m.n() + 1) return 0.0;
  const double denom = m.n() - t + m.k();
  if (denom == 0.0) return -x * x;  // t = n with k = 0: only the final charge remains
  return -m.k() * x * x / denom;
}

// ---------------------------------------------------------------------------
// lunar lander (continuous time)

template <class M>
concept ContinuousModel = requires(const M& m, const Vec<M::kStateDim>& x, double a, double dt) {
  { M::kStateDim } -> std::convertible_to<int>;
  { m.fbar(x, a) } -> std::same_as<Vec<M::kStateDim>>;
  { m.dfbar_dx(x) } -> std::same_as<Mat<M::kStateDim, M::kStateDim>>;
  { m.dfbar_da() } -> std::same_as<Vec<M::kStateDim>>;
  { m.drbar_dx(x) } -> std::same_as<Vec<M::kStateDim>>;
  { m.is_terminal(x) } -> std::same_as<bool>;
  { m.impulse(x) } -> std::same_as<double>;
  { m.fraction_to_terminal(x, a, dt) } -> std::same_as<std::optional<double>>;
  { m.boundary_gradient_pre(x, a) } -> std::same_as<Vec<M::kStateDim>>;
  { m.squash(a) } -> std::same_as<double>;
  { m.squash_prime(a) } -> std::same_as<double>;
  { m.log_squash_prime(a) } -> std::same_as<double>;
  { m.rbar_pre(a) } -> std::same_as<double>;
  { m.drbar_da_pre(a) } -> std::same_as<double>;
  { m.drbar_linear_da() } -> std::same_as<double>;
};

// State (h, v, u): height, upward velocity, fuel.  Thrust a in (0, 1).
class LunarLander {
 public:
  static constexpr int kStateDim = 3;
  using State = Vec<3>;

  explicit LunarLander(double c = 0.01, double kg = 0.2, double kf = 2.0) : c_(c), kg_(kg), kf_(kf) {
    if (!(c > 0.0)) throw ArgumentError("lander: sharpness c must be > 0");
  }

  double c() const { return c_; }
  double kg() const { return kg_; }
  double kf() const { return kf_; }

  // squashing function g and friends
  // (tanh(z/c) + 1)/2 written as a logistic so tiny outputs do not round to 0
  double squash(double z) const { return 1.0 / (1.0 + std::exp(-2.0 * z / c_)); }
  // exp form: 1 - tanh^2 rounds to 0 long before the true value underflows
  double squash_prime(double z) const {
    const double e = std::exp(-2.0 * std::abs(z) / c_);
    return 2.0 * e / (c_ * (1.0 + e) * (1.0 + e));
  }
  double log_squash_prime(double z) const {
    const double y = 2.0 * std::abs(z) / c_;
    return std::log(2.0 / c_) - y - 2.0 * std::log1p(std::exp(-y));
  }
  double squash_inverse(double y) const {
    if (!(y > 0.0 && y < 1.0)) throw DomainError("squash_inverse: argument outside (0, 1)");
    return c_ * std::atanh(2.0 * y - 1.0);
  }

  State fbar(const State& x, double a) const { return State(x[1], a - kg_, -a); }
  Mat<3, 3> dfbar_dx(const State&) const {
    Mat<3, 3> j = Mat<3, 3>::Zero();
    j(1, 0) = 1.0;  // dh/dt = v
    return j;
  }
  Vec<3> dfbar_da() const { return Vec<3>(0.0, 1.0, -1.0); }

  // Reward rate split into the linear fuel term and the convex action cost.
  double rbar_linear(double a) const { return -kf_ * a; }
  double drbar_linear_da() const { return -kf_; }
  Vec<3> drbar_dx(const State&) const { return Vec<3>::Zero(); }

  struct ActionCost {
    double value;
    double derivative;
  };

  // -integral_{1/2}^{a} g^{-1}(y) dy in closed form.
  ActionCost action_cost(double a) const {
    if (!(a > 0.0 && a < 1.0)) throw DomainError("action_cost: action outside (0, 1)");
    const double value = c_ * (a * std::atanh(1.0 - 2.0 * a) - 0.5 * std::log1p(-a) - 0.5 * std::log(2.0));
    return {value, -c_ * std::atanh(2.0 * a - 1.0)};
  }

  // Same cost expressed through the pre-activation z = g^{-1}(a); stays finite
  // when g(z) rounds to 0 or 1.
  double action_cost_from_preactivation(double z) const {
    const double y = z / c_;
    const double ay = std::abs(y);
    const double log_cosh = ay + std::log1p(std::exp(-2.0 * ay)) - std::log(2.0);
    return 0.5 * (c_ * log_cosh - z * std::tanh(y));
  }

  double rbar(const State&, double a) const { return rbar_linear(a) + action_cost(a).value; }

  // Reward rate and its action derivative when a = g(z).
  double rbar_pre(double z) const { return rbar_linear(squash(z)) + action_cost_from_preactivation(z); }
  double drbar_da_pre(double z) const { return -kf_ - z; }

  bool is_terminal(const State& x) const { return x[0] <= 0.0 || x[2] <= 0.0; }

  // Removes round-off left by the clipped final step.
  State snap_to_surface(State x) const {
    if (x[0] < 1e-12) x[0] = 0.0;
    if (x[2] < 1e-12) x[2] = 0.0;
    return x;
  }

  double impulse(const State& x) const { return -x[1] * x[1] - 2.0 * kg_ * x[0]; }
  Vec<3> impulse_gradient(const State& x) const { return Vec<3>(-2.0 * kg_, -2.0 * x[1], 0.0); }

  // If an Euler step of length dt from x crosses the terminal surface, the
  // fraction tau in (0, dt] at which it does (linear interpolation).
  std::optional<double> fraction_to_terminal(const State& x, double a, double dt) const {
    const State nx = x + dt * fbar(x, a);
    double tau = std::numeric_limits<double>::infinity();
    if (nx[0] <= 0.0 && x[1] < 0.0) tau = std::min(tau, -x[0] / x[1]);
    if (nx[2] <= 0.0 && a > 0.0) tau = std::min(tau, x[2] / a);
    if (!std::isfinite(tau)) return std::nullopt;
    return std::clamp(tau, 0.0, dt);
  }

  // Limit of dR/dx as the state approaches the terminal surface with
  // final action a.  Which surface is hit is read off the state.
  Vec<3> boundary_gradient(const State& x, double a) const { return boundary_gradient_impl(x, a, action_cost(a).value); }

  Vec<3> boundary_gradient_pre(const State& x, double z) const {
    return boundary_gradient_impl(x, squash(z), action_cost_from_preactivation(z));
  }

 private:
  Vec<3> boundary_gradient_impl(const State& x, double a, double rc) const {
    const double v = x[1];
    if (x[2] <= 0.0 && x[0] > 0.0) {
      if (!(a > 0.0)) throw DomainError("boundary_gradient: zero thrust at fuel exhaustion");
      return Vec<3>(-2.0 * kg_, -2.0 * v, -kf_ - 2.0 * v + rc / a);
    }
    if (v == 0.0) throw DomainError("boundary_gradient: zero vertical velocity at touchdown");
    return Vec<3>((kf_ * a - rc) / v + 2.0 * (a - kg_), -2.0 * v, 0.0);
  }

  double c_;
  double kg_;
  double kf_;
};

}  // namespace vgl
