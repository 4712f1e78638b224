#pragma once

// Derivative-oracle suite: every analytic derivative in the library against
// central differences on random instances.

#include "vgl/critics.hpp"
#include "vgl/models.hpp"
#include "vgl/policy.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vgl {

struct GradcheckItem {
  std::string name;
  int instances = 0;
  int failures = 0;
  double worst = 0.0;  // largest relative error seen
  std::string note;    // first failure, if any

  bool passed() const { return instances > 0 && failures == 0; }
};

struct GradcheckOptions {
  std::uint64_t seed = 1;
  int instances = 100;
  double tol = 1e-4;
};

namespace detail {

class GradcheckRun {
 public:
  explicit GradcheckRun(const GradcheckOptions& opt) : opt_(opt), rng_(opt.seed) {}

  // `body(rng)` returns the relative error of one instance.
  void item(const std::string& name, const std::function<double(SeededRng&)>& body) {
    GradcheckItem it;
    it.name = name;
    SeededRng rng = rng_.fork(items_.size());
    for (int i = 0; i < opt_.instances; ++i) {
      double err;
      try {
        err = body(rng);
      } catch (const Error& e) {
        err = std::numeric_limits<double>::infinity();
        if (it.note.empty()) it.note = "instance " + std::to_string(i) + ": " + e.what();
      }
      ++it.instances;
      if (!(err <= opt_.tol)) {
        ++it.failures;
        if (it.note.empty()) it.note = "instance " + std::to_string(i) + ": rel err " + std::to_string(err);
      }
      if (!(err <= it.worst)) it.worst = err;
    }
    items_.push_back(std::move(it));
  }

  std::vector<GradcheckItem> take() { return std::move(items_); }

 private:
  GradcheckOptions opt_;
  SeededRng rng_;
  std::vector<GradcheckItem> items_;
};

inline Vec<1> v1(double x) { return Vec<1>(x); }

template <Critic C>
double bundle_error(const C& critic, int t, const Vec<C::kStateDim>& x) {
  constexpr int N = C::kStateDim;
  constexpr int W = C::kWeights;
  const auto b = critic.eval(t, x);
  const Vec<W> w = critic.weights();
  auto V_x = [&](const Vec<N>& y) { return critic.eval(t, y).V; };
  auto V_w = [&](const Vec<W>& v) { return critic_value_with(critic, v, t, x); };
  auto G_x = [&](const Vec<N>& y) { return DynVec(critic.eval(t, y).G); };
  auto G_w = [&](const Vec<W>& v) {
    C c = critic;
    c.set_weights(v);
    return DynVec(c.eval(t, x).G);
  };
  double e = relative_error(b.G, fd_gradient(V_x, x));
  e = std::max(e, relative_error(b.dVdw, fd_gradient(V_w, w)));
  e = std::max(e, relative_error(DynMat(b.dGdw), fd_jacobian(G_w, w)));
  e = std::max(e, relative_error(DynMat(b.dGdx), fd_jacobian(G_x, x)));
  return e;
}

template <int W>
Vec<W> uniform_vec(SeededRng& rng, double lo, double hi) {
  Vec<W> v;
  for (int i = 0; i < W; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

inline Vec<3> lander_state(SeededRng& rng) {
  return Vec<3>(rng.uniform(1.0, 150.0), rng.uniform(-20.0, 20.0), rng.uniform(1.0, 80.0));
}

// Greedy policy derivatives of a toy critic against fd of the greedy action.
template <Critic C>
double greedy_policy_error(const ToyProblem& m, const C& critic, int t, double x) {
  const auto pe = greedy_action(m, critic, t, Vec<1>(x));
  if (!pe.dpi_dx || !pe.dpi_dw) throw PolicyError("greedy policy has no derivatives here");
  auto a_x = [&](const Vec<1>& y) { return greedy_action(m, critic, t, y).action; };
  auto a_w = [&](const Vec<C::kWeights>& v) {
    C c = critic;
    c.set_weights(v);
    return greedy_action(m, c, t, Vec<1>(x)).action;
  };
  return std::max(relative_error(*pe.dpi_dx, fd_gradient(a_x, v1(x))),
                  relative_error(*pe.dpi_dw, fd_gradient(a_w, critic.weights())));
}

}  // namespace detail

inline std::vector<GradcheckItem> run_gradcheck(const GradcheckOptions& opt = {}) {
  detail::GradcheckRun run(opt);
  using detail::v1;

  // ---- model partials
  run.item("toy model partials", [](SeededRng& rng) {
    const int n = 1 + static_cast<int>(rng.uniform(0.0, 2.999));
    const ToyProblem m(n, rng.uniform(0.0, 3.0), false, rng.uniform(-2.0, 2.0));
    const int t = static_cast<int>(rng.uniform(0.0, n + 0.999));
    const double x = rng.uniform(-5.0, 5.0);
    const double a = m.action_free(t) ? 0.0 : rng.uniform(-5.0, 5.0);
    const auto p = m.partials(t, v1(x), a);
    auto f_x = [&](const Vec<1>& y) { return m.step(t, y, a).next[0]; };
    auto r_x = [&](const Vec<1>& y) { return m.step(t, y, a).reward; };
    double e = relative_error(p.dfdx(0, 0), fd_gradient(f_x, v1(x))[0]);
    e = std::max(e, relative_error(p.drdx[0], fd_gradient(r_x, v1(x))[0]));
    auto drdx_x = [&](const Vec<1>& y) { return m.partials(t, y, a).drdx[0]; };
    e = std::max(e, relative_error(p.d2rdx2(0, 0), fd_gradient(drdx_x, v1(x))[0]));
    if (!m.action_free(t)) {
      e = std::max(e, relative_error(p.dfda[0], fd_derivative([&](double b) { return m.step(t, v1(x), b).next[0]; }, a)));
      e = std::max(e, relative_error(p.drda, fd_derivative([&](double b) { return m.step(t, v1(x), b).reward; }, a)));
      e = std::max(e, relative_error(p.d2rda2, fd_derivative([&](double b) { return m.partials(t, v1(x), b).drda; }, a)));
    }
    return e;
  });

  run.item("lander dynamics partials", [](SeededRng& rng) {
    const LunarLander m(rng.uniform(0.05, 2.0));
    const Vec<3> x = detail::lander_state(rng);
    const double a = rng.uniform(0.01, 0.99);
    auto f_x = [&](const Vec<3>& y) { return DynVec(m.fbar(y, a)); };
    double e = relative_error(DynMat(m.dfbar_dx(x)), fd_jacobian(f_x, x));
    const Vec<1> av(a);
    auto f_a = [&](const Vec<1>& b) { return DynVec(m.fbar(x, b[0])); };
    e = std::max(e, relative_error(DynVec(m.dfbar_da()), DynVec(fd_jacobian(f_a, av).row(0).transpose())));
    auto ic = [&](const Vec<3>& y) { return m.impulse(y); };
    e = std::max(e, relative_error(m.impulse_gradient(x), fd_gradient(ic, x)));
    return e;
  });

  run.item("lander squash and action cost", [](SeededRng& rng) {
    const double c = rng.uniform(0.05, 2.0);
    const LunarLander m(c);
    const double z = rng.uniform(-3.0, 3.0) * c;
    const double a = rng.uniform(0.01, 0.99);
    auto g = [&](double s) { return m.squash(s); };
    double e = relative_error(m.squash_prime(z), fd_derivative(g, z, 1e-7));
    e = std::max(e, relative_error(std::log(m.squash_prime(z)), m.log_squash_prime(z), 1.0));
    auto cost = [&](double b) { return m.action_cost(b).value; };
    e = std::max(e, relative_error(m.action_cost(a).derivative, fd_derivative(cost, a, 1e-7)));
    // reward rate through the pre-activation: d rbar / dz = (d rbar / da) g'(z)
    auto rz = [&](double s) { return m.rbar_pre(s); };
    e = std::max(e, relative_error(m.drbar_da_pre(z) * m.squash_prime(z), fd_derivative(rz, z, 1e-7)));
    return e;
  });

  // ---- critic bundles
  run.item("critic bundle exp1", [](SeededRng& rng) {
    const auto c = exp1_critic(rng.uniform(-2.0, 2.0), detail::uniform_vec<2>(rng, -10.0, 10.0));
    return detail::bundle_error(c, 1, v1(rng.uniform(-10.0, 10.0)));
  });
  run.item("critic bundle exp2", [](SeededRng& rng) {
    const auto c = exp2_critic(rng.uniform(0.1, 4.0), rng.uniform(0.1, 4.0), detail::uniform_vec<4>(rng, -10.0, 10.0));
    const int t = rng.uniform(0.0, 1.0) < 0.5 ? 1 : 2;
    return detail::bundle_error(c, t, v1(rng.uniform(-10.0, 10.0)));
  });
  run.item("critic bundle exp4", [](SeededRng& rng) {
    const auto c = exp4_critic(rng.uniform(0.1, 4.0), rng.uniform(0.1, 4.0), rng.uniform(-10.0, 10.0),
                               detail::uniform_vec<1>(rng, -10.0, 10.0));
    const int t = rng.uniform(0.0, 1.0) < 0.5 ? 1 : 2;
    return detail::bundle_error(c, t, v1(rng.uniform(-10.0, 10.0)));
  });
  run.item("critic bundle reparametrised exp2", [](SeededRng& rng) {
    Mat<2, 2> F;
    F << rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10);
    const auto c = exp2_reparam_critic(rng.uniform(0.01, 2.0), rng.uniform(0.01, 2.0), F, detail::uniform_vec<4>(rng, -5.0, 5.0));
    const int t = rng.uniform(0.0, 1.0) < 0.5 ? 1 : 2;
    return detail::bundle_error(c, t, v1(rng.uniform(-10.0, 10.0)));
  });
  run.item("critic bundle mlp (sigmoid input)", [](SeededRng& rng) {
    const auto c = MlpCritic::random(rng, false);
    return detail::bundle_error(c, 0, detail::lander_state(rng));
  });
  run.item("critic bundle mlp (identity input)", [](SeededRng& rng) {
    const auto c = MlpCritic::random(rng, true);
    return detail::bundle_error(c, 0, detail::lander_state(rng));
  });

  // ---- greedy policy derivatives
  run.item("dpi/dx and dpi/dw exp2", [](SeededRng& rng) {
    const ToyProblem m(2, rng.uniform(0.1, 3.0));
    const auto c = exp2_critic(rng.uniform(0.1, 4.0), rng.uniform(0.1, 4.0), detail::uniform_vec<4>(rng, -10.0, 10.0));
    const int t = rng.uniform(0.0, 1.0) < 0.5 ? 0 : 1;
    return detail::greedy_policy_error(m, c, t, rng.uniform(-10.0, 10.0));
  });
  run.item("dpi/dx and dpi/dw exp4", [](SeededRng& rng) {
    const ToyProblem m(2, rng.uniform(0.5, 3.0));
    const auto c = exp4_critic(rng.uniform(0.1, 4.0), rng.uniform(0.1, 4.0), rng.uniform(-10.0, 10.0),
                               detail::uniform_vec<1>(rng, -10.0, 10.0));
    const int t = rng.uniform(0.0, 1.0) < 0.5 ? 0 : 1;
    return detail::greedy_policy_error(m, c, t, rng.uniform(-10.0, 10.0));
  });

  // ---- continuous-time policy a = g(-kf + G.df/da)
  run.item("ct policy dpi/dx and dpi/dw", [](SeededRng& rng) {
    const LunarLander m(rng.uniform(0.5, 2.0));
    const auto c = MlpCritic::random(rng, rng.uniform(0.0, 1.0) < 0.5);
    const Vec<3> x = detail::lander_state(rng);
    const auto pe = ct_policy(m, c, x);
    auto a_x = [&](const Vec<3>& y) { return ct_policy(m, c, y).action; };
    auto a_w = [&](const MlpCritic::Weights& v) {
      MlpCritic cc = c;
      cc.set_weights(v);
      return ct_policy(m, cc, x).action;
    };
    return std::max(relative_error(pe.dpi_dx, fd_gradient(a_x, x), 1e-6),
                    relative_error(pe.dpi_dw, fd_gradient(a_w, c.weights()), 1e-6));
  });

  // ---- greedy first-order condition: (dr/da)_t = -(df/da)_t G_{t+1} at
  // unsaturated steps; checked against fd of Q in the action
  run.item("greedy stationarity identity", [](SeededRng& rng) {
    const ToyProblem m(2, rng.uniform(0.1, 3.0));
    const auto c = exp2_critic(rng.uniform(0.1, 4.0), rng.uniform(0.1, 4.0), detail::uniform_vec<4>(rng, -10.0, 10.0));
    const int t = rng.uniform(0.0, 1.0) < 0.5 ? 0 : 1;
    const Vec<1> x(rng.uniform(-10.0, 10.0));
    const double a = greedy_action(m, c, t, x).action;
    const auto p = m.partials(t, x, a);
    const auto nb = c.eval(t + 1, m.step(t, x, a).next);
    const double scale = std::max({1.0, std::abs(p.drda), std::abs(p.dfda.dot(nb.G))});
    auto q = [&](double b) {
      const auto tr = m.step(t, x, b);
      return tr.reward + c.eval(t + 1, tr.next).V;
    };
    const double fd = fd_derivative(q, a);
    return std::max(std::abs(p.drda + p.dfda.dot(nb.G)) / scale, std::abs(fd) / scale);
  });

  // ---- dpi/dw = -(dG/dw df/da) / d2Q/da2 against fd of the argmax, with the
  // argmax found numerically (no closed form)
  run.item("dpi/dw closed form vs numeric argmax", [](SeededRng& rng) {
    const ToyProblem m(2, rng.uniform(0.5, 3.0));
    const auto c = exp2_critic(rng.uniform(0.1, 4.0), rng.uniform(0.1, 4.0), detail::uniform_vec<4>(rng, -5.0, 5.0));
    const int t = rng.uniform(0.0, 1.0) < 0.5 ? 0 : 1;
    const Vec<1> x(rng.uniform(-5.0, 5.0));
    const auto pe = greedy_action(m, c, t, x);
    if (!pe.dpi_dw) throw PolicyError("no policy derivative");
    auto a_w = [&](const Vec<4>& v) {
      auto cc = c;
      cc.set_weights(v);
      return greedy_numeric_action(m, cc, t, x);
    };
    return relative_error(*pe.dpi_dw, fd_gradient(a_w, c.weights(), 1e-4));
  });

  return run.take();
}

}  // namespace vgl
