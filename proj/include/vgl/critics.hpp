#pragma once

// Value-function approximators.  Every critic returns the full derivative
// bundle (V, G, dV/dw, dG/dw, dG/dx) analytically.

#include "vgl/core.hpp"
#include "vgl/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace vgl {

template <int N, int W>
struct CriticBundle {
  double V = 0.0;
  Vec<N> G = Vec<N>::Zero();
  Vec<W> dVdw = Vec<W>::Zero();
  Mat<W, N> dGdw = Mat<W, N>::Zero();  // (i, j) = dG^j / dw^i
  Mat<N, N> dGdx = Mat<N, N>::Zero();  // (i, j) = dG^j / dx^i

  bool all_finite() const {
    return std::isfinite(V) && G.allFinite() && dVdw.allFinite() && dGdw.allFinite() && dGdx.allFinite();
  }
};

template <class C>
concept Critic = requires(const C& c, C& mc, int t, const Vec<C::kStateDim>& x, const Vec<C::kWeights>& w) {
  { C::kStateDim } -> std::convertible_to<int>;
  { C::kWeights } -> std::convertible_to<int>;
  { c.eval(t, x) } -> std::same_as<CriticBundle<C::kStateDim, C::kWeights>>;
  { c.weights() } -> std::convertible_to<Vec<C::kWeights>>;
  mc.set_weights(w);
};

// ---------------------------------------------------------------------------
// closed-form toy critics

enum class CriticForm { kExp1, kExp2, kExp4, kAppendixB, kReparam, kCounterexample, kCustom };

inline const char* critic_form_name(CriticForm f) {
  switch (f) {
    case CriticForm::kExp1: return "Exp1";
    case CriticForm::kExp2: return "Exp2";
    case CriticForm::kExp4: return "Exp4";
    case CriticForm::kAppendixB: return "AppendixB";
    case CriticForm::kReparam: return "Exp2-reparam";
    case CriticForm::kCounterexample: return "RG-counterexample";
    case CriticForm::kCustom: return "custom";
  }
  return "?";
}

// V_t(x) = quad x^2 + (lin0 + lin_w.w) x + const0 + const_w.w
template <int W>
struct ToyStepForm {
  double quad = 0.0;
  double lin0 = 0.0;
  double const0 = 0.0;
  Vec<W> lin_w = Vec<W>::Zero();
  Vec<W> const_w = Vec<W>::Zero();
};

// Time-indexed critic, quadratic in x and affine in w.  Time steps outside
// 1..forms.size() evaluate to zero (no value at t = 0, none past the end).
template <int W>
class ToyCritic {
 public:
  static constexpr int kStateDim = 1;
  static constexpr int kWeights = W;
  // dG/dx does not depend on x or w; the analytic residual-gradient backend
  // relies on this.
  static constexpr bool kConstantCurvature = true;
  using Weights = Vec<W>;

  ToyCritic(CriticForm form, std::vector<ToyStepForm<W>> forms, const Weights& w, std::vector<double> constants = {})
      : form_(form), forms_(std::move(forms)), w_(w), constants_(std::move(constants)) {}

  CriticForm form() const { return form_; }
  const std::vector<double>& constants() const { return constants_; }
  const Weights& weights() const { return w_; }
  void set_weights(const Weights& w) { w_ = w; }
  int last_step() const { return static_cast<int>(forms_.size()); }

  const ToyStepForm<W>* form_at(int t) const {
    if (t < 1 || t > last_step()) return nullptr;
    return &forms_[t - 1];
  }

  CriticBundle<1, W> eval(int t, const Vec<1>& xv) const {
    CriticBundle<1, W> b;
    const ToyStepForm<W>* f = form_at(t);
    if (f == nullptr) return b;
    const double x = xv[0];
    const double lin = f->lin0 + f->lin_w.dot(w_);
    b.V = f->quad * x * x + lin * x + f->const0 + f->const_w.dot(w_);
    b.G[0] = 2.0 * f->quad * x + lin;
    b.dVdw = f->lin_w * x + f->const_w;
    b.dGdw.col(0) = f->lin_w;
    b.dGdx(0, 0) = 2.0 * f->quad;
    return b;
  }

  double value(int t, double x) const { return eval(t, Vec<1>(x)).V; }

  // Maximiser of -k a^2 + V_{t+1}(x + a) when it is concave; nullopt
  // otherwise (the numeric search then takes over).
  std::optional<double> greedy_closed_form(const ToyProblem& m, int t, double x) const {
    if (m.action_free(t)) return 0.0;
    const ToyStepForm<W>* f = form_at(t + 1);
    const double quad = f ? f->quad : 0.0;
    const double lin = f ? f->lin0 + f->lin_w.dot(w_) : 0.0;
    const double curv = 2.0 * m.k() - 2.0 * quad;
    if (!(curv > 0.0)) return std::nullopt;
    double a = (2.0 * quad * x + lin) / curv;
    if (m.action_bounded()) a = std::clamp(a, -1.0, 1.0);
    return a;
  }

 private:
  CriticForm form_;
  std::vector<ToyStepForm<W>> forms_;
  Weights w_;
  std::vector<double> constants_;
};

// V_1 = -(x - c1)^2 + w1 x + w2
inline ToyCritic<2> exp1_critic(double c1, const Vec<2>& w = Vec<2>::Zero()) {
  ToyStepForm<2> f;
  f.quad = -1.0;
  f.lin0 = 2.0 * c1;
  f.const0 = -c1 * c1;
  f.lin_w << 1.0, 0.0;
  f.const_w << 0.0, 1.0;
  return ToyCritic<2>(CriticForm::kExp1, {f}, w, {c1});
}

// V_1 = -c1 x^2 + w1 x + w2, V_2 = -c2 x^2 + w3 x + w4
inline ToyCritic<4> exp2_critic(double c1, double c2, const Vec<4>& w = Vec<4>::Zero()) {
  if (!(c1 > 0.0 && c2 > 0.0)) throw ArgumentError("exp2 critic needs c1, c2 > 0");
  ToyStepForm<4> f1, f2;
  f1.quad = -c1;
  f1.lin_w << 1, 0, 0, 0;
  f1.const_w << 0, 1, 0, 0;
  f2.quad = -c2;
  f2.lin_w << 0, 0, 1, 0;
  f2.const_w << 0, 0, 0, 1;
  return ToyCritic<4>(CriticForm::kExp2, {f1, f2}, w, {c1, c2});
}

// V_1 = -c1 x^2 + w1 x, V_2 = -c2 x^2 + (w1 - c3) x
inline ToyCritic<1> exp4_critic(double c1 = 2.0, double c2 = 0.1, double c3 = 10.0, const Vec<1>& w = Vec<1>::Zero()) {
  ToyStepForm<1> f1, f2;
  f1.quad = -c1;
  f1.lin_w << 1.0;
  f2.quad = -c2;
  f2.lin0 = -c3;
  f2.lin_w << 1.0;
  return ToyCritic<1>(CriticForm::kExp4, {f1, f2}, w, {c1, c2, c3});
}

// V_1 = w1 + w2 x
inline ToyCritic<2> appendix_b_critic(const Vec<2>& w = Vec<2>::Zero()) {
  ToyStepForm<2> f;
  f.lin_w << 0.0, 1.0;
  f.const_w << 1.0, 0.0;
  return ToyCritic<2>(CriticForm::kAppendixB, {f}, w);
}

// Two-step critic with the trajectory-affecting weights mixed through F:
// (w1, w3) = F p, weights laid out (p1, p2, w2, w4).
inline ToyCritic<4> exp2_reparam_critic(double c1, double c2, const Mat<2, 2>& F, const Vec<4>& p = Vec<4>::Zero()) {
  ToyStepForm<4> f1, f2;
  f1.quad = -c1;
  f1.lin_w << F(0, 0), F(0, 1), 0, 0;
  f1.const_w << 0, 0, 1, 0;
  f2.quad = -c2;
  f2.lin_w << F(1, 0), F(1, 1), 0, 0;
  f2.const_w << 0, 0, 0, 1;
  return ToyCritic<4>(CriticForm::kReparam, {f1, f2}, p, {c1, c2});
}

// V_1 = -x^2 + w x, paired with ToyProblem(1, 0, false, 4.0).
inline ToyCritic<1> counterexample_critic(double w = 0.0) {
  ToyStepForm<1> f;
  f.quad = -1.0;
  f.lin_w << 1.0;
  return ToyCritic<1>(CriticForm::kCounterexample, {f}, Vec<1>(w));
}

// ---------------------------------------------------------------------------
// MLP critic for the lander

// 3 inputs -> 6 logistic hidden units -> 1 linear output, plus direct
// input-to-output connections.  Inputs are scaled by (1/100, 1/10, 1/50) and
// then squashed by a logistic unit unless identity_input is set; the output
// is multiplied by 100.
//
// Weight layout: A (6x3, row-major) | b (6) | B (6) | C (3) | d.
class MlpCritic {
 public:
  static constexpr int kStateDim = 3;
  static constexpr int kHidden = 6;
  static constexpr int kWeights = kHidden * 3 + kHidden + kHidden + 3 + 1;
  static constexpr int kOffA = 0, kOffb = 18, kOffB = 24, kOffC = 30, kOffd = 33;
  static constexpr double kOutputScale = 100.0;
  using Weights = Vec<kWeights>;

  explicit MlpCritic(const Weights& w = Weights::Zero(), bool identity_input = false)
      : w_(w), identity_input_(identity_input), scale_(100.0, 10.0, 50.0) {}

  static MlpCritic random(SeededRng& rng, bool identity_input = false) {
    Weights w;
    for (int i = 0; i < kWeights; ++i) w[i] = rng.uniform(-1.0, 1.0);
    return MlpCritic(w, identity_input);
  }

  const Weights& weights() const { return w_; }
  void set_weights(const Weights& w) { w_ = w; }
  bool identity_input() const { return identity_input_; }
  const Vec<3>& input_scale() const { return scale_; }

  double A(int j, int l) const { return w_[kOffA + 3 * j + l]; }

  CriticBundle<3, kWeights> eval(int /*t*/, const Vec<3>& x) const {
    Vec<3> y, y1, y2;  // input activation and its first/second x-derivatives
    for (int l = 0; l < 3; ++l) {
      const double s = x[l] / scale_[l];
      if (identity_input_) {
        y[l] = s;
        y1[l] = 1.0 / scale_[l];
        y2[l] = 0.0;
      } else {
        const double sg = logistic(s);
        y[l] = sg;
        y1[l] = sg * (1.0 - sg) / scale_[l];
        y2[l] = sg * (1.0 - sg) * (1.0 - 2.0 * sg) / (scale_[l] * scale_[l]);
      }
    }

    Vec<kHidden> z, z1, z2;
    for (int j = 0; j < kHidden; ++j) {
      double n = w_[kOffb + j];
      for (int l = 0; l < 3; ++l) n += A(j, l) * y[l];
      z[j] = logistic(n);
      z1[j] = z[j] * (1.0 - z[j]);
      z2[j] = z1[j] * (1.0 - 2.0 * z[j]);
    }

    CriticBundle<3, kWeights> out;
    double o = w_[kOffd];
    for (int j = 0; j < kHidden; ++j) o += w_[kOffB + j] * z[j];
    for (int l = 0; l < 3; ++l) o += w_[kOffC + l] * y[l];
    out.V = kOutputScale * o;

    // q_k = do/dy_k
    Vec<3> q;
    for (int k = 0; k < 3; ++k) {
      double acc = w_[kOffC + k];
      for (int j = 0; j < kHidden; ++j) acc += w_[kOffB + j] * z1[j] * A(j, k);
      q[k] = acc;
      out.G[k] = kOutputScale * q[k] * y1[k];
    }

    for (int m = 0; m < 3; ++m) {
      for (int k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (int j = 0; j < kHidden; ++j) acc += w_[kOffB + j] * z2[j] * A(j, m) * A(j, k);
        acc *= y1[m] * y1[k];
        if (m == k) acc += q[k] * y2[k];
        out.dGdx(m, k) = kOutputScale * acc;
      }
    }

    for (int j = 0; j < kHidden; ++j) {
      const double Bj = w_[kOffB + j];
      out.dVdw[kOffb + j] = kOutputScale * Bj * z1[j];
      out.dVdw[kOffB + j] = kOutputScale * z[j];
      for (int l = 0; l < 3; ++l) out.dVdw[kOffA + 3 * j + l] = kOutputScale * Bj * z1[j] * y[l];
      for (int k = 0; k < 3; ++k) {
        out.dGdw(kOffB + j, k) = kOutputScale * z1[j] * A(j, k) * y1[k];
        out.dGdw(kOffb + j, k) = kOutputScale * Bj * z2[j] * A(j, k) * y1[k];
        for (int l = 0; l < 3; ++l) {
          double v = Bj * z2[j] * y[l] * A(j, k);
          if (k == l) v += Bj * z1[j];
          out.dGdw(kOffA + 3 * j + l, k) = kOutputScale * v * y1[k];
        }
      }
    }
    for (int l = 0; l < 3; ++l) {
      out.dVdw[kOffC + l] = kOutputScale * y[l];
      out.dGdw(kOffC + l, l) = kOutputScale * y1[l];
    }
    out.dVdw[kOffd] = kOutputScale;
    return out;
  }

  // Plain-text snapshot: one header line, then one value per line.
  void save(std::ostream& os) const {
    os << "vgl-mlp-critic weights=" << kWeights << " layout=A6x3,b6,B6,C3,d1 identity_input=" << (identity_input_ ? 1 : 0)
       << "\n";
    os << std::setprecision(17);
    for (int i = 0; i < kWeights; ++i) os << w_[i] << "\n";
  }

  static MlpCritic load(std::istream& is) {
    std::string header;
    if (!std::getline(is, header) || header.rfind("vgl-mlp-critic", 0) != 0)
      throw ArgumentError("mlp snapshot: missing header");
    if (header.find("weights=" + std::to_string(kWeights)) == std::string::npos)
      throw ArgumentError("mlp snapshot: weight count mismatch");
    const bool identity = header.find("identity_input=1") != std::string::npos;
    Weights w;
    for (int i = 0; i < kWeights; ++i) {
      if (!(is >> w[i])) throw ArgumentError("mlp snapshot: truncated weight list");
    }
    double extra;
    if (is >> extra) throw ArgumentError("mlp snapshot: too many values");
    return MlpCritic(w, identity);
  }

 private:
  static double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }

  Weights w_;
  bool identity_input_;
  Vec<3> scale_;
};

// Convenience for tests and tools: V at (t, x) with weights w.
template <Critic C>
double critic_value_with(C critic, const Vec<C::kWeights>& w, int t, const Vec<C::kStateDim>& x) {
  critic.set_weights(w);
  return critic.eval(t, x).V;
}

}  // namespace vgl
