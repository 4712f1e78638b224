#pragma once

// Experiment drivers: configs, per-trial loops, table rows and TSV output.

#include "vgl/analysis.hpp"
#include "vgl/critics.hpp"
#include "vgl/learners.hpp"
#include "vgl/models.hpp"
#include "vgl/targets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <locale>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace vgl {

enum class Algo { kVL, kVGL, kVGLOmega, kVGLRG };

inline const char* algo_name(Algo a) {
  switch (a) {
    case Algo::kVL: return "VL";
    case Algo::kVGL: return "VGL";
    case Algo::kVGLOmega: return "VGLOmega";
    case Algo::kVGLRG: return "VGLRG";
  }
  return "?";
}

inline std::optional<Algo> parse_algo(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  s.erase(std::remove(s.begin(), s.end(), '-'), s.end());
  if (s == "vl") return Algo::kVL;
  if (s == "vgl") return Algo::kVGL;
  if (s == "vglomega" || s == "vglo") return Algo::kVGLOmega;
  if (s == "vglrg" || s == "rg") return Algo::kVGLRG;
  return std::nullopt;
}

enum class FailureReason { kNone, kOverflow, kIterationCap, kUndefinedTargets };

inline const char* failure_name(FailureReason r) {
  switch (r) {
    case FailureReason::kNone: return "none";
    case FailureReason::kOverflow: return "overflow";
    case FailureReason::kIterationCap: return "iteration_cap";
    case FailureReason::kUndefinedTargets: return "undefined_targets";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// configuration

struct ExperimentConfig {
  int experiment = 1;
  Algo algo = Algo::kVGL;
  double lambda = 0.0;  // lambda-bar for experiment 5
  double alpha = 0.01;
  double epsilon = 0.0;
  double c1 = 0.0, c2 = 1.0, c3 = 10.0, k = 0.0;
  int n = 1;
  double c = 0.01, dt = 0.1;
  int trials = 1000;
  std::uint64_t seed = 1;

  // stopping
  double tol = 1e-7;
  long max_iterations = 10'000'000;
  double overflow = 1e150;
  double init_range = 10.0;  // toy weights start U(-r, r)

  // residual gradients run on the unhalved squared error, i.e. step 2 alpha
  // on the 1/2-scaled E
  double rg_scale = 2.0;
  RgBackend rg_backend = RgBackend::kNumeric;

  // experiment 5
  int iterations = 1000;
  bool multi_start = false;
  bool input_sigmoid = false;
  double success_band = 0.05;  // relative distance to the oracle return
};

inline ExperimentConfig default_config(int experiment, bool multi_start = false) {
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  switch (experiment) {
    case 1:
      cfg.n = 1, cfg.k = 0.0, cfg.c1 = 0.0;
      break;
    case 2:
      cfg.n = 2, cfg.k = 1.0, cfg.c1 = 0.5, cfg.c2 = 1.0;
      // the published two-step iteration counts line up with 1e-6, not 1e-7
      cfg.tol = 1e-6;
      break;
    case 3:
      cfg.algo = Algo::kVL;
      cfg.n = 2;
      cfg.alpha = 0.01, cfg.epsilon = 0.1;
      cfg.trials = 20;
      cfg.max_iterations = 100'000;
      cfg.overflow = 1e12;
      break;
    case 4:
      cfg.algo = Algo::kVGLOmega;
      cfg.lambda = 1.0;
      cfg.n = 2, cfg.k = 2.0, cfg.c1 = 2.0, cfg.c2 = 0.1, cfg.c3 = 10.0;
      cfg.trials = 100;
      break;
    case 5:
      cfg.algo = Algo::kVGLOmega;
      cfg.lambda = 0.0;
      cfg.alpha = 1.0;
      cfg.trials = 10;
      cfg.multi_start = multi_start;
      if (multi_start) {
        cfg.c = 1.0, cfg.dt = 1.0, cfg.iterations = 2000;
      } else {
        cfg.c = 0.01, cfg.dt = 0.1, cfg.iterations = 1000;
      }
      break;
    default:
      throw ConfigError("unknown experiment " + std::to_string(experiment));
  }
  return cfg;
}

inline void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (cfg.experiment < 1 || cfg.experiment > 5) fail("experiment must be 1..5");
  if (cfg.trials < 1) fail("trials must be >= 1");
  if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) fail("alpha must be > 0");
  if (!(cfg.epsilon >= 0.0) || !std::isfinite(cfg.epsilon)) fail("epsilon must be >= 0");
  if (!(cfg.tol > 0.0) || cfg.max_iterations < 1 || cfg.max_iterations > 10'000'000) fail("bad stopping thresholds");
  if (!(cfg.overflow > 0.0)) fail("overflow threshold must be > 0");
  if (!(cfg.init_range > 0.0)) fail("init range must be > 0");
  if (cfg.experiment == 5) {
    if (cfg.algo != Algo::kVGLOmega) fail("exp5 runs VGLOmega only");
    if (!(cfg.lambda >= 0.0)) fail("exp5 lambda-bar must be >= 0");
    if (!(cfg.c > 0.0) || !(cfg.dt > 0.0)) fail("exp5 needs c > 0 and dt > 0");
    if (cfg.iterations < 1) fail("exp5 iterations must be >= 1");
    if (cfg.epsilon != 0.0) fail("exp5 is deterministic: epsilon must be 0");
    return;
  }
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) fail("lambda must be in [0, 1]");
  if (!(cfg.k >= 0.0)) fail("k must be >= 0");
  const int want_n = cfg.experiment == 1 ? 1 : 2;
  if (cfg.n != want_n) fail("exp" + std::to_string(cfg.experiment) + " is defined for n = " + std::to_string(want_n));
  if (cfg.experiment == 3) {
    if (cfg.algo == Algo::kVGLRG) fail("exp3 covers VL, VGL and VGLOmega");
    return;
  }
  if (cfg.experiment != 1 && !(cfg.c1 > 0.0 && cfg.c2 > 0.0)) fail("c1 and c2 must be > 0");
  if (cfg.experiment == 4 && cfg.algo == Algo::kVL) fail("exp4 covers the value-gradient algorithms only");
  if (cfg.algo == Algo::kVGLRG && cfg.epsilon != 0.0) fail("VGLRG runs on the greedy trajectory: epsilon must be 0");
  if (!(cfg.rg_scale > 0.0)) fail("rg scale must be > 0");
}

// Plain-number formatting independent of the global locale.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(10);
  os << v;
  return os.str();
}

inline std::string config_echo(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "# exp=" << cfg.experiment << " algo=" << algo_name(cfg.algo) << " lambda=" << fmt(cfg.lambda)
     << " alpha=" << fmt(cfg.alpha) << " epsilon=" << fmt(cfg.epsilon) << " seed=" << cfg.seed
     << " trials=" << cfg.trials;
  if (cfg.experiment == 5) {
    os << " c=" << fmt(cfg.c) << " dt=" << fmt(cfg.dt) << " iterations=" << cfg.iterations
       << " starts=" << (cfg.multi_start ? "grid50" : "single") << " input=" << (cfg.input_sigmoid ? "sigmoid" : "identity")
       << " optimiser=rprop";
  } else {
    os << " n=" << cfg.n << " k=" << fmt(cfg.k) << " c1=" << fmt(cfg.c1) << " c2=" << fmt(cfg.c2);
    if (cfg.experiment == 4) os << " c3=" << fmt(cfg.c3);
    os << " tol=" << fmt(cfg.tol) << " max_iterations=" << cfg.max_iterations << " overflow=" << fmt(cfg.overflow)
       << " init=U(-" << fmt(cfg.init_range) << "," << fmt(cfg.init_range) << ")";
    if (cfg.algo == Algo::kVGLRG)
      os << " rg_scale=" << fmt(cfg.rg_scale) << " rg_backend=" << (cfg.rg_backend == RgBackend::kNumeric ? "numeric" : "analytic");
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// results

struct TrialResult {
  int trial = 0;
  bool success = false;
  long iterations = 0;
  FailureReason reason = FailureReason::kNone;
  std::vector<double> weights;
  double R = std::numeric_limits<double>::quiet_NaN();
  double let_residual = std::numeric_limits<double>::quiet_NaN();  // toy experiments, successful trials
};

struct TableRow {
  ExperimentConfig cfg;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;  // percent
  double iter_mean = std::numeric_limits<double>::quiet_NaN();
  double iter_sd = std::numeric_limits<double>::quiet_NaN();
  double R_mean = std::numeric_limits<double>::quiet_NaN();
  double R_sd = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentReport {
  TableRow row;
  std::vector<TrialResult> trials;
  std::string trajectory_tsv;  // final greedy trajectory of trial 0
  // experiment 5
  std::vector<std::vector<double>> curves;  // [trial][iteration] total return over the start set
  std::vector<Vec<3>> starts;
  double oracle_R = std::numeric_limits<double>::quiet_NaN();
};

// Mean and sample standard deviation; sd is 0 for a single value.
inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (v.empty()) return {nan, nan};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() == 1) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline TableRow aggregate(const ExperimentConfig& cfg, const std::vector<TrialResult>& trials) {
  TableRow row;
  row.cfg = cfg;
  row.trials = static_cast<int>(trials.size());
  std::vector<double> its, rs;
  for (const auto& t : trials) {
    if (!t.success) continue;
    ++row.successes;
    its.push_back(static_cast<double>(t.iterations));
    rs.push_back(t.R);
  }
  row.success_rate = row.trials ? 100.0 * row.successes / row.trials : 0.0;
  std::tie(row.iter_mean, row.iter_sd) = mean_sd(its);
  std::tie(row.R_mean, row.R_sd) = mean_sd(rs);
  return row;
}

// ---------------------------------------------------------------------------
// TSV

inline void write_trajectory_header(std::ostream& os, int n, const char* const* names) {
  os << "t";
  for (int i = 0; i < n; ++i) os << '\t' << names[i];
  os << "\ta\tr\tV\tV'";
  for (int i = 0; i < n; ++i) os << "\tG_" << names[i];
  for (int i = 0; i < n; ++i) os << "\tG'_" << names[i];
  os << '\n';
}

template <int N>
void write_trajectory_row(std::ostream& os, double t, const Vec<N>& x, double a, double r, double V, double Vp,
                          const Vec<N>& G, const Vec<N>& Gp) {
  os << fmt(t);
  for (int i = 0; i < N; ++i) os << '\t' << fmt(x[i]);
  os << '\t' << fmt(a) << '\t' << fmt(r) << '\t' << fmt(V) << '\t' << fmt(Vp);
  for (int i = 0; i < N; ++i) os << '\t' << fmt(G[i]);
  for (int i = 0; i < N; ++i) os << '\t' << fmt(Gp[i]);
  os << '\n';
}

// Discrete trajectory with its lambda targets; the last row is the terminal
// state t = F.
template <int N, int W>
std::string trajectory_tsv(const Trajectory<N, W>& tr, double lambda) {
  static const char* const kNames[] = {"x", "x1", "x2", "x3", "x4", "x5", "x6", "x7"};
  static_assert(N <= 8);
  std::ostringstream os;
  os.imbue(std::locale::classic());
  write_trajectory_header(os, N, kNames);
  const auto vp = compute_targets_V(tr, lambda);
  std::vector<Vec<N>> gp;
  try {
    gp = compute_targets_G(tr, lambda);
  } catch (const TargetsUndefinedError&) {
    gp.assign(tr.F() + 1, Vec<N>::Constant(std::numeric_limits<double>::quiet_NaN()));
  }
  for (int t = 0; t < tr.F(); ++t) {
    const auto& st = tr.steps[t];
    write_trajectory_row<N>(os, t, st.x, st.a, st.r, st.critic.V, vp[t], st.critic.G, gp[t]);
  }
  write_trajectory_row<N>(os, tr.F(), tr.x_final, 0.0, 0.0, tr.critic_final.V, vp[tr.F()], tr.critic_final.G, gp[tr.F()]);
  return os.str();
}

// Continuous trajectory: t is time, r is the reward collected over the step,
// V' the return still to come; the terminal row carries the impulse.
template <ContinuousModel M, int W>
std::string ct_trajectory_tsv(const M& m, const CtTrajectory<3, W>& tr, double lambda_bar) {
  static const char* const kNames[] = {"h", "v", "u"};
  std::ostringstream os;
  os.imbue(std::locale::classic());
  write_trajectory_header(os, 3, kNames);
  const auto gp = ct_targets_G(m, tr, lambda_bar);
  std::vector<double> togo(tr.F() + 1, 0.0);
  togo[tr.F()] = tr.impulse;
  for (int t = tr.F() - 1; t >= 0; --t) togo[t] = togo[t + 1] + tr.steps[t].dt * tr.steps[t].rbar;
  double time = 0.0;
  for (int t = 0; t < tr.F(); ++t) {
    const auto& st = tr.steps[t];
    write_trajectory_row<3>(os, time, st.x, st.policy.action, st.dt * st.rbar, st.critic.V, togo[t], st.critic.G, gp[t]);
    time += st.dt;
  }
  write_trajectory_row<3>(os, time, tr.x_final, 0.0, tr.impulse, tr.critic_final.V, togo[tr.F()], tr.critic_final.G,
                          gp[tr.F()]);
  return os.str();
}

inline void write_table_header(std::ostream& os) {
  os << "experiment\talgo\tlambda\talpha\tepsilon\tc1\tc2\tc3\tk\tn\tc\tdt\ttrials\tsuccess_rate\titer_mean\titer_sd"
        "\tR_mean\tR_sd\n";
}

inline void write_table_row(std::ostream& os, const TableRow& r) {
  const auto& c = r.cfg;
  os << c.experiment << '\t' << algo_name(c.algo) << '\t' << fmt(c.lambda) << '\t' << fmt(c.alpha) << '\t'
     << fmt(c.epsilon) << '\t' << fmt(c.c1) << '\t' << fmt(c.c2) << '\t' << fmt(c.c3) << '\t' << fmt(c.k) << '\t' << c.n
     << '\t' << fmt(c.c) << '\t' << fmt(c.dt) << '\t' << r.trials << '\t' << fmt(r.success_rate) << '\t'
     << fmt(r.iter_mean) << '\t' << fmt(r.iter_sd) << '\t' << fmt(r.R_mean) << '\t' << fmt(r.R_sd) << '\n';
}

inline void write_trials(std::ostream& os, const std::vector<TrialResult>& trials) {
  const std::size_t W = trials.empty() ? 0 : trials.front().weights.size();
  os << "trial\tsuccess\titerations\treason\tR\tlet_residual";
  for (std::size_t i = 0; i < W; ++i) os << "\tw" << i + 1;
  os << '\n';
  for (const auto& t : trials) {
    os << t.trial << '\t' << (t.success ? 1 : 0) << '\t' << t.iterations << '\t' << failure_name(t.reason) << '\t'
       << fmt(t.R) << '\t' << fmt(t.let_residual);
    for (double w : t.weights) os << '\t' << fmt(w);
    os << '\n';
  }
}

inline void write_curves(std::ostream& os, const ExperimentReport& rep) {
  os << "iteration";
  for (std::size_t j = 0; j < rep.curves.size(); ++j) os << "\trun" << j;
  os << "\tmean\toracle\n";
  const std::size_t len = rep.curves.empty() ? 0 : rep.curves.front().size();
  for (std::size_t i = 0; i < len; ++i) {
    os << i;
    double s = 0.0;
    int cnt = 0;
    for (const auto& c : rep.curves) {
      const double v = i < c.size() ? c[i] : std::numeric_limits<double>::quiet_NaN();
      os << '\t' << fmt(v);
      if (std::isfinite(v)) s += v, ++cnt;
    }
    os << '\t' << fmt(cnt ? s / cnt : std::numeric_limits<double>::quiet_NaN()) << '\t' << fmt(rep.oracle_R) << '\n';
  }
}

// ---------------------------------------------------------------------------
// toy experiments 1, 2, 4

namespace detail {

template <Critic C>
Vec<C::kWeights> toy_initial_weights(SeededRng& rng, double range) {
  Vec<C::kWeights> w;
  for (int i = 0; i < C::kWeights; ++i) w[i] = rng.uniform(-range, range);
  return w;
}

// One trial: fresh weights, then rollout -> targets -> update -> apply until
// `stop(w, dw)` holds or the trial fails.
template <Critic C, class Stop>
TrialResult toy_trial(const ExperimentConfig& cfg, const ToyProblem& m, C critic, int trial, Stop&& stop) {
  constexpr int W = C::kWeights;
  SeededRng rng = SeededRng(cfg.seed).fork(static_cast<std::uint64_t>(trial));
  critic.set_weights(toy_initial_weights<C>(rng, cfg.init_range));
  TrialResult res;
  res.trial = trial;
  const Vec<1> x0 = Vec<1>::Zero();
  Trajectory<1, W> tr;
  std::vector<double> vp;
  TargetsBundle<1> tb;
  tb.lambda = cfg.lambda;
  const OmegaMode mode = cfg.algo == Algo::kVGLOmega ? OmegaMode::kGreedy : OmegaMode::kIdentity;
  bool done = false;
  try {
    for (long it = 1; it <= cfg.max_iterations; ++it) {
      Vec<W> dw;
      switch (cfg.algo) {
        case Algo::kVL:
          rollout_into(m, critic, x0, cfg.epsilon, &rng, tr);
          compute_targets_V_into(tr, cfg.lambda, vp);
          dw = td_lambda(tr, vp, cfg.alpha).dw;
          break;
        case Algo::kVGL:
        case Algo::kVGLOmega:
          rollout_into(m, critic, x0, cfg.epsilon, &rng, tr);
          compute_targets_G_into(tr, cfg.lambda, tb.Gprime);
          if (mode == OmegaMode::kGreedy) compute_omega_into(tr, tb.Omega);
          dw = vgl::vgl(tr, tb, cfg.alpha, mode).dw;
          break;
        case Algo::kVGLRG:
          dw = vgl_rg(m, critic, x0, cfg.lambda, cfg.rg_scale * cfg.alpha, cfg.rg_backend).dw;
          break;
      }
      const Vec<W> wn = critic.weights() + dw;
      res.iterations = it;
      if (!wn.allFinite() || !dw.allFinite() || wn.cwiseAbs().maxCoeff() > cfg.overflow) {
        res.reason = FailureReason::kOverflow;
        done = true;
        break;
      }
      if (stop(wn, dw)) {
        critic.set_weights(wn);
        res.success = true;
        done = true;
        break;
      }
      // without exploration a bitwise repeat means every later iteration
      // repeats too: the trial would run into the cap
      if (cfg.epsilon == 0.0 && wn == critic.weights()) {
        res.iterations = cfg.max_iterations;
        break;
      }
      critic.set_weights(wn);
    }
    if (!done) res.reason = FailureReason::kIterationCap;
  } catch (const TargetsUndefinedError&) {
    res.reason = FailureReason::kUndefinedTargets;
  } catch (const PolicyError&) {
    res.reason = FailureReason::kUndefinedTargets;
  } catch (const DomainError&) {
    res.reason = FailureReason::kOverflow;
  } catch (const RunawayTrajectoryError&) {
    res.reason = FailureReason::kOverflow;
  }
  const Vec<W> w = critic.weights();
  res.weights.assign(w.data(), w.data() + W);
  if (res.reason != FailureReason::kOverflow) {
    try {
      const auto fin = rollout(m, critic, x0);
      res.R = fin.total_reward();
      if (res.success) res.let_residual = max_unsaturated_residual(let_check(fin, m));
    } catch (const Error&) {
    }
  }
  return res;
}

template <Critic C, class Stop>
ExperimentReport run_toy(const ExperimentConfig& cfg, const ToyProblem& m, const C& proto, Stop&& stop) {
  ExperimentReport rep;
  rep.trials.reserve(cfg.trials);
  for (int i = 0; i < cfg.trials; ++i) rep.trials.push_back(toy_trial(cfg, m, proto, i, stop));
  rep.row = aggregate(cfg, rep.trials);
  const auto& t0 = rep.trials.front();
  if (t0.reason != FailureReason::kOverflow) {
    try {
      C c = proto;
      Vec<C::kWeights> w;
      for (int i = 0; i < C::kWeights; ++i) w[i] = t0.weights[i];
      c.set_weights(w);
      rep.trajectory_tsv = trajectory_tsv(rollout(m, c, Vec<1>::Zero()), cfg.lambda);
    } catch (const Error&) {
    }
  }
  return rep;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// experiment 5

inline std::vector<Vec<3>> exp5_starts(bool multi) {
  if (!multi) return {Vec<3>(100, 0, 50)};
  std::vector<Vec<3>> s;
  for (int h = 10; h <= 100; h += 10)
    for (int j = 0; j <= 4; ++j) s.emplace_back(h, -10.0 + 2.5 * j, 50.0);
  return s;
}

// Sum of the Pontryagin returns over the start set; NaN if any start has no
// oracle solution.
inline double exp5_oracle(const LunarLander& m, const std::vector<Vec<3>>& starts) {
  double total = 0.0;
  for (const auto& x0 : starts) {
    try {
      total += pontryagin_lander(m, x0).R;
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }
  return total;
}

namespace detail {

struct Exp5Trial {
  TrialResult result;
  std::vector<double> curve;
  MlpCritic critic;
};

inline Exp5Trial exp5_trial(const ExperimentConfig& cfg, const LunarLander& m, const std::vector<Vec<3>>& starts,
                            double oracle, int trial) {
  SeededRng rng = SeededRng(cfg.seed).fork(static_cast<std::uint64_t>(trial));
  Exp5Trial out{{}, {}, MlpCritic::random(rng, !cfg.input_sigmoid)};
  auto& res = out.result;
  res.trial = trial;
  RpropState<MlpCritic::kWeights> st;
  auto near_oracle = [&](double R) {
    return std::isfinite(oracle) && std::abs(R - oracle) <= cfg.success_band * std::abs(oracle);
  };
  long first_hit = -1;
  try {
    for (int it = 0; it <= cfg.iterations; ++it) {
      UpdateVector<MlpCritic::kWeights> acc;
      double total = 0.0;
      for (const auto& x0 : starts) {
        const auto tr = ct_rollout(m, out.critic, x0, cfg.dt);
        total += tr.total_reward();
        if (it < cfg.iterations) accumulate(acc, ct_vgl_omega(m, tr, ct_targets_G(m, tr, cfg.lambda), cfg.alpha));
      }
      out.curve.push_back(total);
      if (first_hit < 0 && near_oracle(total)) first_hit = it;
      if (it == cfg.iterations) break;
      if (!acc.dw.allFinite()) throw DomainError("exp5: non-finite update");
      out.critic.set_weights(rprop_apply(out.critic.weights(), acc.dw, st));
      if (!out.critic.weights().allFinite()) throw DomainError("exp5: non-finite weights");
    }
    res.R = out.curve.back();
    res.iterations = cfg.iterations;
    if (std::isfinite(oracle)) {
      res.success = near_oracle(res.R);
      if (res.success) res.iterations = first_hit;
    } else {
      res.success = std::isfinite(res.R);
    }
    if (!res.success) res.reason = FailureReason::kIterationCap;
  } catch (const DomainError&) {
    res.reason = FailureReason::kOverflow;
  } catch (const RunawayTrajectoryError&) {
    res.reason = FailureReason::kOverflow;
  }
  const auto& w = out.critic.weights();
  res.weights.assign(w.data(), w.data() + MlpCritic::kWeights);
  return out;
}

}  // namespace detail

inline ExperimentReport run_exp5(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  const LunarLander m(cfg.c);
  rep.starts = exp5_starts(cfg.multi_start);
  rep.oracle_R = exp5_oracle(m, rep.starts);
  for (int i = 0; i < cfg.trials; ++i) {
    auto t = detail::exp5_trial(cfg, m, rep.starts, rep.oracle_R, i);
    if (i == 0 && t.result.reason == FailureReason::kNone) {
      try {
        rep.trajectory_tsv = ct_trajectory_tsv(m, ct_rollout(m, t.critic, rep.starts.front(), cfg.dt), cfg.lambda);
      } catch (const Error&) {
      }
    }
    rep.trials.push_back(std::move(t.result));
    rep.curves.push_back(std::move(t.curve));
  }
  rep.row = aggregate(cfg, rep.trials);
  return rep;
}

// ---------------------------------------------------------------------------
// entry point for experiments 1, 2, 4, 5

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  switch (cfg.experiment) {
    case 1: {
      const ToyProblem m(1, cfg.k);
      const double w1_star = -2.0 * cfg.c1;
      return detail::run_toy(cfg, m, exp1_critic(cfg.c1), [&](const Vec<2>& w, const Vec<2>&) {
        return std::abs(w[0] - w1_star) < cfg.tol;
      });
    }
    case 2: {
      const ToyProblem m(2, cfg.k);
      return detail::run_toy(cfg, m, exp2_critic(cfg.c1, cfg.c2), [&](const Vec<4>& w, const Vec<4>&) {
        return std::abs(w[0]) < cfg.tol && std::abs(w[2]) < cfg.tol;
      });
    }
    case 4: {
      const ToyProblem m(2, cfg.k);
      return detail::run_toy(cfg, m, exp4_critic(cfg.c1, cfg.c2, cfg.c3), [&](const Vec<1>&, const Vec<1>& dw) {
        return std::abs(dw[0]) < cfg.tol * cfg.alpha;
      });
    }
    case 5:
      return run_exp5(cfg);
    default:
      throw ConfigError("run_experiment: use run_exp3 for experiment 3");
  }
}

// ---------------------------------------------------------------------------
// experiment 3: which algorithms can be made to diverge

struct Exp3Row {
  char preset = 'a';
  std::string algorithm;  // VL, VGL, VGLOmega
  double lambda = 0.0;
  bool analytic = false;  // VL has no closed-form system
  bool stable = false;
  double leading_real = std::numeric_limits<double>::quiet_NaN();
  bool sim_diverged = false;
  int blowups = 0;  // empirical runs whose weights overflowed
  int seeds = 0;
};

struct Exp3Summary {
  std::string algorithm;
  double lambda = 0.0;
  bool divergence_found = false;
};

struct Exp3Report {
  ExperimentConfig cfg;
  std::vector<Exp3Row> rows;
  std::vector<Exp3Summary> summary;
};

namespace detail {

// True if the weights overflow within the budget.
inline bool exp3_blows_up(const ExperimentConfig& cfg, const PresetParams& pp, Algo algo, double lambda, int seed) {
  SeededRng rng = SeededRng(cfg.seed).fork(static_cast<std::uint64_t>(seed));
  auto critic = exp2_reparam_critic(pp.c1, pp.c2, pp.F);
  critic.set_weights(toy_initial_weights<ToyCritic<4>>(rng, cfg.init_range));
  const ToyProblem m(2, pp.k);
  const Vec<1> x0 = Vec<1>::Zero();
  Trajectory<1, 4> tr;
  std::vector<double> vp;
  TargetsBundle<1> tb;
  const double eps = algo == Algo::kVL ? cfg.epsilon : 0.0;
  try {
    for (long it = 1; it <= cfg.max_iterations; ++it) {
      rollout_into(m, critic, x0, eps, &rng, tr);
      Vec<4> dw;
      if (algo == Algo::kVL) {
        compute_targets_V_into(tr, lambda, vp);
        dw = td_lambda(tr, vp, cfg.alpha).dw;
      } else {
        compute_targets_G_into(tr, lambda, tb.Gprime);
        const OmegaMode mode = algo == Algo::kVGLOmega ? OmegaMode::kGreedy : OmegaMode::kIdentity;
        if (mode == OmegaMode::kGreedy) compute_omega_into(tr, tb.Omega);
        dw = vgl::vgl(tr, tb, cfg.alpha, mode).dw;
      }
      const Vec<4> w = critic.weights() + dw;
      if (!w.allFinite() || w.cwiseAbs().maxCoeff() > cfg.overflow) return true;
      critic.set_weights(w);
    }
  } catch (const Error&) {
    return true;
  }
  return false;
}

}  // namespace detail

inline Exp3Report run_exp3(const ExperimentConfig& cfg = default_config(3)) {
  if (cfg.trials < 1) throw ConfigError("exp3: trials must be >= 1");
  if (!(cfg.alpha > 0.0) || !(cfg.epsilon > 0.0)) throw ConfigError("exp3: alpha and epsilon must be > 0");
  Exp3Report rep;
  rep.cfg = cfg;
  for (auto preset : {StabilityPreset::kA, StabilityPreset::kB}) {
    const PresetParams pp = stability_preset(preset);
    const char tag = preset == StabilityPreset::kA ? 'a' : 'b';
    for (double lambda : {0.0, 1.0}) {
      const StabilitySystem sys = build_stability(lambda, pp.c1, pp.c2, pp.k, pp.F);
      for (Algo algo : {Algo::kVL, Algo::kVGL, Algo::kVGLOmega}) {
        Exp3Row row;
        row.preset = tag;
        row.algorithm = algo_name(algo);
        row.lambda = lambda;
        if (algo != Algo::kVL) {
          const Mat2& M = algo == Algo::kVGL ? sys.M_vgl : sys.M_omega;
          row.analytic = true;
          row.stable = is_stable(M);
          row.leading_real = leading_real_part(M);
          row.sim_diverged = simulate_linear(M, Vec<2>(1.0, 1.0)).diverged;
        }
        row.seeds = cfg.trials;
        for (int s = 0; s < cfg.trials; ++s) row.blowups += detail::exp3_blows_up(cfg, pp, algo, lambda, s) ? 1 : 0;
        rep.rows.push_back(row);
      }
    }
  }
  for (Algo algo : {Algo::kVL, Algo::kVGL, Algo::kVGLOmega}) {
    for (double lambda : {1.0, 0.0}) {
      Exp3Summary s{algo_name(algo), lambda, false};
      for (const auto& r : rep.rows) {
        if (r.algorithm != s.algorithm || r.lambda != lambda) continue;
        const bool found = r.analytic ? !r.stable : 2 * r.blowups > r.seeds;
        s.divergence_found = s.divergence_found || found;
      }
      rep.summary.push_back(s);
    }
  }
  return rep;
}

inline void write_exp3(std::ostream& os, const Exp3Report& rep) {
  os << "preset\talgorithm\tlambda\tstable\tleading_real\tsim_diverged\tblowups\tseeds\n";
  for (const auto& r : rep.rows) {
    os << r.preset << '\t' << r.algorithm << '\t' << fmt(r.lambda) << '\t'
       << (r.analytic ? (r.stable ? "1" : "0") : "na") << '\t' << fmt(r.leading_real) << '\t'
       << (r.analytic ? (r.sim_diverged ? "1" : "0") : "na") << '\t' << r.blowups << '\t' << r.seeds << '\n';
  }
}

inline void write_exp3_summary(std::ostream& os, const Exp3Report& rep) {
  os << "algorithm\tlambda\tdivergence_found\n";
  for (const auto& s : rep.summary) os << s.algorithm << '\t' << fmt(s.lambda) << '\t' << (s.divergence_found ? "yes" : "no") << '\n';
}

// Stability report for one preset (analytic only).
inline void write_stability(std::ostream& os, StabilityPreset preset) {
  const PresetParams pp = stability_preset(preset);
  os << "# preset=" << (preset == StabilityPreset::kA ? 'a' : 'b') << " c1=" << fmt(pp.c1) << " c2=" << fmt(pp.c2)
     << " k=" << fmt(pp.k) << " F=[" << fmt(pp.F(0, 0)) << "," << fmt(pp.F(0, 1)) << ";" << fmt(pp.F(1, 0)) << ","
     << fmt(pp.F(1, 1)) << "]\n";
  os << "algorithm\tlambda\tc1\tc2\tk\tstable\tleading_real\n";
  for (const auto& r : stability_report(preset))
    os << r.algorithm << '\t' << fmt(r.lambda) << '\t' << fmt(pp.c1) << '\t' << fmt(pp.c2) << '\t' << fmt(pp.k) << '\t'
       << (r.stable ? 1 : 0) << '\t' << fmt(r.leading_real) << '\n';
}

}  // namespace vgl
