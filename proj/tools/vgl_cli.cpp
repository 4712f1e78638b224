// vgl: experiment driver.
//
//   vgl exp1 --algo vgl --alpha 1 --epsilon 0 --trials 1000 --seed 7 --out runs/e1
//   vgl gradcheck --seed 1
//   vgl oracle-lander --h0 100 --v0 0 --u0 50
//   vgl stability --preset b
//
// Exit status: 0 ok, 1 a suite assertion failed, 2 bad arguments or config.

#include "vgl/gradcheck.hpp"
#include "vgl/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

using namespace vgl;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssert = 1;
constexpr int kExitConfig = 2;

// converged value-gradient trajectories must satisfy the local optimality
// conditions to this accuracy
constexpr double kLetTol = 1e-5;

struct ExpArgs {
  ExperimentConfig cfg;
  std::string algo;
  std::string out;
};

void add_exp_flags(CLI::App* sub, ExpArgs& a) {
  auto& c = a.cfg;
  sub->add_option("--algo", a.algo, "VL, VGL, VGLOmega or VGLRG");
  sub->add_option("--lambda", c.lambda, "lambda (lambda-bar for exp5)");
  sub->add_option("--alpha", c.alpha, "learning rate");
  sub->add_option("--epsilon", c.epsilon, "exploration noise sd");
  sub->add_option("--c1", c.c1);
  sub->add_option("--c2", c.c2);
  sub->add_option("--c3", c.c3);
  sub->add_option("--k", c.k, "action cost weight");
  sub->add_option("--n", c.n, "episode length");
  sub->add_option("--c", c.c, "lander sigmoid sharpness");
  sub->add_option("--dt", c.dt, "lander time step");
  sub->add_option("--trials", c.trials);
  sub->add_option("--seed", c.seed);
  sub->add_option("--tol", c.tol, "stopping threshold");
  sub->add_option("--max-iterations", c.max_iterations);
  sub->add_option("--iterations", c.iterations, "exp5 RPROP iterations");
  sub->add_flag("--multi", c.multi_start, "exp5: 50-start grid");
  sub->add_flag("--input-sigmoid", c.input_sigmoid, "exp5: squash MLP inputs");
  sub->add_option("--out", a.out, "output directory for TSV files");
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::ofstream os(fs::path(dir) / name);
  if (!os) throw ConfigError("cannot write " + (fs::path(dir) / name).string());
  os.imbue(std::locale::classic());
  return os;
}

void prepare_out(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir + ": " + ec.message());
}

int run_exp(int id, ExpArgs& a) {
  if (!a.algo.empty()) {
    const auto algo = parse_algo(a.algo);
    if (!algo) throw ConfigError("unknown algorithm '" + a.algo + "'");
    a.cfg.algo = *algo;
  }
  prepare_out(a.out);
  std::cout << config_echo(a.cfg) << '\n';

  if (id == 3) {
    const auto rep = run_exp3(a.cfg);
    write_exp3(std::cout, rep);
    write_exp3_summary(std::cout, rep);
    if (!a.out.empty()) {
      auto os = open_out(a.out, "exp3.tsv");
      os << config_echo(a.cfg) << '\n';
      write_exp3(os, rep);
      auto ss = open_out(a.out, "exp3_summary.tsv");
      write_exp3_summary(ss, rep);
    }
    return kExitOk;
  }

  const auto rep = run_experiment(a.cfg);
  write_table_header(std::cout);
  write_table_row(std::cout, rep.row);
  if (id == 5) std::cout << "oracle_R\t" << fmt(rep.oracle_R) << '\n';

  if (!a.out.empty()) {
    auto os = open_out(a.out, "table.tsv");
    os << config_echo(a.cfg) << '\n';
    write_table_header(os);
    write_table_row(os, rep.row);
    auto ts = open_out(a.out, "trials.tsv");
    write_trials(ts, rep.trials);
    if (!rep.trajectory_tsv.empty()) open_out(a.out, "trajectory.tsv") << rep.trajectory_tsv;
    if (id == 5) {
      auto cs = open_out(a.out, "curves.tsv");
      write_curves(cs, rep);
    }
  }

  int bad = 0;
  if (id == 1 || id == 2) {
    for (const auto& t : rep.trials)
      if (t.success && a.cfg.algo != Algo::kVL && !(t.let_residual < kLetTol)) ++bad;
  }
  if (bad) {
    std::cerr << "vgl: " << bad << " converged trials violate the optimality conditions (residual >= " << fmt(kLetTol)
              << ")\n";
    return kExitAssert;
  }
  return kExitOk;
}

int run_gradcheck_cmd(const GradcheckOptions& opt) {
  const auto items = run_gradcheck(opt);
  int bad = 0;
  std::cout << "item\tinstances\tfailures\tworst_rel_err\tstatus\n";
  for (const auto& it : items) {
    std::cout << it.name << '\t' << it.instances << '\t' << it.failures << '\t' << fmt(it.worst) << '\t'
              << (it.passed() ? "pass" : "FAIL") << '\n';
    if (!it.passed()) ++bad;
  }
  return bad ? kExitAssert : kExitOk;
}

int run_oracle(double h0, double v0, double u0, double c, const std::string& out) {
  const LunarLander m(c);
  const auto sol = pontryagin_lander(m, Vec<3>(h0, v0, u0));
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "# oracle h0=" << fmt(h0) << " v0=" << fmt(v0) << " u0=" << fmt(u0) << " c=" << fmt(c) << " R=" << fmt(sol.R)
     << " integral=" << fmt(sol.integral_reward) << " impulse=" << fmt(sol.impulse) << " vF=" << fmt(sol.vF) << '\n';
  os << "t\th\tv\tu\ta\tlam_h\tlam_v\tlam_u\n";
  for (std::size_t i = 0; i < sol.states.size(); ++i) {
    const auto& x = sol.states[i];
    const Vec<3> p = i < sol.adjoint.size() ? sol.adjoint[i] : Vec<3>::Zero();
    os << fmt(sol.time[i]) << '\t' << fmt(x[0]) << '\t' << fmt(x[1]) << '\t' << fmt(x[2]) << '\t'
       << fmt(i < sol.actions.size() ? sol.actions[i] : 0.0) << '\t' << fmt(p[0]) << '\t' << fmt(p[1]) << '\t'
       << fmt(p[2]) << '\n';
  }
  if (out.empty()) {
    std::cout << os.str();
  } else {
    prepare_out(out);
    open_out(out, "oracle_lander.tsv") << os.str();
  }
  std::cout << "R\t" << fmt(sol.R) << '\n';
  return kExitOk;
}

int run_stability(const std::string& preset, const std::string& out) {
  const StabilityPreset p = preset == "a" ? StabilityPreset::kA : StabilityPreset::kB;
  write_stability(std::cout, p);
  if (!out.empty()) {
    prepare_out(out);
    auto os = open_out(out, "stability_" + preset + ".tsv");
    write_stability(os, p);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::cout.imbue(std::locale::classic());
  CLI::App app{"value-gradient learning experiments"};
  app.require_subcommand(1);

  std::map<int, ExpArgs> exps;
  std::map<int, CLI::App*> exp_cmds;
  for (int id = 1; id <= 5; ++id) {
    exps[id].cfg = default_config(id);
    auto* sub = app.add_subcommand("exp" + std::to_string(id), "run experiment " + std::to_string(id));
    add_exp_flags(sub, exps[id]);
    exp_cmds[id] = sub;
  }

  GradcheckOptions gopt;
  auto* gc = app.add_subcommand("gradcheck", "compare every analytic derivative with central differences");
  gc->add_option("--seed", gopt.seed);
  gc->add_option("--instances", gopt.instances)->check(CLI::PositiveNumber);

  double h0 = 100, v0 = 0, u0 = 50, oc = 0.01;
  std::string oracle_out;
  auto* ol = app.add_subcommand("oracle-lander", "optimal lander trajectory from a start state");
  ol->add_option("--h0", h0);
  ol->add_option("--v0", v0);
  ol->add_option("--u0", u0);
  ol->add_option("--c", oc, "sigmoid sharpness");
  ol->add_option("--out", oracle_out);

  std::string preset = "a", stab_out;
  auto* st = app.add_subcommand("stability", "analytic stability of the linearised updates");
  st->add_option("--preset", preset)->check(CLI::IsMember({"a", "b"}));
  st->add_option("--out", stab_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (auto& [id, sub] : exp_cmds)
      if (sub->parsed()) return run_exp(id, exps[id]);
    if (gc->parsed()) return run_gradcheck_cmd(gopt);
    if (ol->parsed()) return run_oracle(h0, v0, u0, oc, oracle_out);
    if (st->parsed()) return run_stability(preset, stab_out);
  } catch (const ConfigError& e) {
    std::cerr << "vgl: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "vgl: " << e.what() << '\n';
    return kExitConfig;
  } catch (const OracleInfeasibleError& e) {
    std::cerr << "vgl: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "vgl: " << e.what() << '\n';
    return kExitAssert;
  }
  return kExitConfig;
}
