#pragma once

// Shared numeric types, error hierarchy, seeded randomness and the
// finite-difference oracle used by tests and the gradcheck tool.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace vgl {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;

template <int R, int C>
using Mat = Eigen::Matrix<double, R, C>;

using DynVec = Eigen::VectorXd;
using DynMat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct OutOfEpisodeError : Error {
  using Error::Error;
};
struct PolicyError : Error {
  using Error::Error;
};
struct SingularCurvatureError : Error {
  using Error::Error;
};
struct OracleError : Error {
  using Error::Error;
};
struct RunawayTrajectoryError : Error {
  using Error::Error;
};
struct OracleInfeasibleError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

struct TargetsUndefinedError : Error {
  TargetsUndefinedError(int step, const std::string& what)
      : Error("targets undefined at step " + std::to_string(step) + ": " + what), step(step) {}
  int step;
};

// ---------------------------------------------------------------------------
// randomness

// Every stochastic component draws from one of these; a trial's stream is
// fully determined by (seed, stream id).
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // Independent child stream, e.g. one per trial.
  SeededRng fork(std::uint64_t stream) const { return SeededRng(mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ULL))); }

  double uniform(double lo, double hi) {
    if (!(lo <= hi)) throw ArgumentError("uniform: lo > hi");
    if (lo == hi) return lo;
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }

  double normal(double sd) {
    std::normal_distribution<double> d(0.0, sd);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {  // splitmix64 finaliser
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Zero-mean Gaussian exploration noise with standard deviation eps.
inline double rnd(double eps, SeededRng& rng) {
  if (!(eps >= 0.0)) throw ArgumentError("rnd: eps must be >= 0");
  if (eps == 0.0) return 0.0;
  return rng.normal(eps);
}

// ---------------------------------------------------------------------------
// finite differences

inline constexpr double kFdStep = 1e-5;

inline double fd_step(double xi, double h_rel = kFdStep) { return h_rel * std::max(1.0, std::abs(xi)); }

// Central-difference gradient of a scalar function. Component i uses
// h_i = h_rel * max(1, |x_i|).
template <class Fn, class Derived>
typename Derived::PlainObject fd_gradient(Fn&& fn, const Eigen::MatrixBase<Derived>& point, double h_rel = kFdStep) {
  if (!(h_rel > 0.0)) throw ArgumentError("fd_gradient: step must be positive");
  typename Derived::PlainObject x = point;
  typename Derived::PlainObject g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double h = fd_step(xi, h_rel);
    x[i] = xi + h;
    const double fp = fn(std::as_const(x));
    x[i] = xi - h;
    const double fm = fn(std::as_const(x));
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw OracleError("fd_gradient: non-finite evaluation");
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double fd_derivative(const auto& fn, double x, double h_rel = kFdStep) {
  const double h = fd_step(x, h_rel);
  const double fp = fn(x + h);
  const double fm = fn(x - h);
  if (!std::isfinite(fp) || !std::isfinite(fm)) throw OracleError("fd_derivative: non-finite evaluation");
  return (fp - fm) / (2.0 * h);
}

// Jacobian of a vector function, laid out (i, j) = dF^j / dx^i.
template <class Fn, class Derived>
DynMat fd_jacobian(Fn&& fn, const Eigen::MatrixBase<Derived>& point, double h_rel = kFdStep) {
  typename Derived::PlainObject x = point;
  DynMat jac;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double h = fd_step(xi, h_rel);
    x[i] = xi + h;
    const DynVec fp = fn(std::as_const(x));
    x[i] = xi - h;
    const DynVec fm = fn(std::as_const(x));
    x[i] = xi;
    if (!fp.allFinite() || !fm.allFinite()) throw OracleError("fd_jacobian: non-finite evaluation");
    if (i == 0) jac.resize(x.size(), fp.size());
    jac.row(i) = ((fp - fm) / (2.0 * h)).transpose();
  }
  return jac;
}

// Norm-wise relative error; `floor` stops exact zeros from blowing it up.
template <class A, class B>
double relative_error(const Eigen::MatrixBase<A>& got, const Eigen::MatrixBase<B>& want, double floor = 1e-3) {
  const double diff = (got - want).template lpNorm<Eigen::Infinity>();
  const double scale = std::max({got.template lpNorm<Eigen::Infinity>(), want.template lpNorm<Eigen::Infinity>(), floor});
  return diff / scale;
}

inline double relative_error(double got, double want, double floor = 1e-3) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor});
}

}  // namespace vgl
