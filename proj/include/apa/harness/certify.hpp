#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "apa/coefficients.hpp"
#include "apa/driver.hpp"
#include "apa/history.hpp"
#include "apa/oracles/gmres.hpp"
#include "apa/oracles/multisecant.hpp"
#include "apa/problems/linear.hpp"
#include "apa/problems/scf.hpp"

namespace apa::harness {

using oracles::Verdict;

struct Check {
  std::string name;
  Verdict verdict = Verdict::Fail;
  std::string detail;
};

struct CertifyReport {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  std::size_t count(Verdict v) const {
    return static_cast<std::size_t>(
        std::count_if(checks.begin(), checks.end(), [v](const Check& c) { return c.verdict == v; }));
  }
  bool passed() const { return count(Verdict::Fail) == 0; }
};

inline void print(std::ostream& out, const CertifyReport& report) {
  for (const auto& c : report.checks) {
    out << fmt::format("{:<12} {}  {}\n", oracles::to_string(c.verdict), c.name, c.detail);
  }
  out << fmt::format("{}: {} pass, {} fail, {} inconclusive ({:.2f} s)\n", report.suite, report.count(Verdict::Pass),
                     report.count(Verdict::Fail), report.count(Verdict::Inconclusive), report.seconds);
}

namespace detail {

inline Verdict verdict(bool ok) { return ok ? Verdict::Pass : Verdict::Fail; }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

struct LabeledLinear {
  std::string label;
  LinearProblem problem;
};

// Twenty contractive instances with n in {10, 30, 50}: both flavours of
// make_linear_suite for four seeds at n = 10 and three seeds at n = 30, 50.
inline std::vector<LabeledLinear> gmres_bundle() {
  std::vector<LabeledLinear> out;
  const std::vector<std::pair<Index, int>> plan{{10, 4}, {30, 3}, {50, 3}};
  for (const auto& [n, seeds] : plan) {
    for (int s = 1; s <= seeds; ++s) {
      for (const auto& lp : make_linear_suite(static_cast<std::uint64_t>(s), n, 10.0)) {
        out.push_back({fmt::format("linear-{}-n{}-s{}", lp.name, n, s), lp});
      }
    }
  }
  return out;
}

inline CertifyReport certify_gmres(double tolerance = 1e-8) {
  detail::Stopwatch clock;
  CertifyReport report{"gmres", {}, 0.0};
  oracles::EquivalenceOptions options;
  options.tolerance = tolerance;

  const auto add = [&](const std::string& name, const LinearProblem& lp) {
    const auto r = oracles::certify_gmres_equivalence(lp, Vector::Zero(lp.dim()), 4 * static_cast<std::size_t>(lp.dim()) + 10, options);
    std::string detail = fmt::format("steps={} combination={:.2e} step={:.2e}", r.steps_compared,
                                     r.combination_deviation, r.step_deviation);
    if (!r.note.empty()) detail += " (" + r.note + ")";
    report.checks.push_back({name, r.verdict, detail});
  };
  add("scalar-n1", make_scalar_problem(2.0, 1.0, 0.4));
  for (const auto& [label, lp] : gmres_bundle()) add(label, lp);
  // violates the no-stagnation hypothesis, so no verdict is possible
  add("stagnating-n8", make_stagnating_problem(8));
  report.seconds = clock.seconds();
  return report;
}

// Version-A Anderson step versus the type-II multisecant step on histories
// built from random points with f = g - id for a smooth nonlinear g.
inline CertifyReport certify_multisecant(std::size_t instances = 50, double tolerance = 1e-8) {
  detail::Stopwatch clock;
  CertifyReport report{"multisecant", {}, 0.0};
  for (std::size_t t = 0; t < instances; ++t) {
    std::mt19937_64 rng(1000 + t);
    std::uniform_int_distribution<int> ndist(3, 10);
    const Index n = ndist(rng);
    std::uniform_int_distribution<int> mdist(1, static_cast<int>(std::min<Index>(n - 1, 5)));
    const int m = mdist(rng);
    const Matrix w = 0.5 * apa::detail::gaussian_matrix(rng, n, n) / std::sqrt(static_cast<double>(n));
    const Vector shift = apa::detail::gaussian_vector(rng, n);
    const Map g = [w, shift](const Vector& x) -> Vector { return (w * x).array().tanh().matrix() + shift; };

    IterateHistory history(DiffMode::Successive, true);
    for (int i = 0; i <= m; ++i) {
      const Vector x = apa::detail::gaussian_vector(rng, n);
      const Vector gx = g(x);
      history.push(x, gx - x, gx);
    }
    const std::string name = fmt::format("instance-{:02} n={} m={}", t, n, m);
    try {
      const Vector anderson = extrapolate(history, solve_least_squares(history), Version::A, g);
      const Vector secant = oracles::multisecant_step(history, history.newest_error(), oracles::SecantType::II);
      const double dev = (anderson - secant).norm() / std::max(anderson.norm(), 1.0);
      const auto [y, s] = oracles::secant_matrices(history);
      const Matrix gm = oracles::multisecant_matrix(history, oracles::SecantType::II);
      const double secant_residual = (gm * s - y).norm() / std::max(y.norm(), 1.0);
      report.checks.push_back({name, detail::verdict(dev <= tolerance && secant_residual <= tolerance),
                               fmt::format("step deviation={:.2e} secant condition={:.2e}", dev, secant_residual)});
    } catch (const DegeneracyError& e) {
      report.checks.push_back({name, Verdict::Inconclusive, e.what()});
    }
  }
  report.seconds = clock.seconds();
  return report;
}

// The Lagrangian, gamma and alpha formulations on random error sets with
// p <= 32 and depth <= 6.
inline CertifyReport certify_coefficients(std::size_t instances = 100, double agreement = 1e-8, double sum_tol = 1e-12) {
  detail::Stopwatch clock;
  CertifyReport report{"coefficients", {}, 0.0};
  for (std::size_t t = 0; t < instances; ++t) {
    std::mt19937_64 rng(5000 + t);
    std::uniform_int_distribution<int> pdist(2, 32);
    const Index p = pdist(rng);
    std::uniform_int_distribution<int> mdist(0, static_cast<int>(std::min<Index>(p - 1, 6)));
    const int m = mdist(rng);
    IterateHistory oldest(DiffMode::FromOldest);
    IterateHistory successive(DiffMode::Successive);
    std::vector<Vector> errors;
    for (int i = 0; i <= m; ++i) {
      const Vector r = apa::detail::gaussian_vector(rng, p);
      oldest.push(Vector::Zero(1), r);
      successive.push(Vector::Zero(1), r);
      errors.push_back(r);
    }
    const auto lag = solve_lagrangian(errors).coefficients;
    const auto gam = solve_gamma(oldest);
    const auto alp = solve_alpha(successive);
    const double dev = std::max((gam.c - lag.c).cwiseAbs().maxCoeff(), (alp.c - lag.c).cwiseAbs().maxCoeff());
    const double sum_dev =
        std::max({std::abs(lag.sum() - 1.0), std::abs(gam.sum() - 1.0), std::abs(alp.sum() - 1.0)});
    report.checks.push_back({fmt::format("instance-{:03} p={} m={}", t, p, m),
                             detail::verdict(dev <= agreement && sum_dev <= sum_tol),
                             fmt::format("max coefficient gap={:.2e} max |sum - 1|={:.2e}", dev, sum_dev)});
  }
  report.seconds = clock.seconds();
  return report;
}

struct LabeledSCF {
  std::string label;
  ToySCFProblem problem;
  std::uint64_t seed;
  double difficulty;
};

// d in {4, 6, 8}, N in {1, 2, 3}, three difficulty levels, two seeds.
inline std::vector<LabeledSCF> scf_bundle() {
  std::vector<LabeledSCF> out;
  for (Index d : {4, 6, 8}) {
    for (int n : {1, 2, 3}) {
      for (double difficulty : {0.1, 0.3, 0.5}) {
        for (std::uint64_t seed : {1, 2}) {
          out.push_back({fmt::format("scf-d{}-N{}-t{}-s{}", d, n, difficulty, seed),
                         make_toy_scf(seed, d, n, difficulty), seed, difficulty});
        }
      }
    }
  }
  return out;
}

struct BaselineFit {
  bool contracts = false;
  double rate = kNaN;  // regression estimate of K
  std::size_t iterations = 0;
};

// Plain Roothaan (fixed depth 0) from the core guess; the instance counts as
// contractive when it converges within max_iter with a fitted rate below one.
inline BaselineFit scf_baseline(const ToySCFProblem& scf, double tol = 1e-8, std::size_t max_iter = 200) {
  const auto run = accelerate(scf.as_problem(), scf.flatten(scf.core_guess()), tol, FixedDepth{0}, Version::P, max_iter);
  BaselineFit fit;
  fit.iterations = run.iterations();
  try {
    fit.rate = convergence_rate(run.trace);
  } catch (const InputError&) {
  }
  fit.contracts = run.converged() && fit.rate < 1.0;
  return fit;
}

inline std::vector<DepthPolicy> scf_policies(Index p) {
  return {FixedDepth{0},
          FixedDepth{8},
          Restarted{1e-4},
          AdaptiveDepth{1e-4},
          SuperRestarted{1.0, 1.0 / (2.0 * static_cast<double>(p) + 1.0)},
          SuperAdaptive{1.0, max_super_adaptive_xi()}};
}

// Every version-P iterate must be an Aufbau density (DSD = D, tr(SD) = N),
// and runs on instances whose baseline contracts must reach the tolerance.
inline CertifyReport certify_scf_manifold(double manifold_tol = 1e-10, double tol = 1e-8, std::size_t max_iter = 200) {
  detail::Stopwatch clock;
  CertifyReport report{"scf-manifold", {}, 0.0};
  for (const auto& inst : scf_bundle()) {
    const auto& scf = inst.problem;
    const BaselineFit baseline = scf_baseline(scf, tol, max_iter);
    const Problem problem = scf.as_problem();
    const Vector x0 = scf.flatten(scf.core_guess());
    DriverOptions options;
    options.max_iter = max_iter;
    options.record_iterates = true;
    for (const auto& policy : scf_policies(problem.p)) {
      const auto run = accelerate(problem, x0, tol, policy, Version::P, options);
      double idem = 0.0;
      double trace_gap = 0.0;
      for (const auto& x : run.trace.iterates) {
        const Matrix density = scf.unflatten(x);
        idem = std::max(idem, scf.idempotency_defect(density));
        trace_gap = std::max(trace_gap, scf.trace_defect(density));
      }
      const bool on_manifold = idem <= manifold_tol && trace_gap <= manifold_tol;
      const bool must_converge = baseline.contracts;
      const bool ok = on_manifold && (!must_converge || run.converged());
      std::string detail = fmt::format("iterates={} max|DSD-D|={:.1e} max|tr(SD)-N|={:.1e} {} in {} steps",
                                       run.trace.iterates.size(), idem, trace_gap, to_string(run.status),
                                       run.iterations());
      if (!must_converge) detail += fmt::format(" (baseline K={:.3f} does not contract; convergence not required)", baseline.rate);
      report.checks.push_back({fmt::format("{} {}", inst.label, describe(policy)), detail::verdict(ok), detail});
    }
  }
  report.seconds = clock.seconds();
  return report;
}

// Restarted(1e-4) and Adaptive(1e-4) against plain Roothaan on every
// instance of the bundle whose baseline contracts: no more iterations, a
// fitted rate no worse than the baseline's, and for the adaptive variant a
// mean depth no larger than the depth of the Fixed(8) comparison run.
inline CertifyReport compare_scf_acceleration(double tol = 1e-8, std::size_t max_iter = 200,
                                              std::size_t fixed_depth = 8) {
  detail::Stopwatch clock;
  CertifyReport report{"scf-acceleration", {}, 0.0};
  for (const auto& inst : scf_bundle()) {
    const auto& scf = inst.problem;
    const BaselineFit baseline = scf_baseline(scf, tol, max_iter);
    if (!baseline.contracts) continue;
    const Problem problem = scf.as_problem();
    const Vector x0 = scf.flatten(scf.core_guess());
    const auto fixed = accelerate(problem, x0, tol, FixedDepth{fixed_depth}, Version::P, max_iter);
    for (const DepthPolicy& policy : {DepthPolicy{Restarted{1e-4}}, DepthPolicy{AdaptiveDepth{1e-4}}}) {
      const auto run = accelerate(problem, x0, tol, policy, Version::P, max_iter);
      double rate = kNaN;
      try {
        rate = convergence_rate(run.trace);
      } catch (const InputError&) {
      }
      const double depth = mean_depth(run.trace);
      bool ok = run.converged() && run.iterations() <= baseline.iterations && rate <= baseline.rate;
      if (is_adaptive_policy(policy)) ok = ok && depth <= static_cast<double>(fixed_depth);
      report.checks.push_back(
          {fmt::format("{} {}", inst.label, describe(policy)), detail::verdict(ok),
           fmt::format("iterations {} vs baseline {} (fixed-{}: {}), rate {:.3f} vs K={:.3f}, mean depth {:.2f}",
                       run.iterations(), baseline.iterations, fixed_depth, fixed.iterations(), rate, baseline.rate,
                       depth)});
    }
  }
  report.seconds = clock.seconds();
  return report;
}

inline const std::vector<std::string>& certify_suites() {
  static const std::vector<std::string> suites{"gmres", "multisecant", "coefficients", "scf-manifold"};
  return suites;
}

inline CertifyReport certify(const std::string& suite) {
  if (suite == "gmres") return certify_gmres();
  if (suite == "multisecant") return certify_multisecant();
  if (suite == "coefficients") return certify_coefficients();
  if (suite == "scf-manifold") return certify_scf_manifold();
  throw InputError(fmt::format("unknown certification suite '{}'", suite));
}

}  // namespace apa::harness
