#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "apa/coefficients.hpp"
#include "apa/core.hpp"
#include "apa/history.hpp"
#include "apa/policy.hpp"
#include "apa/trace.hpp"

namespace apa {

using Map = std::function<Vector(const Vector&)>;

// A fixed-point map g : R^n -> R^n and an error map f : R^n -> R^p vanishing
// at the fixed point. manifold_distance, when set, measures how far a state is
// from the set g maps into (diagnostic only).
struct Problem {
  Index n = 0;
  Index p = 0;
  Map g;
  Map f;
  std::function<double(const Vector&)> manifold_distance;
};

// A: x_{k+1} = sum c_i g(x_i).  P: x_{k+1} = g(sum c_i x_i).
enum class Version { A, P };

inline const char* to_string(Version v) { return v == Version::A ? "A" : "P"; }

enum class RunStatus { Converged, MaxIterations, Diverged, Aborted };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "converged";
    case RunStatus::MaxIterations: return "max-iterations";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Aborted: return "aborted";
  }
  return "unknown";
}

struct DriverOptions {
  std::size_t max_iter = 500;
  // Keep x^(k), r^(k) and c^(k) in the trace.
  bool record_iterates = false;
  // Use the bordered Lagrangian system instead of the QR alpha-form for the
  // fixed-depth policy (classic DIIS).
  bool lagrangian_for_fixed = false;
  SolverOptions solver;
};

struct RunResult {
  Vector x;
  Trace trace;
  RunStatus status = RunStatus::MaxIterations;
  std::string message;

  bool converged() const { return status == RunStatus::Converged; }
  std::size_t iterations() const { return trace.empty() ? 0 : trace.back().k; }
};

// New iterate from the stored window and constrained weights.
inline Vector extrapolate(const IterateHistory& history, const Coefficients& coeffs, Version version,
                          const Map& g) {
  if (static_cast<Index>(history.size()) != coeffs.c.size()) {
    throw InputError("extrapolate: coefficient count does not match history size");
  }
  if (version == Version::A) {
    if (!history.stores_g_values()) throw InputError("extrapolate: version A needs stored g values");
    Vector out = Vector::Zero(history.state_dim());
    for (std::size_t i = 0; i < history.size(); ++i) out += coeffs.c(static_cast<Index>(i)) * history.g_value(i);
    return out;
  }
  Vector combined = Vector::Zero(history.state_dim());
  for (std::size_t i = 0; i < history.size(); ++i) combined += coeffs.c(static_cast<Index>(i)) * history.iterate(i);
  return g(combined);
}

namespace detail {

struct SolveOutcome {
  Coefficients coeffs;
  bool reset = false;
};

inline SolveOutcome solve_for_policy(IterateHistory& history, const DepthPolicy& policy,
                                     const DriverOptions& options) {
  const bool fixed = std::holds_alternative<FixedDepth>(policy);
  const auto origin = history.mode() == DiffMode::FromOldest ? Parametrization::GammaForm
                                                             : Parametrization::AlphaForm;
  SolveOutcome out;
  for (;;) {
    if (history.depth() == 0) {
      out.coeffs = trivial_coefficients(origin);
      return out;
    }
    try {
      if (fixed && options.lagrangian_for_fixed) {
        out.coeffs = solve_lagrangian(history.errors()).coefficients;
      } else {
        out.coeffs = solve_least_squares(history, options.solver);
      }
      return out;
    } catch (const DegeneracyError&) {
      out.reset = true;
      // classic DIIS drops the oldest vector and retries; the adaptive
      // variants restart from the newest iterate
      history.truncate_oldest(fixed ? history.depth() : 1);
    }
  }
}

}  // namespace detail

// Anderson-Pulay acceleration of the fixed-point iteration x <- g(x), with the
// depth of the stored window driven by `policy`. Stops once ||f(x_k)|| <= tol
// or after options.max_iter steps. Non-finite iterates end the run with
// RunStatus::Diverged and a WellPosednessError raised by the maps ends it with
// RunStatus::Aborted; the trace up to that point is kept in both cases.
inline RunResult accelerate(const Problem& problem, const Vector& x0, double tol, const DepthPolicy& policy,
                            Version version, const DriverOptions& options = {}) {
  if (!(tol >= 0.0)) throw InputError("accelerate: tol must be non-negative");
  if (!problem.g || !problem.f) throw InputError("accelerate: problem maps are not set");
  require_size(x0, problem.n, "accelerate: x0");
  validate(policy, problem.p);

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto elapsed = [&start] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
  };

  RunResult result;
  Trace& trace = result.trace;
  const bool keep_g = version == Version::A;
  IterateHistory history(diff_mode_for(policy), keep_g);
  std::vector<double> norms;

  const auto evaluate = [&](const Vector& x, Vector& r, std::optional<Vector>& gx) {
    r = problem.f(x);
    require_size(r, problem.p, "accelerate: f(x)");
    if (keep_g) gx = problem.g(x);
    return all_finite(r) && (!gx || all_finite(*gx));
  };

  try {
    Vector x = x0;
    Vector r;
    std::optional<Vector> gx;
    if (!all_finite(x) || !evaluate(x, r, gx)) {
      result.x = x;
      result.status = RunStatus::Diverged;
      result.message = "non-finite initial error";
      return result;
    }
    history.push(x, r, gx);
    norms.push_back(r.norm());
    trace.rows.push_back(TraceRow{0, norms.back(), 0, ResetKind::None, kNaN, kNaN, elapsed(), kNaN, kNaN});
    if (options.record_iterates) {
      trace.iterates.push_back(x);
      trace.errors.push_back(r);
    }

    std::size_t k = 0;
    result.x = x;
    while (norms[k] > tol) {
      if (k >= options.max_iter) {
        result.status = RunStatus::MaxIterations;
        return result;
      }
      TraceRow& current = trace.rows[k];
      auto solved = detail::solve_for_policy(history, policy, options);
      if (solved.reset) {
        current.reset = ResetKind::Degenerate;
        current.depth = history.depth();
      }
      current.coeff_inf_norm = solved.coeffs.inf_norm();
      if (options.record_iterates) trace.coefficients.push_back(solved.coeffs);

      const Vector x_next = extrapolate(history, solved.coeffs, version, problem.g);
      Vector r_next;
      std::optional<Vector> g_next;
      if (!all_finite(x_next) || !evaluate(x_next, r_next, g_next)) {
        result.status = RunStatus::Diverged;
        result.message = fmt::format("non-finite iterate at step {}", k + 1);
        return result;
      }
      const double norm_next = r_next.norm();
      const std::size_t m = history.depth();

      TraceRow row{k + 1, norm_next, 0, ResetKind::None, kNaN, kNaN, 0, kNaN, kNaN};
      if (const auto* fixed = std::get_if<FixedDepth>(&policy)) {
        history.push(x_next, r_next, g_next);
        const std::size_t cap = fixed->max_depth;
        if (history.depth() > cap) history.truncate_oldest(cap + 1);
      } else if (is_restart_policy(policy)) {
        const Vector s = r_next - history.oldest_error();
        const ProjectionGap pg = history.residual_projection_gap(s);
        row.effective_param = restart_parameter(policy, norms[k - m]);
        row.projection_gap = pg.gap;
        row.diff_norm = pg.norm;
        // with no stored differences the projector is zero: always grow
        const bool restart = m > 0 && restart_fires(row.effective_param, pg);
        if (restart) {
          history.clear();
          row.reset = ResetKind::RestartTest;
        }
        history.push(x_next, r_next, g_next);
      } else {
        history.push(x_next, r_next, g_next);
        std::size_t keep = 0;
        while (keep <= m && retains(policy, norms[k - keep], norm_next)) ++keep;
        history.truncate_oldest(keep + 1);
        row.effective_param = adaptive_parameter(policy, norms[k + 1 - std::max<std::size_t>(keep, 1)]);
      }
      row.depth = history.depth();
      row.elapsed_ns = elapsed();

      norms.push_back(norm_next);
      trace.rows.push_back(row);
      if (options.record_iterates) {
        trace.iterates.push_back(x_next);
        trace.errors.push_back(r_next);
      }
      result.x = x_next;
      ++k;
    }
    result.status = RunStatus::Converged;
  } catch (const WellPosednessError& e) {
    result.status = RunStatus::Aborted;
    result.message = e.what();
  }
  return result;
}

inline RunResult accelerate(const Problem& problem, const Vector& x0, double tol, const DepthPolicy& policy,
                            Version version, std::size_t max_iter) {
  DriverOptions options;
  options.max_iter = max_iter;
  return accelerate(problem, x0, tol, policy, version, options);
}

struct ReplayReport {
  std::size_t transitions = 0;
  std::size_t restarts = 0;
  std::vector<std::string> mismatches;

  bool ok() const { return mismatches.empty(); }
};

// Recompute every depth decision (restart test outcomes, adaptive retention
// windows, effective parameters) from the logged residual norms, projection
// gaps and difference norms, and compare with what the run recorded. The
// comparisons are exact: replay evaluates the same expressions as the driver.
inline ReplayReport replay_depth_decisions(const std::vector<TraceRow>& rows, const DepthPolicy& policy) {
  ReplayReport report;
  const auto fail = [&report](std::size_t k, const std::string& what) {
    report.mismatches.push_back(fmt::format("row {}: {}", k, what));
  };
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    const TraceRow& prev = rows[k];
    const TraceRow& row = rows[k + 1];
    ++report.transitions;
    if (row.k != prev.k + 1) fail(k + 1, "iteration index not consecutive");
    const std::size_t m = prev.depth;
    if (m > prev.k) {
      fail(k, "depth exceeds iteration index");
      continue;
    }
    std::size_t predicted = 0;

    if (const auto* fixed = std::get_if<FixedDepth>(&policy)) {
      predicted = std::min(m + 1, fixed->max_depth);
      if (row.reset == ResetKind::RestartTest) fail(k + 1, "restart flag under fixed depth");
    } else if (is_restart_policy(policy)) {
      const double tau = restart_parameter(policy, rows[k - m].residual_norm);
      if (!(tau == row.effective_param)) {
        fail(k + 1, fmt::format("effective parameter {} != replayed {}", row.effective_param, tau));
      }
      const bool fires = m > 0 && restart_fires(tau, ProjectionGap{row.projection_gap, row.diff_norm});
      if (fires != (row.reset == ResetKind::RestartTest)) {
        fail(k + 1, fmt::format("restart flag {} but replayed test gives {}", static_cast<int>(row.reset), fires));
      }
      if (fires) ++report.restarts;
      predicted = fires ? 0 : m + 1;
    } else {
      std::size_t keep = 0;
      while (keep <= m && retains(policy, rows[k - keep].residual_norm, row.residual_norm)) ++keep;
      predicted = keep;
      const double delta = adaptive_parameter(policy, rows[k + 1 - std::max<std::size_t>(keep, 1)].residual_norm);
      if (!(delta == row.effective_param)) {
        fail(k + 1, fmt::format("effective parameter {} != replayed {}", row.effective_param, delta));
      }
    }

    if (row.reset == ResetKind::Degenerate) {
      // the singular solve happened after the depth decision
      const bool fixed = std::holds_alternative<FixedDepth>(policy);
      if (fixed ? !(row.depth < predicted) : row.depth != 0) {
        fail(k + 1, fmt::format("degenerate reset to depth {} from predicted {}", row.depth, predicted));
      }
    } else if (row.depth != predicted) {
      fail(k + 1, fmt::format("depth {} but replay predicts {}", row.depth, predicted));
    }
  }
  return report;
}

inline ReplayReport replay_depth_decisions(const Trace& trace, const DepthPolicy& policy) {
  return replay_depth_decisions(trace.rows, policy);
}

}  // namespace apa
