#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <fmt/format.h>

#include "apa/core.hpp"
#include "apa/driver.hpp"
#include "apa/problems/linear.hpp"

namespace apa::oracles {

struct GmresResult {
  // x^(0) .. x^(steps) and the matching true residual norms ||b - A x^(j)||.
  std::vector<Vector> iterates;
  std::vector<double> residual_norms;
  bool converged = false;
  bool breakdown = false;  // Arnoldi found an invariant subspace: x^(steps) is exact
  std::optional<std::size_t> stagnation_step;

  std::size_t steps() const { return iterates.empty() ? 0 : iterates.size() - 1; }
};

// Relative decrease below which a GMRES step counts as stagnating.
inline constexpr double stagnation_threshold = 1e-14;

// Textbook full-memory GMRES: Arnoldi with modified Gram-Schmidt (two passes)
// and a dense least-squares solve of the Hessenberg system at every step.
inline GmresResult gmres_full(const Matrix& a, const Vector& b, const Vector& x0, std::size_t k_max, double tol) {
  const Index n = a.rows();
  if (a.cols() != n) throw InputError("gmres_full: A must be square");
  require_size(b, n, "gmres_full: b");
  require_size(x0, n, "gmres_full: x0");

  GmresResult out;
  const Vector r0 = b - a * x0;
  const double beta = r0.norm();
  out.iterates.push_back(x0);
  out.residual_norms.push_back(beta);
  if (beta <= tol) {
    out.converged = true;
    return out;
  }

  const auto max_steps = static_cast<Index>(std::min<std::size_t>(k_max, static_cast<std::size_t>(n)));
  Matrix basis = Matrix::Zero(n, max_steps + 1);
  Matrix hess = Matrix::Zero(max_steps + 1, max_steps);
  basis.col(0) = r0 / beta;

  for (Index j = 0; j < max_steps; ++j) {
    Vector w = a * basis.col(j);
    const double w_norm = w.norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (Index i = 0; i <= j; ++i) {
        const double h = basis.col(i).dot(w);
        hess(i, j) += h;
        w -= h * basis.col(i);
      }
    }
    const double h_next = w.norm();
    hess(j + 1, j) = h_next;
    const bool breakdown = h_next <= 1e-14 * std::max(w_norm, 1.0);
    if (!breakdown) basis.col(j + 1) = w / h_next;

    const Index cols = j + 1;
    Vector rhs = Vector::Zero(cols + 1);
    rhs(0) = beta;
    const Vector y = hess.topLeftCorner(cols + 1, cols).householderQr().solve(rhs);
    const Vector x = x0 + basis.leftCols(cols) * y;
    const double res = (b - a * x).norm();

    const double prev = out.residual_norms.back();
    out.iterates.push_back(x);
    out.residual_norms.push_back(res);
    if (res <= tol) {
      out.converged = true;
      return out;
    }
    if (!out.stagnation_step && prev - res < stagnation_threshold * prev) {
      out.stagnation_step = static_cast<std::size_t>(cols);
    }
    if (breakdown) {
      out.breakdown = true;
      out.converged = true;
      return out;
    }
  }
  return out;
}

enum class Verdict { Pass, Fail, Inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

struct EquivalenceReport {
  Verdict verdict = Verdict::Inconclusive;
  // max_k ||x_GMRES^(k) - sum_i c_i^(k) x_DIIS^(i)|| / ||x_GMRES^(k)||
  double combination_deviation = 0.0;
  // max_k ||x_DIIS^(k+1) - g(x_GMRES^(k))|| / ||x_DIIS^(k+1)||
  double step_deviation = 0.0;
  std::size_t steps_compared = 0;
  std::string note;
};

struct EquivalenceOptions {
  double tolerance = 1e-8;
  // Comparison stops once the DIIS residual reaches this level.
  double residual_floor = 1e-10;
};

namespace detail {

inline double relative_gap(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale > 0.0 ? (a - b).norm() / scale : 0.0;
}

}  // namespace detail

// Runs full-history DIIS (version A) and full GMRES from the same start and
// measures how far the iterates are from the two identities linking them on
// linear problems: the GMRES iterate is the DIIS combination of past DIIS
// iterates, and the next DIIS iterate is g of the GMRES iterate.
inline EquivalenceReport certify_gmres_equivalence(const LinearProblem& problem, const Vector& x0,
                                                   std::size_t k_max, const EquivalenceOptions& options = {}) {
  EquivalenceReport report;
  const Problem fp = problem.as_problem();

  // DIIS residuals are beta (b - A x); stop GMRES at the matching level.
  const auto gmres =
      gmres_full(problem.a, problem.b, x0, k_max, options.residual_floor / std::abs(problem.beta));

  DriverOptions driver_options;
  driver_options.max_iter = k_max;
  driver_options.record_iterates = true;
  const RunResult diis = accelerate(fp, x0, options.residual_floor, FixedDepth{FixedDepth::unbounded},
                                    Version::A, driver_options);

  const Trace& trace = diis.trace;
  const std::size_t diis_steps = trace.size() - 1;
  const std::size_t compare = std::min(diis_steps, gmres.steps() + 1);
  if (gmres.stagnation_step && *gmres.stagnation_step < compare) {
    report.verdict = Verdict::Inconclusive;
    report.note = fmt::format("GMRES stagnates at step {}", *gmres.stagnation_step);
    return report;
  }

  for (std::size_t k = 0; k < compare; ++k) {
    if (trace.rows[k].depth != k) {
      report.verdict = Verdict::Inconclusive;
      report.note = fmt::format("DIIS history shrank at step {} (singular least-squares problem)", k);
      return report;
    }
    if (k > gmres.steps()) break;
    const Vector& x_gmres = gmres.iterates[k];
    const Coefficients& c = trace.coefficients[k];
    Vector combination = Vector::Zero(x0.size());
    for (std::size_t i = 0; i <= k; ++i) combination += c.c(static_cast<Index>(i)) * trace.iterates[i];
    report.combination_deviation =
        std::max(report.combination_deviation, detail::relative_gap(x_gmres, combination));
    report.step_deviation =
        std::max(report.step_deviation, detail::relative_gap(trace.iterates[k + 1], fp.g(x_gmres)));
    ++report.steps_compared;
  }

  if (report.steps_compared == 0) {
    report.verdict = Verdict::Inconclusive;
    report.note = "nothing to compare: initial residual already below the floor";
    return report;
  }
  const bool ok = report.combination_deviation <= options.tolerance && report.step_deviation <= options.tolerance;
  report.verdict = ok ? Verdict::Pass : Verdict::Fail;
  if (!diis.converged()) report.note = fmt::format("DIIS run ended with status {}", to_string(diis.status));
  return report;
}

}  // namespace apa::oracles
