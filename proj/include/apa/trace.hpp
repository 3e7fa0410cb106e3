#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "apa/coefficients.hpp"
#include "apa/core.hpp"

namespace apa {

// Why the depth dropped to a smaller value than the policy's regular rule.
enum class ResetKind : int {
  None = 0,
  RestartTest = 1,  // the restart test fired when deciding this row's depth
  Degenerate = 2,   // the coefficient solve was singular and the history shrank
};

// One record per iterate x^(k). Quantities describing the depth decision that
// produced m_k (reset, effective_param, projection_gap, diff_norm) live on row
// k; coeff_inf_norm is the norm of the weights used to build x^(k+1) and is
// NaN on the last row.
struct TraceRow {
  std::size_t k = 0;
  double residual_norm = 0.0;
  std::size_t depth = 0;
  ResetKind reset = ResetKind::None;
  double coeff_inf_norm = kNaN;
  double effective_param = kNaN;
  std::int64_t elapsed_ns = 0;
  double projection_gap = kNaN;
  double diff_norm = kNaN;
};

struct Trace {
  std::vector<TraceRow> rows;
  // Filled only when the driver is asked to record them.
  std::vector<Vector> iterates;
  std::vector<Vector> errors;
  std::vector<Coefficients> coefficients;

  bool empty() const { return rows.empty(); }
  std::size_t size() const { return rows.size(); }
  const TraceRow& back() const { return rows.back(); }

  std::vector<double> residual_norms() const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row.residual_norm);
    return out;
  }
};

inline double mean_depth(const Trace& trace) {
  if (trace.empty()) throw InputError("mean_depth: empty trace");
  double total = 0.0;
  for (const auto& row : trace.rows) total += static_cast<double>(row.depth);
  return total / static_cast<double>(trace.size());
}

struct Window {
  std::size_t begin = 0;
  std::size_t end = std::numeric_limits<std::size_t>::max();  // exclusive
};

// Per-step contraction factor exp(slope) of a least-squares line through
// (k, log ||r_k||). The window stops before the first zero residual.
inline double convergence_rate(const std::vector<double>& norms, Window window = {}) {
  const std::size_t end = std::min(window.end, norms.size());
  std::vector<double> ks;
  std::vector<double> logs;
  for (std::size_t k = window.begin; k < end; ++k) {
    if (!(norms[k] > 0.0)) break;
    ks.push_back(static_cast<double>(k));
    logs.push_back(std::log(norms[k]));
  }
  if (ks.size() < 3) throw InputError("convergence_rate: need at least 3 positive residuals in window");
  const double count = static_cast<double>(ks.size());
  double mean_k = 0.0;
  double mean_l = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    mean_k += ks[i];
    mean_l += logs[i];
  }
  mean_k /= count;
  mean_l /= count;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    sxy += (ks[i] - mean_k) * (logs[i] - mean_l);
    sxx += (ks[i] - mean_k) * (ks[i] - mean_k);
  }
  return std::exp(sxy / sxx);
}

inline double convergence_rate(const Trace& trace, Window window = {}) {
  return convergence_rate(trace.residual_norms(), window);
}

// log||r_{k+1}|| / log||r_k|| for consecutive residuals below one; tends to
// the r-order on superlinearly converging runs. Diagnostic only.
inline std::vector<double> log_residual_ratios(const Trace& trace) {
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < trace.size(); ++k) {
    const double a = trace.rows[k].residual_norm;
    const double b = trace.rows[k + 1].residual_norm;
    if (a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) out.push_back(std::log(b) / std::log(a));
  }
  return out;
}

// m_k <= min(k, p) on every row.
inline bool depth_bound_holds(const Trace& trace, std::size_t p) {
  return std::all_of(trace.rows.begin(), trace.rows.end(),
                     [p](const TraceRow& row) { return row.depth <= std::min(row.k, p); });
}

}  // namespace apa
