#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include "apa/core.hpp"
#include "apa/history.hpp"

namespace apa::oracles {

// Type II: inverse-Jacobian estimate G = -I + (Y + S)(S^T S)^{-1} S^T (Broyden's second method family).
// Type I:  B^{-1} = -I + (Y + S)(Y^T S)^{-1} Y^T (inverse of the Broyden-first multisecant update).
enum class SecantType { I, II };

struct SecantMatrices {
  Matrix y;  // successive iterate differences, n x m
  Matrix s;  // successive error differences, p x m
};

inline SecantMatrices secant_matrices(const IterateHistory& history) {
  const Index m = static_cast<Index>(history.depth());
  SecantMatrices out{Matrix(history.state_dim(), m), Matrix(history.error_dim(), m)};
  for (Index j = 0; j < m; ++j) {
    const auto i = static_cast<std::size_t>(j) + 1;
    out.y.col(j) = history.iterate(i) - history.iterate(i - 1);
    out.s.col(j) = history.error(i) - history.error(i - 1);
  }
  return out;
}

// Relative column-pivoted QR threshold for declaring S (or Y^T S) rank deficient.
inline constexpr double secant_rank_threshold = 1e-12;

// x_k - G r_k with G built from the history's iterate and error differences.
// Requires square residuals (n == p).
inline Vector multisecant_step(const IterateHistory& history, const Vector& r_k, SecantType type) {
  if (history.empty()) throw InputError("multisecant_step: empty history");
  if (history.state_dim() != history.error_dim()) {
    throw InputError("multisecant_step: quasi-Newton identification needs n == p");
  }
  require_size(r_k, history.error_dim(), "multisecant_step: r_k");
  const Vector& x_k = history.iterate(history.size() - 1);
  if (history.depth() == 0) return x_k + r_k;  // G = -I

  const auto [y, s] = secant_matrices(history);
  const Index m = s.cols();
  Vector weights;
  if (type == SecantType::II) {
    Eigen::ColPivHouseholderQR<Matrix> rank_check(s);
    rank_check.setThreshold(secant_rank_threshold);
    if (rank_check.rank() < m) throw DegeneracyError("multisecant_step: error differences are rank deficient");
    const Matrix normal = s.transpose() * s;
    weights = normal.ldlt().solve(s.transpose() * r_k);
  } else {
    const Matrix cross = y.transpose() * s;
    Eigen::FullPivLU<Matrix> lu(cross);
    lu.setThreshold(secant_rank_threshold);
    if (!lu.isInvertible()) throw DegeneracyError("multisecant_step: Y^T S is singular");
    weights = lu.solve(y.transpose() * r_k);
  }
  if (!weights.allFinite()) throw DegeneracyError("multisecant_step: non-finite secant weights");
  // x_k - G r_k = x_k + r_k - (Y + S) w
  return x_k + r_k - (y + s) * weights;
}

// Dense inverse-Jacobian estimate, for checking secant conditions in tests.
inline Matrix multisecant_matrix(const IterateHistory& history, SecantType type) {
  const auto [y, s] = secant_matrices(history);
  const Index n = history.state_dim();
  Matrix out = -Matrix::Identity(n, n);
  if (s.cols() == 0) return out;
  if (type == SecantType::II) {
    const Matrix normal = s.transpose() * s;
    out += (y + s) * normal.ldlt().solve(s.transpose());
  } else {
    out += (y + s) * (y.transpose() * s).fullPivLu().solve(y.transpose());
  }
  return out;
}

// d_l = distance from r_l to the affine hull of r_0 .. r_{l-1}, l = 1 .. m,
// via orthogonal projection of r_l - r_0 onto span{r_i - r_0, 0 < i < l}.
template <typename Errors>
std::vector<double> affine_independence_diagnostics(const Errors& errors) {
  std::vector<Vector> list(std::begin(errors), std::end(errors));
  if (list.size() < 2) throw InputError("affine_independence_diagnostics: need at least two error vectors");
  const Index p = list.front().size();
  std::vector<double> out;
  for (std::size_t l = 1; l < list.size(); ++l) {
    require_size(list[l], p, "affine_independence_diagnostics");
    const Vector target = list[l] - list[0];
    if (l == 1) {
      out.push_back(target.norm());
      continue;
    }
    Matrix span(p, static_cast<Index>(l - 1));
    for (std::size_t i = 1; i < l; ++i) span.col(static_cast<Index>(i - 1)) = list[i] - list[0];
    const Vector coeff = span.colPivHouseholderQr().solve(target);
    out.push_back((target - span * coeff).norm());
  }
  return out;
}

}  // namespace apa::oracles
