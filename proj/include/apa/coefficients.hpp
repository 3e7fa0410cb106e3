#pragma once

#include <algorithm>
#include <cstddef>
#include <string>

#include <Eigen/LU>

#include "apa/core.hpp"
#include "apa/history.hpp"

namespace apa {

enum class Parametrization { Lagrangian, GammaForm, AlphaForm, Theta };

// Extrapolation weights in the constrained form: sum(c) == 1 and the new
// iterate is built from sum_i c_i * (x_i or g(x_i)), oldest first.
struct Coefficients {
  Vector c;
  Parametrization origin = Parametrization::Lagrangian;

  std::size_t depth() const { return c.size() == 0 ? 0 : static_cast<std::size_t>(c.size()) - 1; }
  double sum() const { return c.sum(); }
  double inf_norm() const { return c.size() == 0 ? 0.0 : c.cwiseAbs().maxCoeff(); }
};

struct LagrangianSolution {
  Coefficients coefficients;
  double lambda = 0.0;
};

struct SolverOptions {
  // Relative cutoff on the diagonal of R below which the difference matrix is
  // declared rank deficient.
  double rank_cutoff = 1e-14;
};

inline Coefficients trivial_coefficients(Parametrization origin) {
  return {Vector::Ones(1), origin};
}

// c_i = theta_{i+1} for i < m, c_m = 1 - sum(theta).
inline Coefficients from_theta(const Vector& theta) {
  const Index m = theta.size();
  Coefficients out{Vector(m + 1), Parametrization::Theta};
  out.c.head(m) = theta;
  out.c(m) = 1.0 - theta.sum();
  return out;
}

// gamma_i = c_i for i >= 1, c_0 = 1 - sum(gamma).
inline Coefficients from_gamma(const Vector& gamma) {
  const Index m = gamma.size();
  Coefficients out{Vector(m + 1), Parametrization::GammaForm};
  out.c(0) = 1.0 - gamma.sum();
  out.c.tail(m) = gamma;
  return out;
}

// alpha_i = c_0 + ... + c_{i-1}.
inline Coefficients from_alpha(const Vector& alpha) {
  const Index m = alpha.size();
  Coefficients out{Vector(m + 1), Parametrization::AlphaForm};
  if (m == 0) {
    out.c(0) = 1.0;
    return out;
  }
  out.c(0) = alpha(0);
  for (Index i = 1; i < m; ++i) out.c(i) = alpha(i) - alpha(i - 1);
  out.c(m) = 1.0 - alpha(m - 1);
  return out;
}

inline Vector to_alpha(const Coefficients& coeffs) {
  const Index m = coeffs.c.size() - 1;
  Vector alpha(m);
  double partial = 0.0;
  for (Index i = 0; i < m; ++i) {
    partial += coeffs.c(i);
    alpha(i) = partial;
  }
  return alpha;
}

// ||sum_i c_i r_i||_2 over an ordered container of error vectors.
template <typename Errors>
double combined_error_norm(const Errors& errors, const Coefficients& coeffs) {
  if (static_cast<Index>(std::size(errors)) != coeffs.c.size()) {
    throw InputError("combined_error_norm: coefficient count does not match error count");
  }
  Vector sum = Vector::Zero(std::begin(errors)->size());
  Index i = 0;
  for (const auto& r : errors) sum += coeffs.c(i++) * r;
  return sum.norm();
}

// Bordered normal-equations system with Gramian b_ij = <r_j, r_i> and a -1
// border; returns c and the multiplier lambda as they come out of the system.
template <typename Errors>
LagrangianSolution solve_lagrangian(const Errors& errors) {
  const auto count = static_cast<Index>(std::size(errors));
  if (count == 0) throw InputError("solve_lagrangian: no error vectors");
  const Index p = std::begin(errors)->size();
  Matrix stacked(p, count);
  Index j = 0;
  for (const auto& r : errors) {
    require_size(r, p, "solve_lagrangian");
    stacked.col(j++) = r;
  }
  const Matrix gram = stacked.transpose() * stacked;
  // Rescale so the Gramian and the unit border have comparable magnitude.
  const double scale = gram.diagonal().maxCoeff();
  if (!(scale > 0.0)) throw DegeneracyError("solve_lagrangian: all error vectors vanish");

  Matrix bordered = Matrix::Zero(count + 1, count + 1);
  bordered.topLeftCorner(count, count) = gram / scale;
  bordered.col(count).head(count).setConstant(-1.0);
  bordered.row(count).head(count).setConstant(-1.0);
  Vector rhs = Vector::Zero(count + 1);
  rhs(count) = -1.0;

  Eigen::FullPivLU<Matrix> lu(bordered);
  if (!lu.isInvertible()) throw DegeneracyError("solve_lagrangian: singular bordered system");
  const Vector sol = lu.solve(rhs);
  if (!sol.allFinite()) throw DegeneracyError("solve_lagrangian: non-finite solution");

  LagrangianSolution out;
  out.coefficients = {sol.head(count), Parametrization::Lagrangian};
  out.lambda = sol(count) * scale;
  return out;
}

namespace detail {

inline void check_triangular_rank(const Matrix& r, double cutoff, const char* who) {
  if (r.rows() < r.cols()) {
    throw DegeneracyError(std::string(who) + ": more difference columns than error dimensions");
  }
  const Vector diag = r.diagonal().cwiseAbs();
  const double largest = diag.maxCoeff();
  if (!(largest > 0.0) || diag.minCoeff() < cutoff * largest) {
    throw DegeneracyError(std::string(who) + ": rank-deficient difference matrix");
  }
}

}  // namespace detail

// min_gamma ||r_0 + sum_i gamma_i (r_i - r_0)||_2 through the stored QR.
inline Coefficients solve_gamma(const IterateHistory& history, const SolverOptions& options = {}) {
  if (history.mode() != DiffMode::FromOldest) {
    throw InputError("solve_gamma: history must use FromOldest differences");
  }
  if (history.empty()) throw InputError("solve_gamma: empty history");
  if (history.depth() == 0) return trivial_coefficients(Parametrization::GammaForm);
  const Matrix& r = history.r();
  detail::check_triangular_rank(r, options.rank_cutoff, "solve_gamma");
  const Vector rhs = -(history.q().transpose() * history.oldest_error());
  const Vector gamma = r.triangularView<Eigen::Upper>().solve(rhs);
  return from_gamma(gamma);
}

// min_alpha ||r_k - sum_i alpha_i (r_i - r_{i-1})||_2 through the stored QR.
inline Coefficients solve_alpha(const IterateHistory& history, const SolverOptions& options = {}) {
  if (history.mode() != DiffMode::Successive) {
    throw InputError("solve_alpha: history must use Successive differences");
  }
  if (history.empty()) throw InputError("solve_alpha: empty history");
  if (history.depth() == 0) return trivial_coefficients(Parametrization::AlphaForm);
  const Matrix& r = history.r();
  detail::check_triangular_rank(r, options.rank_cutoff, "solve_alpha");
  const Vector rhs = history.q().transpose() * history.newest_error();
  const Vector alpha = r.triangularView<Eigen::Upper>().solve(rhs);
  return from_alpha(alpha);
}

// Dispatch on the history's difference convention.
inline Coefficients solve_least_squares(const IterateHistory& history, const SolverOptions& options = {}) {
  return history.mode() == DiffMode::FromOldest ? solve_gamma(history, options)
                                                : solve_alpha(history, options);
}

}  // namespace apa
