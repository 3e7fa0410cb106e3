#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <optional>

#include <Eigen/Householder>
#include <Eigen/Jacobi>
#include <Eigen/QR>

#include "apa/core.hpp"

namespace apa {

// How the difference columns of the least-squares matrix are formed.
//   FromOldest: s_i = r_i - r_0 (restart test and gamma-form solve)
//   Successive: s_i = r_i - r_{i-1} (alpha-form solve, cheap left-column removal)
enum class DiffMode { FromOldest, Successive };

struct ProjectionGap {
  double gap = 0.0;   // ||(I - P) s||_2
  double norm = 0.0;  // ||s||_2
};

// Sliding window of iterates x_i, error vectors r_i = f(x_i) and (optionally)
// g(x_i), together with a thin QR factorization S = Q R of the p x m matrix of
// difference columns. When m > p the factorization is the economic one with
// Q p x p and R p x m upper trapezoidal.
//
// The factorization is updated one column at a time. After every update the
// orthogonality defect ||Q^T Q - I||_F is checked and the factorization is
// rebuilt from the stored errors if it exceeds orthogonality_tolerance.
class IterateHistory {
 public:
  static constexpr double orthogonality_tolerance = 1e-12;

  explicit IterateHistory(DiffMode mode, bool store_g_values = false)
      : mode_(mode), store_g_(store_g_values) {}

  DiffMode mode() const { return mode_; }
  bool stores_g_values() const { return store_g_; }

  bool empty() const { return errors_.empty(); }
  std::size_t size() const { return errors_.size(); }
  // m_k: number of stored iterates minus one (0 for an empty history).
  std::size_t depth() const { return errors_.empty() ? 0 : errors_.size() - 1; }
  Index state_dim() const { return n_; }
  Index error_dim() const { return p_; }

  const Vector& iterate(std::size_t i) const { return iterates_.at(i); }
  const Vector& error(std::size_t i) const { return errors_.at(i); }
  const Vector& g_value(std::size_t i) const { return g_values_.at(i); }
  const std::deque<Vector>& iterates() const { return iterates_; }
  const std::deque<Vector>& errors() const { return errors_; }
  const std::deque<Vector>& g_values() const { return g_values_; }
  const Vector& newest_error() const { return errors_.back(); }
  const Vector& oldest_error() const { return errors_.front(); }

  const Matrix& q() const { return q_; }
  const Matrix& r() const { return r_; }
  std::size_t rebuild_count() const { return rebuilds_; }

  void push(const Vector& x, const Vector& r, const std::optional<Vector>& gx = std::nullopt) {
    if (empty()) {
      if (x.size() == 0 || r.size() == 0) throw InputError("IterateHistory::push: empty vector");
      n_ = x.size();
      p_ = r.size();
      q_.resize(p_, 0);
      r_.resize(0, 0);
    } else {
      require_size(x, n_, "IterateHistory::push iterate");
      require_size(r, p_, "IterateHistory::push error");
    }
    if (store_g_) {
      if (!gx) throw InputError("IterateHistory::push: g(x) required for this history");
      require_size(*gx, n_, "IterateHistory::push g(x)");
    }

    std::optional<Vector> column;
    if (!empty()) {
      column = (mode_ == DiffMode::FromOldest) ? Vector(r - errors_.front())
                                               : Vector(r - errors_.back());
    }
    iterates_.push_back(x);
    errors_.push_back(r);
    if (store_g_) g_values_.push_back(*gx);
    if (column) append_column(*column);
  }

  // Keep only the `keep` most recent iterates. keep == 0 empties the history.
  void truncate_oldest(std::size_t keep) {
    if (keep >= size()) return;
    if (keep == 0) {
      clear();
      return;
    }
    const std::size_t drop = size() - keep;
    for (std::size_t i = 0; i < drop; ++i) {
      iterates_.pop_front();
      errors_.pop_front();
      if (store_g_) g_values_.pop_front();
    }
    if (mode_ == DiffMode::FromOldest) {
      // every column depends on the oldest error
      rebuild();
      return;
    }
    for (std::size_t i = 0; i < drop; ++i) drop_first_column();
    normalize_signs();
    guard();
  }

  void clear() {
    iterates_.clear();
    errors_.clear();
    g_values_.clear();
    q_.resize(p_, 0);
    r_.resize(0, 0);
  }

  // (||s - Q Q^T s||, ||s||): distance of s to the span of the stored
  // difference columns. With no columns the projector is zero.
  ProjectionGap residual_projection_gap(const Vector& s_new) const {
    require_size(s_new, p_, "residual_projection_gap");
    ProjectionGap out;
    out.norm = s_new.norm();
    if (q_.cols() == 0) {
      out.gap = out.norm;
      return out;
    }
    const Vector coeff = q_.transpose() * s_new;
    out.gap = (s_new - q_ * coeff).norm();
    return out;
  }

  // Difference matrix recomputed from the stored errors.
  Matrix difference_matrix() const {
    const Index m = static_cast<Index>(depth());
    Matrix s(p_, m);
    for (Index j = 0; j < m; ++j) {
      const auto i = static_cast<std::size_t>(j) + 1;
      s.col(j) = errors_[i] - (mode_ == DiffMode::FromOldest ? errors_.front() : errors_[i - 1]);
    }
    return s;
  }

  double orthogonality_defect() const {
    if (q_.cols() == 0) return 0.0;
    const Index k = q_.cols();
    return (q_.transpose() * q_ - Matrix::Identity(k, k)).norm();
  }

  // Discard the incremental state and refactorize from the stored errors.
  void rebuild() {
    ++rebuilds_;
    const Matrix s = difference_matrix();
    const Index m = s.cols();
    if (m == 0) {
      q_.resize(p_, 0);
      r_.resize(0, 0);
      return;
    }
    const Index k = std::min(p_, m);
    Eigen::HouseholderQR<Matrix> qr(s);
    q_ = qr.householderQ() * Matrix::Identity(p_, k);
    r_ = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    normalize_signs();
  }

 private:
  // Relative size of the orthogonal remainder below which an appended column
  // is treated as dependent and the factorization rebuilt.
  static constexpr double dependent_column_ratio = 1e-8;

  void append_column(const Vector& s) {
    const Index rows = r_.rows();
    const Index m = r_.cols();
    if (rows == p_) {
      // Q already spans R^p: the new column only adds to R.
      r_.conservativeResize(rows, m + 1);
      r_.col(m) = q_.transpose() * s;
      guard();
      return;
    }
    // classical Gram-Schmidt, applied twice
    Vector coeff = q_.transpose() * s;
    Vector rem = s - q_ * coeff;
    const Vector correction = q_.transpose() * rem;
    rem -= q_ * correction;
    coeff += correction;
    const double rho = rem.norm();
    if (!(rho > dependent_column_ratio * s.norm())) {
      rebuild();
      return;
    }
    q_.conservativeResize(p_, rows + 1);
    q_.col(rows) = rem / rho;
    r_.conservativeResize(rows + 1, m + 1);
    r_.row(rows).setZero();
    r_.col(m).head(rows) = coeff;
    r_(rows, m) = rho;
    guard();
  }

  // Remove the leftmost column of S and restore the triangular shape of R
  // with Givens rotations (R becomes upper Hessenberg after the removal).
  void drop_first_column() {
    const Index rows = r_.rows();
    const Index cols = r_.cols() - 1;
    Matrix shifted = r_.rightCols(cols);
    for (Index j = 0; j + 1 < rows && j < cols; ++j) {
      Eigen::JacobiRotation<double> rot;
      double diag = 0.0;
      rot.makeGivens(shifted(j, j), shifted(j + 1, j), &diag);
      shifted.applyOnTheLeft(j, j + 1, rot.adjoint());
      q_.applyOnTheRight(j, j + 1, rot);
      shifted(j, j) = diag;
      shifted(j + 1, j) = 0.0;
    }
    if (rows > cols) {
      r_ = shifted.topRows(cols);
      q_ = q_.leftCols(cols).eval();
    } else {
      r_ = shifted;
    }
  }

  void normalize_signs() {
    const Index k = std::min(r_.rows(), r_.cols());
    for (Index i = 0; i < k; ++i) {
      if (r_(i, i) < 0.0) {
        r_.row(i) *= -1.0;
        q_.col(i) *= -1.0;
      }
    }
  }

  void guard() {
    if (orthogonality_defect() > orthogonality_tolerance) rebuild();
  }

  DiffMode mode_;
  bool store_g_;
  Index n_ = 0;
  Index p_ = 0;
  std::deque<Vector> iterates_;
  std::deque<Vector> errors_;
  std::deque<Vector> g_values_;
  Matrix q_;
  Matrix r_;
  std::size_t rebuilds_ = 0;
};

}  // namespace apa
