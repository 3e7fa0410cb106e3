#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "apa/core.hpp"
#include "apa/driver.hpp"

namespace apa {

enum class OverlapKind { Identity, Gram };

// Desk-scale restricted Hartree-Fock-like problem with synthetic integrals.
//
//   F(D)      = Hcore + G(D),  G(D)_{mn} = sum_{ls} (2 T_{mnls} - T_{mlns}) D_{ls}
//   g(D)      = Aufbau density of F(D) (N lowest S-orthonormal eigenvectors)
//   f(D)      = F(D) D S - S D F(D)
//
// States are d x d matrices flattened row-major into vectors of length d^2.
class ToySCFProblem {
 public:
  static constexpr double gap_tolerance = 1e-12;

  ToySCFProblem(Matrix hcore, std::vector<double> eri, Matrix overlap, int electrons)
      : d_(hcore.rows()), electrons_(electrons), hcore_(std::move(hcore)), eri_(std::move(eri)),
        overlap_(std::move(overlap)) {
    if (hcore_.cols() != d_ || overlap_.rows() != d_ || overlap_.cols() != d_) {
      throw InputError("ToySCFProblem: Hcore and S must be square of the same order");
    }
    if (eri_.size() != static_cast<std::size_t>(d_ * d_ * d_ * d_)) {
      throw InputError("ToySCFProblem: two-electron tensor must have d^4 entries");
    }
    if (electrons_ < 1 || electrons_ >= d_) throw InputError("ToySCFProblem: need 1 <= N < d");
  }

  Index basis_dim() const { return d_; }
  int electrons() const { return electrons_; }
  const Matrix& hcore() const { return hcore_; }
  const Matrix& overlap() const { return overlap_; }
  const std::vector<double>& eri() const { return eri_; }

  double eri(Index m, Index n, Index l, Index s) const {
    return eri_[static_cast<std::size_t>(((m * d_ + n) * d_ + l) * d_ + s)];
  }

  Matrix fock(const Matrix& density) const {
    Matrix out = hcore_;
    for (Index m = 0; m < d_; ++m) {
      for (Index n = 0; n < d_; ++n) {
        double acc = 0.0;
        for (Index l = 0; l < d_; ++l)
          for (Index s = 0; s < d_; ++s) acc += (2.0 * eri(m, n, l, s) - eri(m, l, n, s)) * density(l, s);
        out(m, n) += acc;
      }
    }
    return 0.5 * (out + out.transpose());
  }

  // D' = C C^T from the N lowest eigenpairs of F V = eps S V with C^T S C = I.
  Matrix aufbau_from_fock(const Matrix& fock_matrix) const {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(fock_matrix, overlap_);
    if (solver.info() != Eigen::Success) throw WellPosednessError("aufbau: generalized eigensolver failed");
    const Vector& eps = solver.eigenvalues();
    const double gap = eps(electrons_) - eps(electrons_ - 1);
    if (!(gap > gap_tolerance)) {
      throw WellPosednessError(fmt::format("aufbau: no gap between occupied and virtual levels ({:.3e})", gap));
    }
    const Matrix c = solver.eigenvectors().leftCols(electrons_);
    const Matrix density = c * c.transpose();
    return 0.5 * (density + density.transpose());
  }

  Matrix aufbau(const Matrix& density) const { return aufbau_from_fock(fock(density)); }

  Matrix commutator(const Matrix& density) const {
    const Matrix f = fock(density);
    return f * density * overlap_ - overlap_ * density * f;
  }

  Vector commutator_error(const Matrix& density) const { return flatten(commutator(density)); }

  double idempotency_defect(const Matrix& density) const {
    return (density * overlap_ * density - density).norm();
  }

  double trace_defect(const Matrix& density) const {
    return std::abs((overlap_ * density).trace() - static_cast<double>(electrons_));
  }

  // Aufbau density of the core Hamiltonian.
  Matrix core_guess() const { return aufbau_from_fock(hcore_); }

  // Core guess followed by `steps` plain Roothaan iterations.
  Matrix warm_start(std::size_t steps) const {
    Matrix density = core_guess();
    for (std::size_t i = 0; i < steps; ++i) density = aufbau(density);
    return density;
  }

  Vector flatten(const Matrix& m) const {
    Vector out(d_ * d_);
    for (Index i = 0; i < d_; ++i)
      for (Index j = 0; j < d_; ++j) out(i * d_ + j) = m(i, j);
    return out;
  }

  Matrix unflatten(const Vector& v) const {
    require_size(v, d_ * d_, "ToySCFProblem::unflatten");
    Matrix out(d_, d_);
    for (Index i = 0; i < d_; ++i)
      for (Index j = 0; j < d_; ++j) out(i, j) = v(i * d_ + j);
    return out;
  }

  Problem as_problem() const {
    Problem out;
    out.n = d_ * d_;
    out.p = d_ * d_;
    const ToySCFProblem self = *this;
    out.g = [self](const Vector& x) -> Vector { return self.flatten(self.aufbau(self.unflatten(x))); };
    out.f = [self](const Vector& x) -> Vector { return self.commutator_error(self.unflatten(x)); };
    out.manifold_distance = [self](const Vector& x) -> double {
      const Matrix density = self.unflatten(x);
      return std::max(self.idempotency_defect(density), self.trace_defect(density));
    };
    return out;
  }

 private:
  Index d_;
  int electrons_;
  Matrix hcore_;
  std::vector<double> eri_;
  Matrix overlap_;
};

// Seeded instance: diagonally dominant Hcore with unit level spacing, a
// two-electron tensor T_{mnls} = difficulty * sum_q L^q_{mn} L^q_{ls} built
// from symmetric factors (so the 8-fold permutation symmetry holds exactly),
// and S either the identity or a well-conditioned Gram matrix.
inline ToySCFProblem make_toy_scf(std::uint64_t seed, Index d, int electrons, double difficulty,
                                  OverlapKind overlap = OverlapKind::Gram) {
  if (d > 12 || electrons < 1 || electrons >= d) throw InputError("make_toy_scf: need 1 <= N < d <= 12");
  if (!(difficulty >= 0.0)) throw InputError("make_toy_scf: difficulty must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Matrix hcore(d, d);
  for (Index i = 0; i < d; ++i) {
    hcore(i, i) = -2.0 + static_cast<double>(i) + 0.1 * unit(rng);
    for (Index j = 0; j < i; ++j) {
      hcore(i, j) = 0.2 * unit(rng);
      hcore(j, i) = hcore(i, j);
    }
  }

  const Index factors = d;
  std::vector<Matrix> chol(static_cast<std::size_t>(factors), Matrix(d, d));
  const double factor_scale = 1.0 / std::sqrt(static_cast<double>(factors));
  for (auto& l : chol) {
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j <= i; ++j) {
        l(i, j) = factor_scale * unit(rng);
        l(j, i) = l(i, j);
      }
    }
  }
  std::vector<double> eri(static_cast<std::size_t>(d * d * d * d), 0.0);
  for (Index m = 0; m < d; ++m)
    for (Index n = 0; n < d; ++n)
      for (Index l = 0; l < d; ++l)
        for (Index s = 0; s < d; ++s) {
          double acc = 0.0;
          for (const auto& f : chol) acc += f(m, n) * f(l, s);
          eri[static_cast<std::size_t>(((m * d + n) * d + l) * d + s)] = difficulty * acc;
        }

  Matrix s = Matrix::Identity(d, d);
  if (overlap == OverlapKind::Gram) {
    Matrix mix = Matrix::Identity(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) mix(i, j) += 0.1 * unit(rng);
    s = mix.transpose() * mix;
    s = 0.5 * (s + s.transpose()).eval();
  }
  return ToySCFProblem(std::move(hcore), std::move(eri), std::move(s), electrons);
}

}  // namespace apa
