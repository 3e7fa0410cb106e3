#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "apa/core.hpp"
#include "apa/driver.hpp"

namespace apa {

// Stationary Richardson iteration for A x = b:
//   g(x) = (I - beta A) x + beta b,  f(x) = g(x) - x = beta (b - A x).
struct LinearProblem {
  std::string name;
  Matrix a;
  Vector b;
  double beta = 1.0;

  Index dim() const { return a.rows(); }

  Vector g(const Vector& x) const { return x - beta * (a * x - b); }
  Vector f(const Vector& x) const { return g(x) - x; }

  Matrix iteration_matrix() const { return Matrix::Identity(dim(), dim()) - beta * a; }

  // ||I - beta A||_2
  double contraction() const {
    Eigen::JacobiSVD<Matrix> svd(iteration_matrix());
    return svd.singularValues()(0);
  }

  Vector solution() const { return a.colPivHouseholderQr().solve(b); }

  Problem as_problem() const {
    Problem out;
    out.n = dim();
    out.p = dim();
    // capture by value so the Problem outlives this object
    out.g = [a = a, b = b, beta = beta](const Vector& x) -> Vector { return x - beta * (a * x - b); };
    out.f = [a = a, b = b, beta = beta](const Vector& x) -> Vector {
      const Vector gx = x - beta * (a * x - b);
      return gx - x;
    };
    return out;
  }
};

inline LinearProblem make_scalar_problem(double a, double b, double beta) {
  LinearProblem out;
  out.name = "scalar";
  out.a = Matrix::Constant(1, 1, a);
  out.b = Vector::Constant(1, b);
  out.beta = beta;
  return out;
}

namespace detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

inline Vector gaussian_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(n);
  for (Index i = 0; i < n; ++i) out(i) = normal(rng);
  return out;
}

inline Matrix random_orthogonal(std::mt19937_64& rng, Index n) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(rng, n, n));
  return qr.householderQ() * Matrix::Identity(n, n);
}

}  // namespace detail

// Two contractive instances per call, both deterministic in (seed, n, conditioning):
//   "spd": SPD A with eigenvalues log-spaced in [1, conditioning] and the
//          optimal Richardson step beta = 2 / (1 + conditioning);
//   "nonsymmetric": A = I - B with ||B||_2 = (conditioning - 1) / (conditioning + 1), beta = 1.
inline std::vector<LinearProblem> make_linear_suite(std::uint64_t seed, Index n, double conditioning) {
  if (n < 1) throw InputError("make_linear_suite: n must be at least 1");
  if (!(conditioning >= 1.0)) throw InputError("make_linear_suite: conditioning must be >= 1");
  std::mt19937_64 rng(seed);
  const double rho = (conditioning - 1.0) / (conditioning + 1.0);

  LinearProblem spd;
  spd.name = "spd";
  {
    const Matrix q = detail::random_orthogonal(rng, n);
    Vector eig(n);
    for (Index i = 0; i < n; ++i) {
      const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      eig(i) = std::pow(conditioning, t);
    }
    const Matrix a = q * eig.asDiagonal() * q.transpose();
    spd.a = 0.5 * (a + a.transpose());
    spd.b = detail::gaussian_vector(rng, n);
    spd.beta = 2.0 / (1.0 + conditioning);
  }

  LinearProblem nonsym;
  nonsym.name = "nonsymmetric";
  {
    Matrix b = detail::gaussian_matrix(rng, n, n);
    Eigen::JacobiSVD<Matrix> svd(b);
    if (rho > 0.0) {
      b *= rho / svd.singularValues()(0);
    } else {
      b.setZero();
    }
    nonsym.a = Matrix::Identity(n, n) - b;
    nonsym.b = detail::gaussian_vector(rng, n);
    nonsym.beta = 1.0;
  }

  std::vector<LinearProblem> out{spd, nonsym};
  for (const auto& prob : out) {
    if (!(prob.contraction() < 1.0)) throw InputError("make_linear_suite: generated instance is not contractive");
  }
  return out;
}

// Cyclic shift A e_i = e_{i+1} with b = e_1: started from x = 0, GMRES makes no
// progress until step n. Not contractive; used to exercise stagnation handling.
inline LinearProblem make_stagnating_problem(Index n) {
  if (n < 2) throw InputError("make_stagnating_problem: n must be at least 2");
  LinearProblem out;
  out.name = "stagnating";
  out.a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) out.a((i + 1) % n, i) = 1.0;
  out.b = Vector::Unit(n, 0);
  out.beta = 0.5;
  return out;
}

}  // namespace apa
