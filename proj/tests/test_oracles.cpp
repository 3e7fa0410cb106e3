#include <cmath>
#include <random>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "apa/oracles/gmres.hpp"
#include "apa/oracles/multisecant.hpp"

using namespace apa;
using namespace apa::oracles;

namespace {

Vector random_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

// min || sum c_i v_i || subject to sum c_i = 1, via the dense KKT system.
Vector kkt_weights(const std::vector<Vector>& v) {
  const Index m = static_cast<Index>(v.size());
  Matrix kkt = Matrix::Zero(m + 1, m + 1);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) kkt(i, j) = v[static_cast<std::size_t>(i)].dot(v[static_cast<std::size_t>(j)]);
  kkt.col(m).head(m).setOnes();
  kkt.row(m).head(m).setOnes();
  Vector rhs = Vector::Zero(m + 1);
  rhs(m) = 1.0;
  return kkt.fullPivLu().solve(rhs).head(m);
}

// Full-history DIIS (version A) written directly from its definition with
// dense normal equations, independent of the driver's QR machinery.
std::vector<Vector> naive_diis(const LinearProblem& lp, const Vector& x0, std::size_t steps) {
  std::vector<Vector> xs{x0};
  std::vector<Vector> gs{lp.g(x0)};
  std::vector<Vector> rs{gs.back() - x0};
  for (std::size_t k = 0; k < steps; ++k) {
    const Vector c = kkt_weights(rs);
    Vector next = Vector::Zero(x0.size());
    for (std::size_t i = 0; i < gs.size(); ++i) next += c(static_cast<Index>(i)) * gs[i];
    xs.push_back(next);
    gs.push_back(lp.g(next));
    rs.push_back(gs.back() - next);
  }
  return xs;
}

}  // namespace

TEST(Gmres, IdentityConvergesInOneStep) {
  const Vector b = Vector::LinSpaced(5, 1.0, 5.0);
  const auto r = gmres_full(Matrix::Identity(5, 5), b, Vector::Zero(5), 10, 1e-14);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.steps(), 1u);
  EXPECT_LT((r.iterates.back() - b).norm(), 1e-14);
}

TEST(Gmres, TerminatesAtGradeTwo) {
  const Matrix a = Vector{{1.0, 2.0}}.asDiagonal();
  const Vector b{{1.0, 1.0}};
  const auto r = gmres_full(a, b, Vector::Zero(2), 10, 1e-13);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.steps(), 2u);
  EXPECT_GT(r.residual_norms[1], 1e-3);
  EXPECT_LT((r.iterates.back() - Vector{{1.0, 0.5}}).norm(), 1e-13);
}

TEST(Gmres, SpdSystemMatchesDenseSolve) {
  const auto lp = make_linear_suite(8, 30, 10.0)[0];
  const auto r = gmres_full(lp.a, lp.b, Vector::Zero(30), 30, 1e-12);
  ASSERT_TRUE(r.converged);
  EXPECT_LE(r.steps(), 30u);
  EXPECT_LE(r.residual_norms.back(), 1e-12);
  EXPECT_LT((r.iterates.back() - lp.a.partialPivLu().solve(lp.b)).norm(), 1e-10);
  for (std::size_t j = 1; j < r.residual_norms.size(); ++j) {
    EXPECT_LE(r.residual_norms[j], r.residual_norms[j - 1] * (1.0 + 1e-12));
  }
}

TEST(Gmres, StagnationIsDetected) {
  const auto lp = make_stagnating_problem(6);
  const auto r = gmres_full(lp.a, lp.b, Vector::Zero(6), 6, 1e-12);
  ASSERT_TRUE(r.stagnation_step.has_value());
  EXPECT_EQ(*r.stagnation_step, 1u);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.steps(), 6u);
}

TEST(GmresEquivalence, ScalarProblemAtRoundoff) {
  const auto report = certify_gmres_equivalence(make_scalar_problem(2.0, 1.0, 0.4), Vector::Zero(1), 10);
  EXPECT_EQ(report.verdict, Verdict::Pass);
  EXPECT_LT(report.combination_deviation, 1e-14);
  EXPECT_LT(report.step_deviation, 1e-14);
}

TEST(GmresEquivalence, SeededSuitePasses) {
  for (const auto& lp : make_linear_suite(2, 30, 10.0)) {
    const auto report = certify_gmres_equivalence(lp, Vector::Zero(30), 100);
    EXPECT_EQ(report.verdict, Verdict::Pass) << lp.name << " " << report.note;
    EXPECT_GT(report.steps_compared, 3u);
  }
}

TEST(GmresEquivalence, StagnatingInstanceIsInconclusive) {
  const auto report = certify_gmres_equivalence(make_stagnating_problem(8), Vector::Zero(8), 40);
  EXPECT_EQ(report.verdict, Verdict::Inconclusive);
  EXPECT_FALSE(report.note.empty());
}

TEST(GmresEquivalence, DriverMatchesNaiveNormalEquationsDiis) {
  const auto lp = make_linear_suite(4, 10, 10.0)[1];
  DriverOptions options;
  options.record_iterates = true;
  options.max_iter = 6;
  const auto run = accelerate(lp.as_problem(), Vector::Zero(10), 0.0, FixedDepth{FixedDepth::unbounded}, Version::A, options);
  const auto naive = naive_diis(lp, Vector::Zero(10), 6);
  for (std::size_t k = 0; k < naive.size(); ++k) {
    EXPECT_LT((run.trace.iterates[k] - naive[k]).norm(), 1e-9 * std::max(1.0, naive[k].norm())) << "k = " << k;
  }
}

TEST(Multisecant, ScalarSecantStep) {
  IterateHistory h(DiffMode::Successive, true);
  h.push(Vector::Zero(1), Vector::Ones(1), Vector::Ones(1));
  h.push(Vector::Ones(1), Vector::Constant(1, 0.5), Vector::Constant(1, 1.5));
  // G = -1 + (1 - 0.5) / 0.25 * (-0.5) = -2; the linear interpolant of f has its root at 2
  for (auto type : {SecantType::I, SecantType::II}) {
    EXPECT_NEAR(multisecant_step(h, h.newest_error(), type)(0), 2.0, 1e-15);
    EXPECT_NEAR(multisecant_matrix(h, type)(0, 0), -2.0, 1e-15);
  }
}

TEST(Multisecant, TypeTwoEqualsAndersonVersionA) {
  std::mt19937_64 rng(31);
  const Index n = 6;
  const Matrix w = 0.3 * Matrix::Random(n, n);
  const Map g = [w](const Vector& x) -> Vector { return (w * x).array().sin().matrix(); };
  IterateHistory h(DiffMode::Successive, true);
  for (int i = 0; i < 3; ++i) {
    const Vector x = random_vector(rng, n);
    h.push(x, g(x) - x, g(x));
  }
  const Vector anderson = extrapolate(h, solve_least_squares(h), Version::A, g);
  const Vector secant = multisecant_step(h, h.newest_error(), SecantType::II);
  EXPECT_LT((anderson - secant).norm(), 1e-8 * std::max(1.0, anderson.norm()));
}

TEST(Multisecant, SecantConditionsHold) {
  std::mt19937_64 rng(32);
  IterateHistory h(DiffMode::Successive);
  for (int i = 0; i < 4; ++i) h.push(random_vector(rng, 7), random_vector(rng, 7));
  const auto [y, s] = secant_matrices(h);
  for (auto type : {SecantType::I, SecantType::II}) {
    EXPECT_LT((multisecant_matrix(h, type) * s - y).norm(), 1e-10 * y.norm());
  }
}

TEST(Multisecant, RankDeficientDifferencesAreDegenerate) {
  IterateHistory h(DiffMode::Successive);
  const Vector r{{1.0, 0.0, 0.0}};
  h.push(Vector::Zero(3), Vector::Zero(3));
  h.push(Vector::Ones(3), r);
  h.push(2.0 * Vector::Ones(3), 2.0 * r);
  EXPECT_THROW(multisecant_step(h, h.newest_error(), SecantType::II), DegeneracyError);
  IterateHistory rect(DiffMode::Successive);
  rect.push(Vector::Zero(2), Vector::Zero(3));
  EXPECT_THROW(multisecant_step(rect, Vector::Zero(3), SecantType::II), InputError);
}

TEST(AffineDiagnostics, OrthonormalTriple) {
  const std::vector<Vector> errors{Vector::Unit(3, 0), Vector::Unit(3, 1), Vector::Unit(3, 2)};
  const auto d = affine_independence_diagnostics(errors);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_NEAR(d[0], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(d[1], std::sqrt(1.5), 1e-15);
}

TEST(AffineDiagnostics, CollinearPointsHaveZeroDistance) {
  const Vector base{{1.0, 1.0}};
  const Vector dir{{1.0, -2.0}};
  const std::vector<Vector> errors{base + dir, base + 2.0 * dir, base + 3.0 * dir, base - dir};
  const auto d = affine_independence_diagnostics(errors);
  EXPECT_GT(d[0], 0.0);
  EXPECT_NEAR(d[1], 0.0, 1e-14);
  EXPECT_NEAR(d[2], 0.0, 1e-14);
  EXPECT_THROW(affine_independence_diagnostics(std::vector<Vector>{base}), InputError);
}

TEST(AffineDiagnostics, MatchesConstrainedLeastSquares) {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vector> errors;
    for (int i = 0; i < 5; ++i) errors.push_back(random_vector(rng, 8));
    const auto d = affine_independence_diagnostics(errors);
    for (std::size_t l = 1; l < errors.size(); ++l) {
      std::vector<Vector> shifted;
      for (std::size_t i = 0; i < l; ++i) shifted.push_back(errors[i] - errors[l]);
      const Vector c = kkt_weights(shifted);
      Vector closest = Vector::Zero(8);
      for (std::size_t i = 0; i < l; ++i) closest += c(static_cast<Index>(i)) * shifted[i];
      EXPECT_NEAR(d[l - 1], closest.norm(), 1e-10);
    }
  }
}
