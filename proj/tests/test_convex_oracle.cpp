#include <random>

#include <gtest/gtest.h>

#include "hdd/convex_oracle.hpp"
#include "support.hpp"

using namespace hdd;
using namespace testing_support;

TEST(Quadratic, GradientAndHessianMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 120; ++trial) {
    const int n = 1 + trial % 7;
    const Matrix Q = random_psd(rng, n, 1 + trial % n);
    const Vector b = Q * random_vector(rng, n);
    const auto f = make_quadratic(Q, b, 0.3);
    const Vector x = random_vector(rng, n, 3.0);
    const Vector d = random_vector(rng, n);
    EXPECT_LE((f.grad(x) - fd_gradient(f.value, x)).norm(), 1e-7 * (1 + f.grad(x).norm()));
    const Vector hd = fd_directional([&](const Vector& y) { return f.grad(y); }, x, d);
    EXPECT_LE((f.hess(x, d) - hd).norm(), 1e-7 * (1 + hd.norm()));
  }
}

TEST(Quadratic, LowerBoundIsTheMinimum) {
  Matrix Q(2, 2);
  Q << 2, 0, 0, 4;
  const auto f = make_quadratic(Q, Vector::Constant(2, 2.0), 1.0);
  // minimizer (1, 0.5): 1/2 (2 + 1) - (2 + 1) + 1
  EXPECT_NEAR(f.lower_bound, -0.5, 1e-14);
  EXPECT_DOUBLE_EQ(f.strong_convexity, 2.0);
  EXPECT_DOUBLE_EQ(f.grad_lipschitz, 4.0);
}

TEST(Quadratic, SingularWithRangeDataUsesPseudoInverse) {
  Matrix Q = Matrix::Zero(2, 2);
  Q(0, 0) = 1;
  const auto f = make_quadratic(Q, (Vector(2) << 1, 0).finished());
  EXPECT_NEAR(f.lower_bound, -0.5, 1e-14);
  EXPECT_EQ(f.strong_convexity, 0.0);
}

TEST(Quadratic, RejectsBadData) {
  Matrix ns(2, 2);
  ns << 1, 1, 0, 1;
  EXPECT_THROW(make_quadratic(ns, Vector::Zero(2)), std::invalid_argument);
  Matrix indef(2, 2);
  indef << 1, 0, 0, -1;
  EXPECT_THROW(make_quadratic(indef, Vector::Zero(2)), std::invalid_argument);
  Matrix sing = Matrix::Zero(2, 2);
  sing(0, 0) = 1;
  EXPECT_THROW(make_quadratic(sing, (Vector(2) << 0, 1).finished()), std::invalid_argument);
  EXPECT_NO_THROW(make_quadratic(sing, (Vector(2) << 0, 1).finished(), 0.0, -10.0));
}

TEST(Quadratic, TinyNegativeEigenvaluesAreClipped) {
  Matrix Q = Matrix::Identity(3, 3);
  Q(2, 2) = -1e-12;
  const auto f = make_quadratic(Q, Vector::Zero(3));
  EXPECT_EQ(f.strong_convexity, 0.0);
}

TEST(AffineDistance, MatchesHalfSquaredDistance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 120; ++trial) {
    const int n = 2 + trial % 6;
    const int m = 1 + trial % (n - 1);
    const Matrix A = random_matrix(rng, m, n);
    const Vector c = random_vector(rng, m);
    const auto g = make_affine_distance_constraint(A, c);
    const Vector x = random_vector(rng, n, 2.0);
    const Vector p = g.argmin_project(x);
    EXPECT_LE((A * p - c).norm(), 1e-11);
    // x - p is orthogonal to the direction space of C.
    const Vector d = g.tangent_project(random_vector(rng, n));
    EXPECT_LE(std::abs((x - p).dot(d)), 1e-11);
    EXPECT_LE((A * d).norm(), 1e-11);
    EXPECT_NEAR(g.base.value(x), 0.5 * (x - p).squaredNorm(), 1e-12);
    EXPECT_LE((g.base.grad(x) - fd_gradient(g.base.value, x)).norm(), 1e-7);
    const Vector dir = random_vector(rng, n);
    const Vector hd = fd_directional([&](const Vector& y) { return g.base.grad(y); }, x, dir);
    EXPECT_LE((g.base.hess(x, dir) - hd).norm(), 1e-7);
    EXPECT_TRUE(g.argmin_contains(p, 1e-10));
  }
}

TEST(AffineDistance, RejectsRankDeficientRows) {
  Matrix A(2, 3);
  A << 1, 2, 3, 2, 4, 6;
  EXPECT_THROW(make_affine_distance_constraint(A, Vector::Zero(2)), std::invalid_argument);
}

// sup_x <p, x> - psi(x) on a grid, minus the support function of C = {x1 = 0}.
double grid_conjugate_gap(const Vector& p) {
  double best = -kInfinity;
  for (int i = -4000; i <= 4000; ++i) {
    const double x1 = i * 1e-3;
    best = std::max(best, p(0) * x1 - 0.5 * x1 * x1);
  }
  return best;  // sigma_C(p) = 0 because p2 = 0
}

TEST(AffineDistance, ConjugateGapMatchesGridMaximization) {
  Matrix A(1, 2);
  A << 1, 0;
  const auto g = make_affine_distance_constraint(A, Vector::Zero(1));
  for (double p1 : {-3.0, -1.2, -0.25, 0.0, 0.7, 2.5}) {
    const Vector p = (Vector(2) << p1, 0.0).finished();
    EXPECT_NEAR(g.conjugate_gap(p), grid_conjugate_gap(p), 1e-6);
  }
  EXPECT_EQ(g.conjugate_gap((Vector(2) << 1.0, 1e-3).finished()), kInfinity);
}

TEST(AffineDistance, ConjugateGapOnOffsetSubspace) {
  // C = {x1 + x2 = 2}; p = s (1, 1) gives gap ||p||^2 / 2.
  Matrix A(1, 2);
  A << 1, 1;
  const auto g = make_affine_distance_constraint(A, (Vector(1) << 2.0).finished());
  EXPECT_NEAR(g.conjugate_gap((Vector(2) << 0.5, 0.5).finished()), 0.25, 1e-15);
  EXPECT_EQ(g.conjugate_gap((Vector(2) << 0.5, -0.5).finished()), kInfinity);
}

TEST(ZeroConstraint, GapIsIndicatorOfOrigin) {
  const auto g = make_zero_constraint(3);
  EXPECT_EQ(g.conjugate_gap(Vector::Zero(3)), 0.0);
  EXPECT_EQ(g.conjugate_gap(Vector::Constant(3, 1e-6)), kInfinity);
  EXPECT_EQ(g.base.value(Vector::Ones(3)), 0.0);
  EXPECT_TRUE(g.argmin_contains(Vector::Ones(3), 0.0));
}

TEST(BuildProblem, DimensionMismatchThrows) {
  ProblemData d{QuadraticData{Matrix::Identity(2, 2), Vector::Zero(2)}, ZeroData{3}};
  EXPECT_THROW(build_problem(d), std::invalid_argument);
}
