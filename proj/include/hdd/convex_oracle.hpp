#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "hdd/types.hpp"

namespace hdd {

/// A twice differentiable convex function on R^n.
///
/// Gradient and Hessian-vector products write into caller-owned storage so
/// the integrator hot loop stays allocation free. Lipschitz constants are
/// certificates (0 means the map is constant).
struct FunctionOracle {
  int dimension = 0;
  std::function<double(const Vector&)> value;
  std::function<void(const Vector& x, Vector& out)> gradient;
  std::function<void(const Vector& x, const Vector& d, Vector& out)> hess_vec;
  double grad_lipschitz = 0.0;
  double hess_lipschitz = 0.0;
  double strong_convexity = 0.0;
  double lower_bound = 0.0;

  Vector grad(const Vector& x) const {
    Vector out(dimension);
    gradient(x, out);
    return out;
  }

  Vector hess(const Vector& x, const Vector& d) const {
    Vector out(dimension);
    hess_vec(x, d, out);
    return out;
  }
};

enum class ConstraintKind { zero, affine_distance };

/// Constraint function with min value 0 together with the structure of its
/// minimizer set: projection, tangent directions and the conjugate gap
/// psi*(p) - sigma_{argmin psi}(p).
struct ConstraintOracle {
  FunctionOracle base;
  ConstraintKind kind = ConstraintKind::zero;
  std::function<Vector(const Vector&)> argmin_project;
  /// Projection onto the linear subspace parallel to argmin psi.
  std::function<Vector(const Vector&)> tangent_project;
  /// Returns kInfinity when p is outside the range of the normal cone.
  std::function<double(const Vector&)> conjugate_gap;

  bool argmin_contains(const Vector& x, double tol) const {
    return (x - argmin_project(x)).norm() <= tol;
  }
};

struct BilevelProblem {
  FunctionOracle phi;
  ConstraintOracle psi;

  int dimension() const { return phi.dimension; }
};

// Plain data descriptions, used for serialization and for rebuilding oracles.

struct QuadraticData {
  Matrix Q;
  Vector b;
  double c = 0.0;
  std::optional<double> lower_bound;
};

struct AffineData {
  Matrix A;
  Vector c;
};

struct ZeroData {
  int n = 0;
};

using ConstraintData = std::variant<ZeroData, AffineData>;

struct ProblemData {
  QuadraticData phi;
  ConstraintData psi;
};

/// Tolerance on the normal-cone membership test used by conjugate_gap.
inline constexpr double kNormalConeTol = 1e-9;

/// f(x) = 1/2 <Qx, x> - <b, x> + c.
///
/// Q must be symmetric positive semidefinite; eigenvalues down to
/// -1e-10 * ||Q|| are accepted and clipped to zero. The lower bound is
/// computed when Q is positive definite, taken from `lower_bound` otherwise,
/// and falls back to the pseudo-inverse minimum when b lies in range(Q).
inline FunctionOracle make_quadratic(const Matrix& Q, const Vector& b, double c = 0.0,
                                     std::optional<double> lower_bound = std::nullopt) {
  const auto n = Q.rows();
  if (n == 0 || Q.cols() != n) throw std::invalid_argument("make_quadratic: Q must be square and nonempty");
  if (b.size() != n) throw std::invalid_argument("make_quadratic: b has wrong dimension");
  if (!Q.allFinite() || !b.allFinite() || !std::isfinite(c))
    throw std::invalid_argument("make_quadratic: non-finite data");

  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("make_quadratic: Q is not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (Q + Q.transpose()));
  const Vector& lambdas = eig.eigenvalues();
  const double norm = lambdas.cwiseAbs().maxCoeff();
  const double floor = -1e-10 * norm;
  if (lambdas.minCoeff() < floor) throw std::invalid_argument("make_quadratic: Q is indefinite");
  const double lambda_min = std::max(0.0, lambdas.minCoeff());
  const double lambda_max = std::max(0.0, lambdas.maxCoeff());

  double bound = 0.0;
  const double zero_eig = 1e-10 * std::max(norm, 1e-300);
  if (lambda_min > zero_eig) {
    bound = c - 0.5 * b.dot(eig.eigenvectors() * (lambdas.cwiseInverse().asDiagonal() *
                                                  (eig.eigenvectors().transpose() * b)));
  } else if (lower_bound) {
    bound = *lower_bound;
  } else {
    const Vector coeff = eig.eigenvectors().transpose() * b;
    double quad = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (lambdas(i) > zero_eig) {
        quad += coeff(i) * coeff(i) / lambdas(i);
      } else if (std::abs(coeff(i)) > 1e-10 * std::max(1.0, b.norm())) {
        throw std::invalid_argument("make_quadratic: b outside range(Q), function unbounded below");
      }
    }
    bound = c - 0.5 * quad;
  }

  auto Qp = std::make_shared<const Matrix>(Q);
  auto bp = std::make_shared<const Vector>(b);

  FunctionOracle f;
  f.dimension = static_cast<int>(n);
  f.value = [Qp, bp, c](const Vector& x) { return 0.5 * x.dot(*Qp * x) - bp->dot(x) + c; };
  f.gradient = [Qp, bp](const Vector& x, Vector& out) { out.noalias() = *Qp * x - *bp; };
  f.hess_vec = [Qp](const Vector&, const Vector& d, Vector& out) { out.noalias() = *Qp * d; };
  f.grad_lipschitz = lambda_max;
  f.hess_lipschitz = 0.0;
  f.strong_convexity = lambda_min > zero_eig ? lambda_min : 0.0;
  f.lower_bound = bound;
  return f;
}

/// psi(x) = 1/2 dist(x, C)^2 for the affine set C = {x : Ax = c}.
///
/// With M = A^T (A A^T)^{-1}: grad psi(x) = M (Ax - c), hess psi = M A.
/// psi*(p) = 1/2 ||p||^2 + sigma_C(p), so the gap is 1/2 ||p||^2 whenever
/// p is orthogonal to the direction space of C and +inf otherwise.
inline ConstraintOracle make_affine_distance_constraint(const Matrix& A, const Vector& c) {
  const auto m = A.rows();
  const auto n = A.cols();
  if (m == 0 || n == 0 || m > n) throw std::invalid_argument("make_affine_distance_constraint: need 1 <= m <= n");
  if (c.size() != m) throw std::invalid_argument("make_affine_distance_constraint: c has wrong dimension");
  if (!A.allFinite() || !c.allFinite()) throw std::invalid_argument("make_affine_distance_constraint: non-finite data");

  Eigen::JacobiSVD<Matrix> svd(A);
  const Vector& sv = svd.singularValues();
  if (sv(m - 1) <= 1e-10 * sv(0)) throw std::invalid_argument("make_affine_distance_constraint: A is rank deficient");

  const Matrix gram = A * A.transpose();
  auto Ap = std::make_shared<const Matrix>(A);
  auto cp = std::make_shared<const Vector>(c);
  auto Mp = std::make_shared<const Matrix>(A.transpose() * gram.llt().solve(Matrix::Identity(m, m)));

  ConstraintOracle g;
  g.kind = ConstraintKind::affine_distance;
  g.base.dimension = static_cast<int>(n);
  g.base.value = [Ap, cp, Mp](const Vector& x) {
    const Vector r = *Mp * (*Ap * x - *cp);
    return 0.5 * r.squaredNorm();
  };
  g.base.gradient = [Ap, cp, Mp](const Vector& x, Vector& out) {
    thread_local Vector residual;
    residual.noalias() = *Ap * x;
    residual -= *cp;
    out.noalias() = *Mp * residual;
  };
  g.base.hess_vec = [Ap, Mp](const Vector&, const Vector& d, Vector& out) {
    thread_local Vector ad;
    ad.noalias() = *Ap * d;
    out.noalias() = *Mp * ad;
  };
  g.base.grad_lipschitz = 1.0;
  g.base.hess_lipschitz = 0.0;
  g.base.strong_convexity = (m == n) ? 1.0 : 0.0;
  g.base.lower_bound = 0.0;

  g.argmin_project = [Ap, cp, Mp](const Vector& x) -> Vector { return x - *Mp * (*Ap * x - *cp); };
  g.tangent_project = [Ap, Mp](const Vector& d) -> Vector { return d - *Mp * (*Ap * d); };
  g.conjugate_gap = [Ap, Mp](const Vector& p) -> double {
    const Vector tangential = p - *Mp * (*Ap * p);
    if (tangential.norm() > kNormalConeTol * std::max(1.0, p.norm())) return kInfinity;
    return 0.5 * p.squaredNorm();
  };
  return g;
}

/// psi = 0: argmin psi = R^n and psi* = sigma = indicator of {0}.
inline ConstraintOracle make_zero_constraint(int n) {
  if (n <= 0) throw std::invalid_argument("make_zero_constraint: n must be positive");
  ConstraintOracle g;
  g.kind = ConstraintKind::zero;
  g.base.dimension = n;
  g.base.value = [](const Vector&) { return 0.0; };
  g.base.gradient = [](const Vector&, Vector& out) { out.setZero(); };
  g.base.hess_vec = [](const Vector&, const Vector&, Vector& out) { out.setZero(); };
  g.argmin_project = [](const Vector& x) -> Vector { return x; };
  g.tangent_project = [](const Vector& d) -> Vector { return d; };
  g.conjugate_gap = [](const Vector& p) -> double {
    return p.norm() <= kNormalConeTol ? 0.0 : kInfinity;
  };
  return g;
}

inline int dimension_of(const ConstraintData& data) {
  if (const auto* z = std::get_if<ZeroData>(&data)) return z->n;
  return static_cast<int>(std::get<AffineData>(data).A.cols());
}

inline ConstraintOracle make_constraint(const ConstraintData& data) {
  if (const auto* z = std::get_if<ZeroData>(&data)) return make_zero_constraint(z->n);
  const auto& a = std::get<AffineData>(data);
  return make_affine_distance_constraint(a.A, a.c);
}

inline BilevelProblem build_problem(const ProblemData& data) {
  BilevelProblem p{make_quadratic(data.phi.Q, data.phi.b, data.phi.c, data.phi.lower_bound),
                   make_constraint(data.psi)};
  if (p.psi.base.dimension != p.phi.dimension)
    throw std::invalid_argument("build_problem: phi and psi dimensions differ");
  return p;
}

}  // namespace hdd
