#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdd/convex_oracle.hpp"
#include "hdd/penalty_schedule.hpp"
#include "hdd/types.hpp"

namespace hdd {

struct KktOptions {
  /// Accept a singular KKT matrix (non-singleton S) and return the
  /// minimum-norm solution instead of failing.
  bool allow_nonunique = false;
  int refinement_steps = 3;
  double residual_tol = 1e-10;
};

struct KktSolution {
  Vector z;
  /// Multiplier in the convention grad phi(z) + A^T nu = 0.
  Vector nu;
  double residual = 0.0;
  bool unique = true;
};

/// max(||Qz - b + A^T nu||_inf, ||Az - c||_inf)
inline double kkt_residual(const Matrix& Q, const Vector& b, const Matrix& A, const Vector& c, const Vector& z,
                           const Vector& nu) {
  double r = (Q * z - b + A.transpose() * nu).cwiseAbs().maxCoeff();
  if (A.rows() > 0) r = std::max(r, (A * z - c).cwiseAbs().maxCoeff());
  return r;
}

/// Solves [[Q, A^T], [A, 0]] (z, nu) = (b, c) for min 1/2 <Qx,x> - <b,x>
/// subject to Ax = c. A may have zero rows (unconstrained problem).
inline KktSolution solve_reference_kkt(const Matrix& Q, const Vector& b, const Matrix& A, const Vector& c,
                                       const KktOptions& opts = {}) {
  const auto n = Q.rows();
  const auto m = A.rows();
  if (Q.cols() != n || b.size() != n || (m > 0 && A.cols() != n) || c.size() != m)
    throw std::invalid_argument("solve_reference_kkt: inconsistent dimensions");

  Matrix K = Matrix::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = Q;
  if (m > 0) {
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
  }
  Vector rhs(n + m);
  rhs << b, c;

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(K);
  cod.setThreshold(1e-10);
  const bool singular = cod.rank() < n + m;
  if (singular && !opts.allow_nonunique)
    throw std::invalid_argument("solve_reference_kkt: KKT matrix is singular (solution set not a singleton)");

  Vector sol;
  if (singular) {
    sol = cod.solve(rhs);
    for (int i = 0; i < opts.refinement_steps; ++i) sol += cod.solve(rhs - K * sol);
  } else {
    Eigen::PartialPivLU<Matrix> lu(K);
    sol = lu.solve(rhs);
    for (int i = 0; i < opts.refinement_steps; ++i) sol += lu.solve(rhs - K * sol);
  }

  KktSolution out;
  out.z = sol.head(n);
  out.nu = sol.tail(m);
  out.unique = !singular;
  out.residual = kkt_residual(Q, b, A, c, out.z, out.nu);
  if (!(out.residual <= opts.residual_tol))
    throw std::runtime_error("solve_reference_kkt: residual " + std::to_string(out.residual) + " above tolerance");
  return out;
}

struct ReferenceSolution {
  Vector z;
  double phi_z = 0.0;
  Vector nu;
  double kkt_residual = 0.0;
  bool unique = true;
};

struct GalleryInstance {
  std::string name;
  std::vector<std::string> tags;
  ProblemData data;
  BilevelProblem problem;
  ReferenceSolution reference;
  DynamicsParams params;
  Vector u0;
  Vector v0;

  bool has_tag(const std::string& tag) const {
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
  }
};

inline ReferenceSolution compute_reference(const ProblemData& data, const FunctionOracle& phi,
                                           bool allow_nonunique) {
  Matrix A(0, data.phi.Q.rows());
  Vector c(0);
  if (const auto* a = std::get_if<AffineData>(&data.psi)) {
    A = a->A;
    c = a->c;
  }
  const KktSolution k = solve_reference_kkt(data.phi.Q, data.phi.b, A, c, KktOptions{allow_nonunique});
  return ReferenceSolution{k.z, phi.value(k.z), k.nu, k.residual, k.unique};
}

/// Assembles an instance, solves for its reference and checks that
/// p = -grad phi(z) is on the finite branch of the conjugate gap.
inline GalleryInstance make_instance(std::string name, std::vector<std::string> tags, ProblemData data,
                                     DynamicsParams params, Vector u0, Vector v0, bool allow_nonunique = false) {
  GalleryInstance g;
  g.name = std::move(name);
  g.tags = std::move(tags);
  g.problem = build_problem(data);
  g.data = std::move(data);
  g.reference = compute_reference(g.data, g.problem.phi, allow_nonunique);
  g.params = params;
  g.u0 = std::move(u0);
  g.v0 = std::move(v0);
  if (g.u0.size() != g.problem.dimension() || g.v0.size() != g.problem.dimension())
    throw std::invalid_argument("gallery instance " + g.name + ": initial data has wrong dimension");
  if (!std::isfinite(g.problem.psi.conjugate_gap(-g.problem.phi.grad(g.reference.z))))
    throw std::runtime_error("gallery instance " + g.name + ": -grad phi(z) outside the normal cone");
  return g;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Portable uniform draws: 53 high bits of mt19937_64 mapped to [-1, 1).
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : gen_(seed) {}
  double next() { return 2.0 * static_cast<double>(gen_() >> 11) * 0x1.0p-53 - 1.0; }
  Vector vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = next();
    return v;
  }
  Matrix matrix(Eigen::Index r, Eigen::Index c) {
    Matrix M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) M(i, j) = next();
    return M;
  }

 private:
  std::mt19937_64 gen_;
};

inline GalleryInstance gallery_free_quadratic() {
  ProblemData d{QuadraticData{Matrix::Identity(2, 2), Vector::Zero(2), 0.0, std::nullopt}, ZeroData{2}};
  return make_instance("G1", {"psi_zero", "strongly_convex"}, std::move(d), DynamicsParams{1.0, 1.0, 0.9},
                       vec({1.0, 0.0}), Vector::Zero(2));
}

inline ProblemData hyperplane_problem() {
  const Vector a = vec({1.0, 2.0});
  Matrix A(1, 2);
  A << 1.0, 0.0;
  return ProblemData{QuadraticData{Matrix::Identity(2, 2), a, 0.5 * a.squaredNorm(), std::nullopt},
                     AffineData{A, vec({0.0})}};
}

inline GalleryInstance gallery_hyperplane_strong() {
  return make_instance("G2", {"affine_constrained", "strongly_convex"}, hyperplane_problem(),
                       DynamicsParams{3.0, 2.0, 0.9}, vec({2.0, -1.0}), vec({0.5, 0.5}));
}

inline GalleryInstance gallery_subspace_flat() {
  Matrix A(2, 5);
  A << 1, 0, 0, 1, 0,
       0, 1, 1, 0, 0;
  const Vector q = vec({2.0, 1.0, 0.5, 0.0, 0.0});
  ProblemData d{QuadraticData{q.asDiagonal().toDenseMatrix(), vec({1.0, -1.0, 0.5, 0.0, 0.0}), 0.0, std::nullopt},
                AffineData{A, vec({1.0, 1.0})}};
  return make_instance("G3", {"affine_constrained"}, std::move(d), DynamicsParams{3.0, 2.0, 0.9},
                       vec({0.5, -0.5, 1.0, 0.2, 0.3}), vec({0.1, 0.1, -0.1, 0.1, 0.1}), true);
}

inline GalleryInstance gallery_degenerate_lg() {
  return make_instance("G4", {"affine_constrained", "strongly_convex", "degenerate_lg_one"}, hyperplane_problem(),
                       DynamicsParams{1.0, 1.0, 0.9}, vec({2.0, -1.0}), vec({0.5, 0.5}));
}

inline constexpr std::uint64_t kMidscaleSeed = 20240531;

/// Random instance: Q = U diag(s) U^T with s log-spaced in [0.1, 10], unit-norm
/// constraint rows, and data chosen so that (z*, nu*) solves the KKT system.
inline ProblemData midscale_problem(std::uint64_t seed, int n = 50, int m = 10) {
  UniformSource rng(seed);
  const Matrix U = Eigen::HouseholderQR<Matrix>(rng.matrix(n, n)).householderQ();
  Vector s(n);
  for (int i = 0; i < n; ++i) s(i) = std::pow(10.0, -1.0 + 2.0 * i / (n - 1));
  Matrix Q = U * s.asDiagonal() * U.transpose();
  Q = 0.5 * (Q + Q.transpose()).eval();
  Matrix A = rng.matrix(m, n);
  A.rowwise().normalize();
  const Vector z = rng.vector(n);
  const Vector nu = 0.2 * rng.vector(m);
  return ProblemData{QuadraticData{Q, Q * z + A.transpose() * nu, 0.0, std::nullopt}, AffineData{A, A * z}};
}

inline GalleryInstance gallery_midscale(std::uint64_t seed = kMidscaleSeed) {
  ProblemData d = midscale_problem(seed);
  UniformSource rng(seed + 1);
  const Vector u0 = rng.vector(50);
  return make_instance("G5", {"affine_constrained", "strongly_convex"}, std::move(d), DynamicsParams{3.0, 2.0, 0.9},
                       u0, Vector::Zero(50));
}

inline std::vector<GalleryInstance> standard_gallery() {
  return {gallery_free_quadratic(), gallery_hyperplane_strong(), gallery_subspace_flat(), gallery_degenerate_lg(),
          gallery_midscale()};
}

inline GalleryInstance builtin_instance(const std::string& name) {
  if (name == "G1" || name == "free-quadratic") return gallery_free_quadratic();
  if (name == "G2" || name == "hyperplane-strong") return gallery_hyperplane_strong();
  if (name == "G3" || name == "subspace-flat") return gallery_subspace_flat();
  if (name == "G4" || name == "degenerate-lg") return gallery_degenerate_lg();
  if (name == "G5" || name == "midscale") return gallery_midscale();
  throw std::invalid_argument("unknown gallery instance '" + name + "'");
}

/// Default schedule for long verification runs: shifted_power(1.5, 12, 0.03).
/// t0 = 12 clears alpha / k_max for (gamma, lambda, theta) = (3, 2, 0.9) and (1, 1, 0.9).
inline PenaltySchedule default_schedule() { return PenaltySchedule::shifted_power(1.5, 12.0, 0.03); }

}  // namespace hdd
