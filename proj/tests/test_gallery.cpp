#include <filesystem>

#include <gtest/gtest.h>

#include "hdd/gallery.hpp"
#include "hdd/serialization.hpp"

using namespace hdd;

TEST(Kkt, ProjectionOntoHyperplane) {
  Matrix A(1, 2);
  A << 1, 0;
  const auto k = solve_reference_kkt(Matrix::Identity(2, 2), (Vector(2) << 1, 2).finished(), A, Vector::Zero(1));
  EXPECT_NEAR(k.z(0), 0.0, 1e-14);
  EXPECT_NEAR(k.z(1), 2.0, 1e-14);
  // grad phi(z) = (-1, 0), so grad phi(z) + A^T nu = 0 needs nu = 1.
  EXPECT_NEAR(k.nu(0), 1.0, 1e-14);
  EXPECT_LE(k.residual, 1e-12);
}

TEST(Kkt, SymmetricHyperplane) {
  Matrix A(1, 2);
  A << 1, 1;
  const auto k = solve_reference_kkt(Matrix::Identity(2, 2), Vector::Zero(2), A, (Vector(1) << 2).finished());
  EXPECT_NEAR(k.z(0), 1.0, 1e-14);
  EXPECT_NEAR(k.z(1), 1.0, 1e-14);
}

TEST(Kkt, UnconstrainedIsNewtonPoint) {
  Matrix Q(2, 2);
  Q << 2, 1, 1, 3;
  const Vector b = (Vector(2) << 1, -1).finished();
  const auto k = solve_reference_kkt(Q, b, Matrix(0, 2), Vector(0));
  EXPECT_LE((k.z - Q.ldlt().solve(b)).norm(), 1e-14);
  EXPECT_EQ(k.nu.size(), 0);
}

TEST(Kkt, SingularSystemNeedsOptIn) {
  Matrix Q = Matrix::Zero(3, 3);
  Q(0, 0) = 1;
  Matrix A(1, 3);
  A << 0, 1, 0;
  EXPECT_THROW(solve_reference_kkt(Q, Vector::Zero(3), A, Vector::Ones(1)), std::invalid_argument);
  KktOptions o;
  o.allow_nonunique = true;
  const auto k = solve_reference_kkt(Q, Vector::Zero(3), A, Vector::Ones(1), o);
  EXPECT_FALSE(k.unique);
  EXPECT_NEAR(k.z(2), 0.0, 1e-14);  // minimum norm along the flat direction
  EXPECT_LE(k.residual, 1e-12);
}

TEST(Kkt, InconsistentSystemIsRejected) {
  Matrix Q = Matrix::Zero(2, 2);
  Q(0, 0) = 1;
  KktOptions o;
  o.allow_nonunique = true;
  // b has a component along the flat direction: unbounded, no KKT point.
  EXPECT_THROW(solve_reference_kkt(Q, (Vector(2) << 0, 1).finished(), Matrix(0, 2), Vector(0), o),
               std::runtime_error);
}

TEST(Gallery, EveryReferenceSatisfiesOptimality) {
  for (const auto& g : standard_gallery()) {
    EXPECT_LE(g.reference.kkt_residual, 1e-10) << g.name;
    const Vector p = -g.problem.phi.grad(g.reference.z);
    EXPECT_TRUE(std::isfinite(g.problem.psi.conjugate_gap(p))) << g.name;
    EXPECT_TRUE(g.problem.psi.argmin_contains(g.reference.z, 1e-10)) << g.name;
    EXPECT_NEAR(g.reference.phi_z, g.problem.phi.value(g.reference.z), 1e-14) << g.name;
  }
}

TEST(Gallery, KnownReferences) {
  const auto g1 = gallery_free_quadratic();
  EXPECT_EQ(g1.reference.z, Vector::Zero(2));
  EXPECT_EQ(g1.reference.phi_z, 0.0);
  EXPECT_TRUE(g1.has_tag("psi_zero"));
  const auto g2 = gallery_hyperplane_strong();
  EXPECT_NEAR((g2.reference.z - (Vector(2) << 0, 2).finished()).norm(), 0.0, 1e-14);
  EXPECT_NEAR(g2.reference.phi_z, 0.5, 1e-14);
  EXPECT_EQ(g2.problem.phi.strong_convexity, 1.0);
  const auto g4 = gallery_degenerate_lg();
  EXPECT_EQ(g4.params.gamma * g4.params.lambda, 1.0);
  EXPECT_TRUE(g4.has_tag("degenerate_lg_one"));
}

TEST(Gallery, FlatInstanceHasFlatDirectionInsideTheConstraint) {
  const auto g = gallery_subspace_flat();
  EXPECT_FALSE(g.reference.unique);
  EXPECT_EQ(g.problem.phi.strong_convexity, 0.0);
  const Vector e5 = Vector::Unit(5, 4);
  EXPECT_LE((g.problem.psi.tangent_project(e5) - e5).norm(), 1e-14);
  // Moving along e5 keeps optimality, so S is not a singleton.
  const Vector z2 = g.reference.z + 0.7 * e5;
  EXPECT_NEAR(g.problem.phi.value(z2), g.reference.phi_z, 1e-14);
  EXPECT_TRUE(g.problem.psi.argmin_contains(z2, 1e-12));
}

TEST(Gallery, MidscaleStructure) {
  const auto g = gallery_midscale();
  EXPECT_EQ(g.problem.dimension(), 50);
  const auto& a = std::get<AffineData>(g.data.psi);
  EXPECT_EQ(a.A.rows(), 10);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(a.A.row(i).norm(), 1.0, 1e-14);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g.data.phi.Q);
  EXPECT_NEAR(eig.eigenvalues().minCoeff(), 0.1, 1e-12);
  EXPECT_NEAR(eig.eigenvalues().maxCoeff(), 10.0, 1e-11);
  EXPECT_LE(g.reference.kkt_residual, 1e-10);
  EXPECT_LE(g.reference.nu.cwiseAbs().maxCoeff(), 0.2);
}

TEST(Gallery, GeneratorIsDeterministic) {
  const auto a = midscale_problem(kMidscaleSeed);
  const auto b = midscale_problem(kMidscaleSeed);
  EXPECT_EQ(a.phi.Q, b.phi.Q);
  EXPECT_EQ(std::get<AffineData>(a.psi).A, std::get<AffineData>(b.psi).A);
  const auto c = midscale_problem(kMidscaleSeed + 7);
  EXPECT_NE(a.phi.Q, c.phi.Q);
}

TEST(Gallery, StoredDocumentsMatchTheGenerators) {
  const std::filesystem::path dir = std::filesystem::path(HDD_SOURCE_DIR) / "gallery";
  for (const auto& g : standard_gallery()) {
    const auto stored = instance_from_json(read_json_file((dir / (g.name + ".json")).string()));
    EXPECT_EQ(stored.data.phi.Q, g.data.phi.Q) << g.name;
    EXPECT_EQ(stored.data.phi.b, g.data.phi.b) << g.name;
    EXPECT_EQ(stored.data.phi.c, g.data.phi.c) << g.name;
    EXPECT_EQ(stored.u0, g.u0) << g.name;
    EXPECT_EQ(stored.v0, g.v0) << g.name;
    EXPECT_EQ(stored.reference.z, g.reference.z) << g.name;
    EXPECT_EQ(stored.params.gamma, g.params.gamma) << g.name;
    EXPECT_EQ(stored.tags, g.tags) << g.name;
  }
}

TEST(Gallery, JsonRoundTripRejectsCorruptedReference) {
  auto j = to_json(gallery_hyperplane_strong());
  j["reference"]["z"][1] = 2.001;
  EXPECT_THROW(instance_from_json(j), ConfigError);
}

TEST(Gallery, LookupByName) {
  EXPECT_EQ(builtin_instance("hyperplane-strong").name, "G2");
  EXPECT_THROW(builtin_instance("G9"), std::invalid_argument);
}
