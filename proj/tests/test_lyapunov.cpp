#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hdd/flow.hpp"
#include "hdd/gallery.hpp"
#include "hdd/lyapunov.hpp"
#include "support.hpp"

using namespace hdd;
using namespace testing_support;

namespace {

AdaptiveDopri tight() {
  AdaptiveDopri c;
  c.rel_tol = 1e-11;
  c.abs_tol = 1e-13;
  return c;
}

Trajectory fine_run(const GalleryInstance& g, const PenaltySchedule& s, double T, double cadence) {
  return integrate(g.problem, s, g.params, g.u0, g.v0, T, tight(), FlowOptions{cadence});
}

}  // namespace

TEST(Energy, FreeQuadraticHandValues) {
  const auto g = gallery_free_quadratic();
  const auto s = default_schedule();
  const PointEval p = evaluate_point(0.0, (Vector(2) << 1, 0).finished(), Vector::Zero(2), g.problem, s, g.params);
  EXPECT_EQ(p.y, (Vector(2) << 1, 0).finished());
  for (double d : {0.0, 1.0, 2.5, 7.3}) EXPECT_DOUBLE_EQ(energy_delta(d, p), d / 2 + 0.5);
}

TEST(Energy, AtTheSolutionOnlyTheObjectiveRemains) {
  const auto g = gallery_free_quadratic();
  const auto s = default_schedule();
  const PointEval p = evaluate_point(3.0, Vector::Zero(2), Vector::Zero(2), g.problem, s, g.params);
  EXPECT_EQ(energy_delta(2.0, p), 0.0);
  EXPECT_EQ(energy_E(p, Vector::Zero(2), g.params), 0.0);
  EXPECT_EQ(energy_delta_dot_analytic(2.0, p, g.params), 0.0);
}

TEST(Energy, ShiftedObjectiveAtSolution) {
  // phi = |x|^2/2 + 3: E at (z, 0) equals (1 + gamma lambda) phi(z) / eps.
  const DynamicsParams params{3, 2, 0.9};
  ProblemData d{QuadraticData{Matrix::Identity(2, 2), Vector::Zero(2), 3.0}, ZeroData{2}};
  const auto pb = build_problem(d);
  const PointEval p = evaluate_point(1.0, Vector::Zero(2), Vector::Zero(2), pb, default_schedule(), params);
  EXPECT_NEAR(energy_E(p, Vector::Zero(2), params), 7 * 3.0 / epsilon(params), 1e-13);
}

TEST(Energy, TranslationCovariance) {
  std::mt19937_64 rng(17);
  const auto g = gallery_hyperplane_strong();
  const auto s = default_schedule();
  for (int trial = 0; trial < 100; ++trial) {
    const Vector shift = random_vector(rng, 2, 5.0);
    const auto& a = std::get<AffineData>(g.data.psi);
    // phi(x - shift) and the constraint moved by shift.
    QuadraticData q = g.data.phi;
    q.c = g.data.phi.c + 0.5 * shift.dot(q.Q * shift) + q.b.dot(shift);
    q.b = q.b + q.Q * shift;
    const auto moved = build_problem(ProblemData{q, AffineData{a.A, a.c + a.A * shift}});
    const Vector x = random_vector(rng, 2, 3.0);
    const Vector v = random_vector(rng, 2);
    const double t = 0.1 * trial;
    const PointEval p0 = evaluate_point(t, x, v, g.problem, s, g.params);
    const PointEval p1 = evaluate_point(t, x + shift, v, moved, s, g.params);
    const double e0 = energy_E(p0, g.reference.z, g.params);
    const double e1 = energy_E(p1, g.reference.z + shift, g.params);
    EXPECT_NEAR(e0, e1, 1e-10 * (1 + std::abs(e0)));
  }
}

TEST(Energy, DissipationIdentitiesHoldAtRandomStates) {
  std::mt19937_64 rng(23);
  for (const auto& g : {gallery_hyperplane_strong(), gallery_degenerate_lg(), gallery_subspace_flat()}) {
    const auto s = PenaltySchedule::shifted_power(1.5, 12, 0.7);
    const int n = g.problem.dimension();
    for (int trial = 0; trial < 150; ++trial) {
      const double t = 0.3 * trial;
      const PointEval p = evaluate_point(t, random_vector(rng, n, 3.0), random_vector(rng, n, 2.0), g.problem, s,
                                         g.params);
      const double d1 = delta1(g.params), d2 = delta2(g.params);
      const double scale1 = energy_delta_dot_scale(d1, p, g.params);
      const double scale2 = energy_delta_dot_scale(d2, p, g.params);
      EXPECT_NEAR(energy_delta_dot_analytic(d1, p, g.params) - d1 * p.beta_dot * p.psi,
                  delta1_square_form(p, g.params), 1e-12 * (1 + scale1));
      EXPECT_NEAR(energy_delta_dot_analytic(d2, p, g.params) - d2 * p.beta_dot * p.psi,
                  delta2_square_form(p, g.params), 1e-12 * (1 + scale2));
      EXPECT_LE(delta1_square_form(p, g.params), 0.0);
      EXPECT_LE(delta2_square_form(p, g.params), 0.0);
      // delta = 1 + gamma lambda removes the cross terms.
      const double d0 = delta_one_plus_gl(g.params);
      EXPECT_NEAR(energy_delta_dot_analytic(d0, p, g.params),
                  d0 * p.beta_dot * p.psi - g.params.gamma * p.v.squaredNorm() -
                      g.params.lambda * p.grad_comb.squaredNorm(),
                  1e-12 * (1 + energy_delta_dot_scale(d0, p, g.params)));
    }
  }
}

TEST(Energy, DegenerateDeltaTwoIsZero) {
  const auto g = gallery_degenerate_lg();
  EXPECT_EQ(delta2(g.params), 0.0);
  EXPECT_EQ(delta1(g.params), 4.0);
}

TEST(Energy, DerivativeMatchesFiniteDifferencesAlongFlow) {
  const auto g = gallery_hyperplane_strong();
  const auto s = default_schedule();
  const auto traj = fine_run(g, s, 10.0, 5e-4);
  for (double d : {delta_one_plus_gl(g.params), delta1(g.params), delta2(g.params), 0.0, 7.3}) {
    const auto c = check_energy_derivative(d, traj, g.problem, s, g.params);
    EXPECT_GT(c.checked, 19000);
    EXPECT_LE(c.max_normalized_error, 1e-4) << "delta=" << d << " at t=" << c.worst_time;
  }
}

TEST(Energy, EDerivativeMatchesFiniteDifferences) {
  const auto g = gallery_subspace_flat();
  const auto s = default_schedule();
  const auto traj = fine_run(g, s, 10.0, 1e-3);
  const double k = s.sup_log_derivative();
  const auto check = lyapunov_inequality_check(traj, g.problem, s, g.params, g.reference.z, k);
  for (const auto& m : check.margins)
    EXPECT_NEAR(m.de_fd, m.de_analytic, 1e-5 * (1 + std::abs(m.de_analytic))) << "t=" << m.t;
}

TEST(Lyapunov, InequalityHoldsOnHyperplane) {
  const auto g = gallery_hyperplane_strong();
  const auto s = default_schedule();
  const auto traj = fine_run(g, s, 15.0, 5e-4);
  const auto check =
      lyapunov_inequality_check(traj, g.problem, s, g.params, g.reference.z, s.sup_log_derivative());
  EXPECT_TRUE(check.pass);
  EXPECT_TRUE(check.strong_checked);
  EXPECT_LE(check.max_normalized, 1e-4);
  EXPECT_LE(check.max_strong_normalized, 1e-4);
}

TEST(Lyapunov, UnconstrainedBoundIsZero) {
  const auto g = gallery_free_quadratic();
  const auto s = default_schedule();
  EXPECT_EQ(lyapunov_bound(2.0, g.problem.phi.grad(g.reference.z), g.problem.psi), 0.0);
  const auto traj = fine_run(g, s, 10.0, 1e-3);
  const auto check = lyapunov_inequality_check(traj, g.problem, s, g.params, g.reference.z, s.sup_log_derivative());
  EXPECT_TRUE(check.pass);
  for (const auto& m : check.margins) EXPECT_LE(m.de_fd, 1e-4 * (1 + std::abs(m.de_fd)));
}

TEST(Lyapunov, CoarseSamplingIsNotFalselyFailed) {
  const auto g = gallery_hyperplane_strong();
  const auto s = default_schedule();
  const auto traj = fine_run(g, s, 10.0, 0.5);
  const auto check = lyapunov_inequality_check(traj, g.problem, s, g.params, g.reference.z, s.sup_log_derivative());
  for (const auto& m : check.margins)
    if (m.status == MarginStatus::fail) EXPECT_GT(m.margin, 1e-4 * (1 + std::abs(m.de_fd)) + m.fd_error);
}

TEST(Integrals, ClosedFormSpeedIntegral) {
  const auto g = gallery_free_quadratic();
  const auto s = default_schedule();
  const auto traj = fine_run(g, s, 10.0, 1e-3);
  const auto acc = accumulate_integrals(traj, g.problem, s, g.params, nullptr);
  EXPECT_NEAR(acc.back().speed_sq, 0.25, 1e-4);
}

TEST(Integrals, EquilibriumTrajectoryHasZeroIntegrals) {
  const auto g = gallery_free_quadratic();
  const auto s = default_schedule();
  const auto traj = integrate(g.problem, s, g.params, Vector::Zero(2), Vector::Zero(2), 50.0, AdaptiveDopri{},
                              FlowOptions{0.5});
  const auto ref = make_integral_reference(g.problem, g.reference.z, s.sup_log_derivative(), g.params);
  const auto acc = accumulate_integrals(traj, g.problem, s, g.params, &ref);
  EXPECT_EQ(acc.back().beta_psi, 0.0);
  EXPECT_EQ(acc.back().speed_sq, 0.0);
  EXPECT_EQ(acc.back().grad_comb_sq, 0.0);
  EXPECT_EQ(acc.back().inner_gradz, 0.0);
  EXPECT_EQ(acc.back().lemma_iii, 0.0);
  const auto rep = convergence_verdicts(traj, g.problem, s, g.params, g.reference.z, g.reference.phi_z);
  for (const auto& c : rep.claims) EXPECT_EQ(c.verdict, Verdict::pass) << c.id;
}

TEST(Verdicts, VariationalResidual) {
  const auto g = gallery_hyperplane_strong();
  EXPECT_GE(vi_residual(g.problem, g.reference.z, 1.0), -1e-12);
  EXPECT_NEAR(vi_residual(g.problem, (Vector(2) << 0, 3).finished(), 1.0), -1.0, 1e-12);
}

TEST(Verdicts, OscillatingGapIsInconclusive) {
  const auto g = gallery_free_quadratic();
  const auto s = default_schedule();
  Trajectory traj;
  for (int i = 0; i <= 100; ++i) {
    const double r = 0.1 + 0.05 * std::sin(0.7 * i);
    Sample smp{static_cast<double>(i), (Vector(2) << r, 0).finished(), Vector::Zero(2), Vector::Zero(2), {}};
    traj.samples.push_back(smp);
  }
  const auto rep = convergence_verdicts(traj, g.problem, s, g.params, g.reference.z, g.reference.phi_z);
  EXPECT_EQ(rep.claim("T1_phi_value").verdict, Verdict::inconclusive);
  EXPECT_EQ(rep.claim("S1_strong_convergence").verdict, Verdict::inconclusive);
}

TEST(Verdicts, MonotoneButLargeGapFails) {
  const auto g = gallery_free_quadratic();
  Trajectory traj;
  for (int i = 0; i <= 100; ++i)
    traj.samples.push_back(Sample{static_cast<double>(i), (Vector(2) << 1 + 0.001 * i, 0).finished(), Vector::Zero(2),
                                  Vector::Zero(2), {}});
  const auto rep =
      convergence_verdicts(traj, g.problem, default_schedule(), g.params, g.reference.z, g.reference.phi_z);
  EXPECT_EQ(rep.claim("T1_phi_value").verdict, Verdict::fail);
  EXPECT_EQ(rep.claim("T6_trajectory_converges").verdict, Verdict::fail);
}

TEST(Verdicts, ConstantPenaltyAblationDoesNotPass) {
  const auto g = gallery_hyperplane_strong();
  const auto s = PenaltySchedule::constant(10);
  FlowOptions o{0.5};
  o.ablation = true;
  const auto traj = integrate(g.problem, s, g.params, g.u0, g.v0, 200.0, AdaptiveDopri{}, o);
  const auto rep = convergence_verdicts(traj, g.problem, s, g.params, g.reference.z, g.reference.phi_z);
  EXPECT_NE(rep.claim("T1_phi_value").verdict, Verdict::pass);
  EXPECT_NE(rep.claim("S1_strong_convergence").verdict, Verdict::pass);
}

TEST(Verdicts, FlatInstanceSkipsStrongConvergence) {
  const auto g = gallery_subspace_flat();
  const auto s = default_schedule();
  const auto traj = integrate(g.problem, s, g.params, g.u0, g.v0, 20.0, AdaptiveDopri{}, FlowOptions{0.5});
  const auto rep = convergence_verdicts(traj, g.problem, s, g.params, g.reference.z, g.reference.phi_z);
  EXPECT_EQ(rep.claim("S1_strong_convergence").verdict, Verdict::not_applicable);
}

TEST(Diagnostics, RowsCarryFdColumnsInTheInterior) {
  const auto g = gallery_hyperplane_strong();
  const auto s = default_schedule();
  const auto traj = fine_run(g, s, 2.0, 0.1);
  const auto rows = compute_diagnostics(traj, g.problem, s, g.params, g.reference.z, s.sup_log_derivative());
  ASSERT_EQ(rows.size(), traj.samples.size());
  EXPECT_TRUE(std::isnan(rows.front().de_fd));
  EXPECT_TRUE(std::isnan(rows.back().de_fd));
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    EXPECT_TRUE(std::isfinite(rows[i].de_fd));
    EXPECT_TRUE(std::isfinite(rows[i].margin_lyap));
    EXPECT_GT(rows[i].beta_tilde, 0.0);
  }
}
