#include <cmath>

#include <gtest/gtest.h>

#include "hdd/ode.hpp"

using namespace hdd;

namespace {

auto decay = [](double, const Vector& s, Vector& ds) { ds = -s; };

double final_value(const IntegratorControls& c, double t_end, Vector s0,
                   const std::function<void(double, const Vector&, Vector&)>& rhs, int component = 0) {
  double last = 0.0;
  solve_ivp(rhs, 0.0, std::move(s0), t_end, c, [&](const StepView& st) { last = st.s1(component); });
  return last;
}

}  // namespace

TEST(Dopri, ExponentialDecayToTolerance) {
  AdaptiveDopri c;
  c.rel_tol = 1e-10;
  c.abs_tol = 1e-12;
  const double y = final_value(c, 5.0, Vector::Ones(1), decay);
  EXPECT_NEAR(y, std::exp(-5.0), 1e-10);
}

TEST(Dopri, HarmonicOscillatorOverTenPeriods) {
  AdaptiveDopri c;
  c.rel_tol = 1e-10;
  c.abs_tol = 1e-12;
  auto osc = [](double, const Vector& s, Vector& ds) {
    ds(0) = s(1);
    ds(1) = -s(0);
  };
  const double T = 20 * M_PI;
  Vector s0(2);
  s0 << 1, 0;
  EXPECT_NEAR(final_value(c, T, s0, osc, 0), 1.0, 1e-7);
  EXPECT_NEAR(final_value(c, T, s0, osc, 1), 0.0, 1e-7);
}

TEST(Dopri, StepsAreContiguousAndRespectTheCap) {
  AdaptiveDopri c;
  double t_prev = 0.0;
  long steps = 0;
  solve_ivp(
      decay, 0.0, Vector::Ones(1), 3.0, c, [](double t) { return 0.01 * (1 + t); },
      [&](const StepView& st) {
        EXPECT_DOUBLE_EQ(st.t0, t_prev);
        EXPECT_LE(st.t1 - st.t0, 0.01 * (1 + st.t0) * (1 + 1e-12));
        t_prev = st.t1;
        ++steps;
      });
  EXPECT_EQ(t_prev, 3.0);
  EXPECT_GE(steps, 300 / 4);
}

TEST(Dopri, StiffProblemUnderflowsMinStep) {
  AdaptiveDopri c;
  c.min_step = 1e-6;
  auto stiff = [](double, const Vector& s, Vector& ds) { ds = -1e9 * (s.array() - 1.0).matrix(); };
  Vector s0(1);
  s0 << 0.0;
  try {
    solve_ivp(stiff, 0.0, s0, 1.0, c, [](const StepView&) {});
    FAIL() << "expected OdeFailure";
  } catch (const OdeFailure& e) {
    EXPECT_EQ(e.kind(), OdeFailureKind::step_underflow);
    EXPECT_TRUE(e.state().allFinite());
  }
}

TEST(Dopri, BlowUpIsReported) {
  AdaptiveDopri c;
  auto blow = [](double, const Vector& s, Vector& ds) { ds = s.array().square().matrix(); };
  EXPECT_THROW(solve_ivp(blow, 0.0, Vector::Ones(1), 2.0, c, [](const StepView&) {}), OdeFailure);
}

TEST(Rk4, HalvingTheStepShrinksErrorBySixteen) {
  const double exact = std::exp(-2.0);
  const double e1 = std::abs(final_value(FixedRk4{0.05}, 2.0, Vector::Ones(1), decay) - exact);
  const double e2 = std::abs(final_value(FixedRk4{0.025}, 2.0, Vector::Ones(1), decay) - exact);
  EXPECT_GT(e1 / e2, 15.0);
  EXPECT_LT(e1 / e2, 17.0);
}

TEST(Rk4, LastStepLandsOnEnd) {
  double end = 0.0;
  long steps = 0;
  solve_ivp(decay, 0.0, Vector::Ones(1), 1.05, FixedRk4{0.1}, [&](const StepView& st) {
    end = st.t1;
    ++steps;
  });
  EXPECT_EQ(end, 1.05);
  EXPECT_EQ(steps, 11);
}

TEST(Hermite, ReproducesCubics) {
  auto p = [](double t) { return 2 * t * t * t - t * t + 3 * t - 1; };
  auto dp = [](double t) { return 6 * t * t - 2 * t + 3; };
  const double a = 0.3, b = 1.1;
  Vector s0(1), f0(1), s1(1), f1(1), out(1);
  s0 << p(a);
  f0 << dp(a);
  s1 << p(b);
  f1 << dp(b);
  const StepView st{a, b, s0, f0, s1, f1};
  for (int i = 0; i <= 20; ++i) {
    const double t = a + (b - a) * i / 20.0;
    hermite_interpolate(st, t, out);
    EXPECT_NEAR(out(0), p(t), 1e-13);
  }
}

TEST(Controls, Validation) {
  EXPECT_THROW(validate_controls(FixedRk4{0.0}), std::invalid_argument);
  AdaptiveDopri c;
  c.rel_tol = -1;
  EXPECT_THROW(validate_controls(c), std::invalid_argument);
  EXPECT_EQ(method_name(FixedRk4{}), "rk4");
  EXPECT_EQ(method_name(AdaptiveDopri{}), "dopri5");
}
