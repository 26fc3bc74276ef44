#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>

#include "hdd/types.hpp"

namespace hdd {

/// Classical fourth-order Runge-Kutta with a fixed step (last step shortened
/// to land on t_end).
struct FixedRk4 {
  double step = 1e-2;
};

/// Dormand-Prince 5(4) with error-per-step control.
///
/// Step factor = clamp(0.9 * err^(-1/5), 0.2, 5), where err is the RMS of
/// the local error scaled by abs_tol + rel_tol * max(|s_old|, |s_new|).
/// `stiffness_cap` is used by the flow layer to bound the step by
/// stiffness_cap / (1 + beta(t) L), L the gradient Lipschitz constant of psi;
/// 0 disables it.
struct AdaptiveDopri {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double max_step = kInfinity;
  double min_step = 1e-12;
  double initial_step = 0.0;
  double stiffness_cap = 1.0;
};

using IntegratorControls = std::variant<FixedRk4, AdaptiveDopri>;

inline constexpr double kSafety = 0.9;
inline constexpr double kErrorExponent = 0.2;
inline constexpr double kMinFactor = 0.2;
inline constexpr double kMaxFactor = 5.0;

inline std::string method_name(const IntegratorControls& c) {
  return std::holds_alternative<FixedRk4>(c) ? "rk4" : "dopri5";
}

inline void validate_controls(const IntegratorControls& c) {
  if (const auto* rk = std::get_if<FixedRk4>(&c)) {
    if (!(rk->step > 0.0)) throw std::invalid_argument("rk4 step must be positive");
    return;
  }
  const auto& a = std::get<AdaptiveDopri>(c);
  if (!(a.rel_tol > 0.0) || !(a.abs_tol > 0.0) || !(a.max_step > 0.0) || !(a.min_step > 0.0) ||
      a.initial_step < 0.0 || a.stiffness_cap < 0.0)
    throw std::invalid_argument("adaptive controls need positive tolerances and step bounds");
}

/// One accepted step, with endpoint derivatives for Hermite dense output.
struct StepView {
  double t0;
  double t1;
  const Vector& s0;
  const Vector& f0;
  const Vector& s1;
  const Vector& f1;
};

struct OdeStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
  double last_step = 0.0;
};

enum class OdeFailureKind { step_underflow, non_finite };

class OdeFailure : public std::runtime_error {
 public:
  OdeFailure(OdeFailureKind kind, double t, Vector state, const std::string& what)
      : std::runtime_error(what), kind_(kind), t_(t), state_(std::move(state)) {}

  OdeFailureKind kind() const { return kind_; }
  double time() const { return t_; }
  const Vector& state() const { return state_; }

 private:
  OdeFailureKind kind_;
  double t_;
  Vector state_;
};

/// Cubic Hermite interpolation inside an accepted step.
inline void hermite_interpolate(const StepView& step, double t, Vector& out) {
  const double h = step.t1 - step.t0;
  const double s = (t - step.t0) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  out = h00 * step.s0 + (h10 * h) * step.f0 + h01 * step.s1 + (h11 * h) * step.f1;
}

namespace detail {

inline double scaled_rms(const Vector& v, const Vector& a, const Vector& b, double abs_tol, double rel_tol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double sc = abs_tol + rel_tol * std::max(std::abs(a(i)), std::abs(b(i)));
    const double q = v(i) / sc;
    acc += q * q;
  }
  return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(1, v.size())));
}

}  // namespace detail

/// Integrates s' = rhs(t, s) from t0 to t_end.
///
/// `rhs(t, s, out)` writes the derivative; `cap(t)` bounds the step taken from
/// t; `observe(StepView)` sees every accepted step. Throws OdeFailure on step
/// underflow or a non-finite state, after the last good step was observed.
template <class Rhs, class Cap, class Observer>
OdeStats solve_ivp(Rhs&& rhs, double t0, Vector s, double t_end, const IntegratorControls& controls, Cap&& cap,
                   Observer&& observe) {
  validate_controls(controls);
  if (!(t_end > t0)) throw std::invalid_argument("solve_ivp: t_end must exceed t0");
  if (!s.allFinite()) throw OdeFailure(OdeFailureKind::non_finite, t0, s, "non-finite initial state");

  const auto n = s.size();
  OdeStats stats;
  Vector f(n), s_new(n), f_new(n), k2(n), k3(n), k4(n), k5(n), k6(n), tmp(n), err(n);
  double t = t0;
  rhs(t, s, f);
  ++stats.rhs_evals;
  if (!f.allFinite()) throw OdeFailure(OdeFailureKind::non_finite, t, s, "non-finite derivative at start");

  const double end_slack = 1e-12 * std::max(1.0, std::abs(t_end));

  if (const auto* rk = std::get_if<FixedRk4>(&controls)) {
    while (t < t_end - end_slack) {
      const double h = std::min(rk->step, t_end - t);
      tmp = s + (0.5 * h) * f;
      rhs(t + 0.5 * h, tmp, k2);
      tmp = s + (0.5 * h) * k2;
      rhs(t + 0.5 * h, tmp, k3);
      tmp = s + h * k3;
      rhs(t + h, tmp, k4);
      s_new = s + (h / 6.0) * (f + 2.0 * k2 + 2.0 * k3 + k4);
      const double t_new = (t_end - (t + h) <= end_slack) ? t_end : t + h;
      if (!s_new.allFinite()) throw OdeFailure(OdeFailureKind::non_finite, t, s, "non-finite state");
      rhs(t_new, s_new, f_new);
      stats.rhs_evals += 4;
      if (!f_new.allFinite()) throw OdeFailure(OdeFailureKind::non_finite, t, s, "non-finite derivative");
      ++stats.accepted;
      stats.last_step = h;
      observe(StepView{t, t_new, s, f, s_new, f_new});
      t = t_new;
      s.swap(s_new);
      f.swap(f_new);
    }
    return stats;
  }

  const auto& c = std::get<AdaptiveDopri>(controls);
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;

  auto step_bound = [&](double at) { return std::min(c.max_step, cap(at)); };

  double h = c.initial_step;
  if (h <= 0.0) {
    // Hairer-Wanner starting step.
    const Vector zero = Vector::Zero(n);
    const double d0 = detail::scaled_rms(s, s, zero, c.abs_tol, c.rel_tol);
    const double d1 = detail::scaled_rms(f, s, zero, c.abs_tol, c.rel_tol);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, step_bound(t));
    tmp = s + h0 * f;
    rhs(t + h0, tmp, k2);
    ++stats.rhs_evals;
    const Vector diff = k2 - f;
    const double d2 = detail::scaled_rms(diff, s, zero, c.abs_tol, c.rel_tol) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, 1e-3 * h0) : std::pow(0.01 / dm, kErrorExponent);
    h = std::min(100.0 * h0, h1);
  }

  bool rejected_last = false;
  while (t < t_end - end_slack) {
    h = std::min(h, step_bound(t));
    if (h < c.min_step || t + h == t)
      throw OdeFailure(OdeFailureKind::step_underflow, t, s,
                       "step size fell below min_step at t = " + std::to_string(t));
    double t_new = t + h;
    if (t_end - t_new <= end_slack) {
      h = t_end - t;
      t_new = t_end;
    }

    tmp = s + (h * a21) * f;
    rhs(t + c2 * h, tmp, k2);
    tmp = s + h * (a31 * f + a32 * k2);
    rhs(t + c3 * h, tmp, k3);
    tmp = s + h * (a41 * f + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, tmp, k4);
    tmp = s + h * (a51 * f + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, tmp, k5);
    tmp = s + h * (a61 * f + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, tmp, k6);
    s_new = s + h * (b1 * f + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(t_new, s_new, f_new);
    stats.rhs_evals += 6;
    err = h * (e1 * f + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * f_new);
    const double en = detail::scaled_rms(err, s, s_new, c.abs_tol, c.rel_tol);

    if (!std::isfinite(en) || en > 1.0) {
      ++stats.rejected;
      const double factor = std::isfinite(en) ? std::max(kMinFactor, kSafety * std::pow(en, -kErrorExponent))
                                              : kMinFactor;
      h *= std::min(1.0, factor);
      rejected_last = true;
      if (h < c.min_step)
        throw OdeFailure(OdeFailureKind::step_underflow, t, s, "step size fell below min_step at t = " +
                                                                   std::to_string(t));
      continue;
    }
    if (!s_new.allFinite() || !f_new.allFinite())
      throw OdeFailure(OdeFailureKind::non_finite, t, s, "non-finite state after accepted step");

    ++stats.accepted;
    stats.last_step = h;
    observe(StepView{t, t_new, s, f, s_new, f_new});
    t = t_new;
    s.swap(s_new);
    f.swap(f_new);

    double factor = en == 0.0 ? kMaxFactor : std::clamp(kSafety * std::pow(en, -kErrorExponent), kMinFactor, kMaxFactor);
    if (rejected_last) factor = std::min(factor, 1.0);
    rejected_last = false;
    h *= factor;
  }
  return stats;
}

/// Convenience overload without a step cap.
template <class Rhs, class Observer>
OdeStats solve_ivp(Rhs&& rhs, double t0, Vector s, double t_end, const IntegratorControls& controls,
                   Observer&& observe) {
  return solve_ivp(std::forward<Rhs>(rhs), t0, std::move(s), t_end, controls, [](double) { return kInfinity; },
                   std::forward<Observer>(observe));
}

}  // namespace hdd
