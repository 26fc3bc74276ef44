#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "hdd/convex_oracle.hpp"
#include "hdd/quadrature.hpp"
#include "hdd/types.hpp"

namespace hdd {

/// beta(t) = scale * (t + t0)^alpha
struct ShiftedPower {
  double alpha = 1.5;
  double t0 = 30.0;
  double scale = 1.0;
};

/// beta(t) = beta0 * exp(rate * t)
struct Exponential {
  double beta0 = 1.0;
  double rate = 1.0;
};

/// beta(t) = beta0. Does not tend to infinity; kept for ablation runs.
struct Constant {
  double beta0 = 1.0;
};

/// Nondecreasing, positive penalty weight with analytic derivative.
class PenaltySchedule {
 public:
  using Family = std::variant<ShiftedPower, Exponential, Constant>;

  explicit PenaltySchedule(Family family) : family_(family) { check(); }

  static PenaltySchedule shifted_power(double alpha, double t0, double scale = 1.0) {
    return PenaltySchedule(ShiftedPower{alpha, t0, scale});
  }
  static PenaltySchedule exponential(double beta0, double rate) {
    return PenaltySchedule(Exponential{beta0, rate});
  }
  static PenaltySchedule constant(double beta0) { return PenaltySchedule(Constant{beta0}); }

  const Family& family() const { return family_; }

  std::string family_name() const {
    return std::visit(
        [](const auto& f) -> std::string {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ShiftedPower>) return "shifted_power";
          else if constexpr (std::is_same_v<T, Exponential>) return "exponential";
          else return "constant";
        },
        family_);
  }

  double operator()(double t) const { return value(t); }

  double value(double t) const {
    return std::visit(
        [t](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ShiftedPower>) return f.scale * std::pow(t + f.t0, f.alpha);
          else if constexpr (std::is_same_v<T, Exponential>) return f.beta0 * std::exp(f.rate * t);
          else return f.beta0;
        },
        family_);
  }

  double derivative(double t) const {
    return std::visit(
        [t](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ShiftedPower>)
            return f.scale * f.alpha * std::pow(t + f.t0, f.alpha - 1.0);
          else if constexpr (std::is_same_v<T, Exponential>) return f.beta0 * f.rate * std::exp(f.rate * t);
          else return 0.0;
        },
        family_);
  }

  /// sup of beta'/beta over [0, inf), attained at t = 0 for every family.
  double sup_log_derivative() const {
    return std::visit(
        [](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ShiftedPower>) return f.alpha / f.t0;
          else if constexpr (std::is_same_v<T, Exponential>) return f.rate;
          else return 0.0;
        },
        family_);
  }

  bool tends_to_infinity() const { return !std::holds_alternative<Constant>(family_); }

  /// Closed form of the integral of 1/beta over [a, b]; b may be kInfinity.
  double reciprocal_integral(double a, double b) const {
    return std::visit(
        [a, b](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ShiftedPower>) {
            const double hi = std::isinf(b) ? 0.0 : std::pow(b + f.t0, 1.0 - f.alpha);
            return (std::pow(a + f.t0, 1.0 - f.alpha) - hi) / ((f.alpha - 1.0) * f.scale);
          } else if constexpr (std::is_same_v<T, Exponential>) {
            const double hi = std::isinf(b) ? 0.0 : std::exp(-f.rate * b);
            return (std::exp(-f.rate * a) - hi) / (f.beta0 * f.rate);
          } else {
            return std::isinf(b) ? kInfinity : (b - a) / f.beta0;
          }
        },
        family_);
  }

 private:
  void check() const {
    std::visit(
        [](const auto& f) {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ShiftedPower>) {
            if (!(f.alpha > 1.0) || !(f.t0 > 0.0) || !(f.scale > 0.0) || !std::isfinite(f.alpha) ||
                !std::isfinite(f.t0) || !std::isfinite(f.scale))
              throw std::invalid_argument("shifted_power schedule needs alpha > 1, t0 > 0, scale > 0");
          } else if constexpr (std::is_same_v<T, Exponential>) {
            if (!(f.beta0 > 0.0) || !(f.rate > 0.0) || !std::isfinite(f.beta0) || !std::isfinite(f.rate))
              throw std::invalid_argument("exponential schedule needs beta0 > 0, rate > 0");
          } else {
            if (!(f.beta0 > 0.0) || !std::isfinite(f.beta0))
              throw std::invalid_argument("constant schedule needs beta0 > 0");
          }
        },
        family_);
  }

  Family family_;
};

/// Damping gamma, Hessian weight lambda and the slack theta in (0, 1).
struct DynamicsParams {
  double gamma = 3.0;
  double lambda = 2.0;
  double theta = 0.9;

  bool valid() const {
    return gamma > 0.0 && lambda > 0.0 && theta > 0.0 && theta < 1.0 && std::isfinite(gamma) &&
           std::isfinite(lambda);
  }

  void validate() const {
    if (!valid()) throw std::invalid_argument("DynamicsParams: need gamma > 0, lambda > 0, 0 < theta < 1");
  }
};

/// epsilon = theta * min{2 gamma / 3, 2 / lambda}
inline double epsilon(const DynamicsParams& p) {
  return p.theta * std::min(2.0 * p.gamma / 3.0, 2.0 / p.lambda);
}

/// Upper bound on the growth rate k: theta / (1 + lambda gamma) * min{2 gamma / 3, 2 / lambda}.
inline double k_max(const DynamicsParams& p) { return epsilon(p) / (1.0 + p.lambda * p.gamma); }

/// Shrink factor 1 - k (1 + gamma lambda) / epsilon relating beta~ to beta.
inline double beta_tilde_factor(double k, const DynamicsParams& p) {
  return 1.0 - k * (1.0 + p.gamma * p.lambda) / epsilon(p);
}

struct ValidationReport {
  std::string family;
  double horizon = 0.0;
  int grid_points = 0;
  double sup_ratio_grid = 0.0;
  double sup_ratio_analytic = 0.0;
  double k_max = 0.0;
  /// sup beta'/beta, the k fed into beta~.
  double certified_k = 0.0;
  bool positive = true;
  bool nondecreasing = true;
  bool tends_to_infinity = true;
  bool pass = false;
};

/// Checks 0 <= beta' <= k beta with k strictly below k_max, on a uniform
/// grid over [0, horizon] and analytically per family.
inline ValidationReport validate_growth(const PenaltySchedule& schedule, const DynamicsParams& params,
                                        double horizon, int grid_points = 1001) {
  if (!(horizon > 0.0)) throw std::invalid_argument("validate_growth: horizon must be positive");
  if (grid_points < 2) throw std::invalid_argument("validate_growth: need at least two grid points");
  params.validate();

  ValidationReport r;
  r.family = schedule.family_name();
  r.horizon = horizon;
  r.grid_points = grid_points;
  r.k_max = k_max(params);
  r.sup_ratio_analytic = schedule.sup_log_derivative();
  r.tends_to_infinity = schedule.tends_to_infinity();
  for (int i = 0; i < grid_points; ++i) {
    const double t = horizon * static_cast<double>(i) / (grid_points - 1);
    const double b = schedule(t);
    const double db = schedule.derivative(t);
    if (!(b > 0.0)) r.positive = false;
    if (db < 0.0) r.nondecreasing = false;
    if (b > 0.0) r.sup_ratio_grid = std::max(r.sup_ratio_grid, db / b);
  }
  r.certified_k = std::max(r.sup_ratio_grid, r.sup_ratio_analytic);
  r.pass = r.positive && r.nondecreasing && r.certified_k < r.k_max;
  return r;
}

struct ConditionHReport {
  std::string constraint;
  double p_norm = 0.0;
  double horizon = 0.0;
  bool finite_branch = true;
  /// Adaptive Simpson value of the integral of beta * gap(p / beta) over [0, horizon].
  double quadrature = 0.0;
  /// Closed-form value over [0, horizon] and over [0, inf) (kInfinity when divergent).
  std::optional<double> closed_form;
  std::optional<double> closed_form_total;
  bool tail_convergent = false;
  bool pass = false;
  std::string diagnostic;
};

/// Integrability of t -> beta(t) * [psi*(p / beta(t)) - sigma(p / beta(t))].
inline ConditionHReport condition_h_check(const ConstraintOracle& constraint, const Vector& p,
                                          const PenaltySchedule& schedule, double horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("condition_h_check: horizon must be positive");
  ConditionHReport r;
  r.constraint = constraint.kind == ConstraintKind::zero ? "zero" : "affine_distance";
  r.p_norm = p.norm();
  r.horizon = horizon;

  const auto integrand = [&](double t) {
    const double b = schedule(t);
    if (std::isinf(b)) return 0.0;
    return b * constraint.conjugate_gap(p / b);
  };
  if (!std::isfinite(integrand(0.0))) {
    r.finite_branch = false;
    r.quadrature = kInfinity;
    r.diagnostic = "p not in the range of the normal cone of argmin psi";
    return r;
  }
  r.quadrature = adaptive_simpson(integrand, 0.0, horizon, 1e-8);

  switch (constraint.kind) {
    case ConstraintKind::zero:
      r.closed_form = 0.0;
      r.closed_form_total = 0.0;
      break;
    case ConstraintKind::affine_distance: {
      const double half_sq = 0.5 * p.squaredNorm();
      r.closed_form = half_sq * schedule.reciprocal_integral(0.0, horizon);
      r.closed_form_total = half_sq == 0.0 ? 0.0 : half_sq * schedule.reciprocal_integral(0.0, kInfinity);
      break;
    }
  }
  r.tail_convergent = std::isfinite(*r.closed_form_total);
  r.pass = r.tail_convergent;
  if (!r.pass) r.diagnostic = "integral diverges: 1/beta is not integrable";
  return r;
}

}  // namespace hdd
