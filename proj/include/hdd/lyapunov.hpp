#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdd/convex_oracle.hpp"
#include "hdd/flow.hpp"
#include "hdd/integrals.hpp"
#include "hdd/penalty_schedule.hpp"
#include "hdd/types.hpp"

namespace hdd {

/// Everything the energy formulas need at one time instant.
struct PointEval {
  double t = 0.0;
  double beta = 0.0;
  double beta_dot = 0.0;
  double phi = 0.0;
  double psi = 0.0;
  Vector x;
  Vector v;
  Vector y;
  Vector grad_phi;
  Vector grad_psi;
  /// grad phi + beta grad psi
  Vector grad_comb;
};

inline PointEval evaluate_point(double t, const Vector& x, const Vector& v, const BilevelProblem& problem,
                                const PenaltySchedule& schedule, const DynamicsParams& params) {
  PointEval p;
  p.t = t;
  p.beta = schedule(t);
  p.beta_dot = schedule.derivative(t);
  p.x = x;
  p.v = v;
  p.phi = problem.phi.value(x);
  p.psi = problem.psi.base.value(x);
  p.grad_phi = problem.phi.grad(x);
  p.grad_psi = problem.psi.base.grad(x);
  p.grad_comb = p.grad_phi + p.beta * p.grad_psi;
  p.y = v + params.lambda * p.grad_comb;
  return p;
}

inline PointEval evaluate_point(const Sample& s, const BilevelProblem& problem, const PenaltySchedule& schedule,
                                const DynamicsParams& params) {
  return evaluate_point(s.t, s.x, s.v, problem, schedule, params);
}

/// delta = 1 + gamma lambda
inline double delta_one_plus_gl(const DynamicsParams& p) { return 1.0 + p.gamma * p.lambda; }
/// delta_1 = (1 + sqrt(lambda gamma))^2
inline double delta1(const DynamicsParams& p) {
  const double r = std::sqrt(p.lambda * p.gamma);
  return (1.0 + r) * (1.0 + r);
}
/// delta_2 = (1 - sqrt(lambda gamma))^2, zero when lambda gamma = 1.
inline double delta2(const DynamicsParams& p) {
  const double r = std::sqrt(p.lambda * p.gamma);
  return (1.0 - r) * (1.0 - r);
}

/// E_delta = delta (phi + beta psi) + 1/2 ||y||^2
inline double energy_delta(double delta, const PointEval& p) {
  return delta * (p.phi + p.beta * p.psi) + 0.5 * p.y.squaredNorm();
}

namespace detail {

struct EnergyDotTerms {
  double a, b, c, d, e;
  double sum() const { return a + b + c + d + e; }
  double magnitude() const { return std::abs(a) + std::abs(b) + std::abs(c) + std::abs(d) + std::abs(e); }
};

inline EnergyDotTerms energy_delta_dot_terms(double delta, const PointEval& p, const DynamicsParams& params) {
  const double w = delta - params.gamma * params.lambda - 1.0;
  return {w * p.grad_phi.dot(p.v), p.beta * w * p.grad_psi.dot(p.v), delta * p.beta_dot * p.psi,
          -params.gamma * p.v.squaredNorm(), -params.lambda * p.grad_comb.squaredNorm()};
}

}  // namespace detail

/// Time derivative of E_delta along the flow:
/// (delta - gamma lambda - 1) <grad phi, v> + beta (delta - gamma lambda - 1) <grad psi, v>
///   + delta beta' psi - gamma ||v||^2 - lambda ||grad phi + beta grad psi||^2
inline double energy_delta_dot_analytic(double delta, const PointEval& p, const DynamicsParams& params) {
  return detail::energy_delta_dot_terms(delta, p, params).sum();
}

/// Sum of the absolute values of the terms above; the natural scale for
/// comparing a finite-difference derivative against the analytic one.
inline double energy_delta_dot_scale(double delta, const PointEval& p, const DynamicsParams& params) {
  return detail::energy_delta_dot_terms(delta, p, params).magnitude();
}

/// E = E_{1 + gamma lambda} / eps + gamma/2 ||x - z||^2 + <y, x - z>
inline double energy_E(const PointEval& p, const Vector& z, const DynamicsParams& params) {
  const Vector dz = p.x - z;
  return energy_delta(delta_one_plus_gl(params), p) / epsilon(params) + 0.5 * params.gamma * dz.squaredNorm() +
         p.y.dot(dz);
}

/// Exact derivative of E along the flow (before any inequality is applied).
inline double energy_E_dot_analytic(const PointEval& p, const Vector& z, const DynamicsParams& params) {
  const double eps = epsilon(params);
  const Vector dz = p.x - z;
  return delta_one_plus_gl(params) / eps * p.beta_dot * p.psi - p.grad_comb.dot(dz) -
         (params.gamma / eps - 1.0) * p.v.squaredNorm() + params.lambda * p.grad_comb.dot(p.v) -
         params.lambda / eps * p.grad_comb.squaredNorm();
}

/// beta~ = (1 - k (1 + gamma lambda) / eps) beta
inline double beta_tilde(double beta, double k, const DynamicsParams& params) {
  return beta_tilde_factor(k, params) * beta;
}

/// Right-hand side of the Lyapunov inequality: beta~ * gap(-grad phi(z) / beta~).
inline double lyapunov_bound(double beta_tilde_value, const Vector& grad_phi_z, const ConstraintOracle& psi) {
  if (!(beta_tilde_value > 0.0)) return kInfinity;
  return beta_tilde_value * psi.conjugate_gap(-grad_phi_z / beta_tilde_value);
}

/// -||sqrt(gamma) v - sqrt(lambda) g||^2, which equals dE_{delta_1}/dt - delta_1 beta' psi.
inline double delta1_square_form(const PointEval& p, const DynamicsParams& params) {
  return -(std::sqrt(params.gamma) * p.v - std::sqrt(params.lambda) * p.grad_comb).squaredNorm();
}

/// -||sqrt(gamma) v + sqrt(lambda) g||^2, which equals dE_{delta_2}/dt - delta_2 beta' psi.
inline double delta2_square_form(const PointEval& p, const DynamicsParams& params) {
  return -(std::sqrt(params.gamma) * p.v + std::sqrt(params.lambda) * p.grad_comb).squaredNorm();
}

struct EnergyRecord {
  double t = 0.0;
  double e_one_plus_gl = 0.0;
  double e_delta1 = 0.0;
  double e_delta2 = 0.0;
  double energy = 0.0;
  double beta_tilde = 0.0;
  double de_one_plus_gl = 0.0;
  double de_delta1 = 0.0;
  double de_delta2 = 0.0;
};

inline EnergyRecord energy_record(const PointEval& p, const Vector& z, double k, const DynamicsParams& params) {
  EnergyRecord r;
  r.t = p.t;
  r.e_one_plus_gl = energy_delta(delta_one_plus_gl(params), p);
  r.e_delta1 = energy_delta(delta1(params), p);
  r.e_delta2 = energy_delta(delta2(params), p);
  r.energy = energy_E(p, z, params);
  r.beta_tilde = beta_tilde(p.beta, k, params);
  r.de_one_plus_gl = energy_delta_dot_analytic(delta_one_plus_gl(params), p, params);
  r.de_delta1 = energy_delta_dot_analytic(delta1(params), p, params);
  r.de_delta2 = energy_delta_dot_analytic(delta2(params), p, params);
  return r;
}

// ---------------------------------------------------------------------------
// Finite differences on the uniform output grid.

namespace detail {

inline bool uniform_at(const std::vector<double>& t, std::size_t i, std::size_t reach) {
  if (i < reach || i + reach >= t.size()) return false;
  const double h = t[i + 1] - t[i];
  for (std::size_t j = i - reach; j < i + reach; ++j)
    if (std::abs((t[j + 1] - t[j]) - h) > 1e-9 * h) return false;
  return true;
}

}  // namespace detail

/// Central first derivative at interior index i, and an error estimate from
/// the 5-point stencil (0 when the wider stencil is unavailable).
struct FdDerivative {
  bool valid = false;
  double value = 0.0;
  double error_estimate = 0.0;
};

inline FdDerivative central_derivative(const std::vector<double>& t, const std::vector<double>& f, std::size_t i) {
  FdDerivative d;
  if (!detail::uniform_at(t, i, 1)) return d;
  const double h = t[i + 1] - t[i];
  d.valid = true;
  d.value = (f[i + 1] - f[i - 1]) / (2.0 * h);
  if (detail::uniform_at(t, i, 2)) {
    const double five = (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * h);
    d.error_estimate = std::abs(five - d.value);
  }
  return d;
}

struct DerivativeCheck {
  double delta = 0.0;
  int checked = 0;
  /// max over interior samples of |fd - analytic| / (1 + term magnitude)
  double max_normalized_error = 0.0;
  double worst_time = 0.0;
};

/// Compares the analytic derivative of E_delta against central differences
/// along the sampled trajectory.
inline DerivativeCheck check_energy_derivative(double delta, const Trajectory& traj, const BilevelProblem& problem,
                                               const PenaltySchedule& schedule, const DynamicsParams& params) {
  std::vector<double> t, e;
  std::vector<PointEval> pts;
  for (const auto& s : traj.samples) {
    pts.push_back(evaluate_point(s, problem, schedule, params));
    t.push_back(s.t);
    e.push_back(energy_delta(delta, pts.back()));
  }
  DerivativeCheck c;
  c.delta = delta;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    const FdDerivative fd = central_derivative(t, e, i);
    if (!fd.valid) continue;
    const double an = energy_delta_dot_analytic(delta, pts[i], params);
    const double err = std::abs(fd.value - an) / (1.0 + energy_delta_dot_scale(delta, pts[i], params));
    ++c.checked;
    if (err > c.max_normalized_error) {
      c.max_normalized_error = err;
      c.worst_time = t[i];
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Lyapunov inequality along a trajectory.

enum class MarginStatus { pass, fail, inconclusive };

struct LyapunovMargin {
  double t = 0.0;
  double de_fd = 0.0;
  double fd_error = 0.0;
  double de_analytic = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  double normalized = 0.0;
  double strong_margin = 0.0;
  double strong_normalized = 0.0;
  MarginStatus status = MarginStatus::pass;
};

struct LyapunovCheck {
  std::vector<LyapunovMargin> margins;
  double tolerance = 1e-4;
  double max_margin = -kInfinity;
  double max_normalized = -kInfinity;
  bool strong_checked = false;
  double max_strong_normalized = -kInfinity;
  int failures = 0;
  int inconclusive = 0;
  bool pass = false;
};

/// For every interior sample on the uniform grid:
///   margin = dE/dt (central FD) - beta~ gap(-grad phi(z) / beta~)
/// and, when phi is mu-strongly convex, the strengthened margin with
/// mu/2 ||x - z||^2 added to the derivative. A sample passes when its
/// normalized margin margin / (1 + |dE/dt|) is within `tol`; a violation no
/// larger than the FD error estimate is reported as inconclusive.
inline LyapunovCheck lyapunov_inequality_check(const Trajectory& traj, const BilevelProblem& problem,
                                               const PenaltySchedule& schedule, const DynamicsParams& params,
                                               const Vector& z, double k, double tol = 1e-4) {
  LyapunovCheck out;
  out.tolerance = tol;
  const double mu = problem.phi.strong_convexity;
  out.strong_checked = mu > 0.0;
  const Vector grad_phi_z = problem.phi.grad(z);

  std::vector<double> t, e;
  std::vector<PointEval> pts;
  for (const auto& s : traj.samples) {
    pts.push_back(evaluate_point(s, problem, schedule, params));
    t.push_back(s.t);
    e.push_back(energy_E(pts.back(), z, params));
  }
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    const FdDerivative fd = central_derivative(t, e, i);
    if (!fd.valid) continue;
    LyapunovMargin m;
    m.t = t[i];
    m.de_fd = fd.value;
    m.fd_error = fd.error_estimate;
    m.de_analytic = energy_E_dot_analytic(pts[i], z, params);
    m.bound = lyapunov_bound(beta_tilde(pts[i].beta, k, params), grad_phi_z, problem.psi);
    m.margin = m.de_fd - m.bound;
    const double scale = 1.0 + std::abs(m.de_fd);
    m.normalized = m.margin / scale;
    double worst = m.margin;
    if (out.strong_checked) {
      m.strong_margin = m.margin + 0.5 * mu * (pts[i].x - z).squaredNorm();
      m.strong_normalized = m.strong_margin / scale;
      out.max_strong_normalized = std::max(out.max_strong_normalized, m.strong_normalized);
      worst = m.strong_margin;
    }
    if (worst <= tol * scale) {
      m.status = MarginStatus::pass;
    } else if (worst <= tol * scale + m.fd_error) {
      m.status = MarginStatus::inconclusive;
      ++out.inconclusive;
    } else {
      m.status = MarginStatus::fail;
      ++out.failures;
    }
    out.max_margin = std::max(out.max_margin, m.margin);
    out.max_normalized = std::max(out.max_normalized, m.normalized);
    out.margins.push_back(m);
  }
  out.pass = out.failures == 0 && !out.margins.empty();
  return out;
}

// ---------------------------------------------------------------------------
// Running integrals at sample cadence.

/// Trapezoidal accumulation of the monitored integrands over the samples;
/// entry i holds the integrals from 0 to samples[i].t.
inline std::vector<RunningIntegrals> accumulate_integrals(const Trajectory& traj, const BilevelProblem& problem,
                                                          const PenaltySchedule& schedule,
                                                          const DynamicsParams& params,
                                                          const IntegralReference* ref) {
  std::vector<RunningIntegrals> out;
  out.reserve(traj.samples.size());
  RunningIntegrals acc, prev;
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    const PointEval p = evaluate_point(traj.samples[i], problem, schedule, params);
    const RunningIntegrals f = integrand_values(p.beta, p.phi, p.psi, p.x, p.v, p.grad_comb, ref);
    if (i > 0) acc += (0.5 * (traj.samples[i].t - traj.samples[i - 1].t)) * (prev + f);
    out.push_back(acc);
    prev = f;
  }
  return out;
}

inline IntegralReference make_integral_reference(const BilevelProblem& problem, const Vector& z, double k,
                                                 const DynamicsParams& params) {
  return IntegralReference{z, problem.phi.value(z), problem.phi.grad(z), beta_tilde_factor(k, params)};
}

// ---------------------------------------------------------------------------
// Convergence verdicts.

enum class Verdict { pass, fail, inconclusive, not_applicable };

inline std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::inconclusive: return "inconclusive";
    case Verdict::not_applicable: return "not_applicable";
  }
  return "unknown";
}

struct Measurement {
  std::string name;
  double value = 0.0;
};

struct ClaimResult {
  std::string id;
  std::vector<Measurement> measured;
  /// value at T minus value at T/2 for the primary quantity
  double trend = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::inconclusive;
  std::string note;

  double measurement(const std::string& name) const {
    for (const auto& m : measured)
      if (m.name == name) return m.value;
    throw std::out_of_range("no measurement named " + name);
  }
};

struct VerdictTolerances {
  double phi_gap = 1e-3;
  double beta_psi = 1e-3;
  double psi = 1e-6;
  double y_norm = 1e-3;
  double tail_ratio = 0.05;
  double drift = 1e-2;
  double vi = 1e-6;
  double strong = 1e-3;
  /// Distance of the argmin samples w used in the variational-inequality test.
  double vi_radius = 1.0;
};

struct ConvergenceReport {
  double horizon = 0.0;
  std::vector<ClaimResult> claims;

  const ClaimResult& claim(const std::string& id) const {
    for (const auto& c : claims)
      if (c.id == id) return c;
    throw std::out_of_range("no claim " + id);
  }

  int count(Verdict v) const {
    return static_cast<int>(std::count_if(claims.begin(), claims.end(), [v](const auto& c) { return c.verdict == v; }));
  }
};

/// min over w = P(x) +- r d (d unit tangent directions of argmin psi) of <grad phi(x), w - x>.
/// Nonnegative (up to tolerance) at points of the solution set.
inline double vi_residual(const BilevelProblem& problem, const Vector& x, double radius) {
  const Vector g = problem.phi.grad(x);
  const Vector base = problem.psi.argmin_project(x);
  double worst = g.dot(base - x);
  const int n = problem.dimension();
  for (int i = 0; i < n; ++i) {
    Vector d = problem.psi.tangent_project(Vector::Unit(n, i));
    const double len = d.norm();
    if (len <= 1e-12) continue;
    d /= len;
    for (double sign : {1.0, -1.0}) worst = std::min(worst, g.dot(base + sign * radius * d - x));
  }
  return worst;
}

namespace detail {

enum class Monotonicity { nonincreasing, nondecreasing, constant, mixed };

inline Monotonicity monotonicity(const std::vector<double>& q) {
  double scale = 0.0;
  for (double v : q) scale = std::max(scale, std::abs(v));
  const double noise = 1e-9 * scale + 1e-300;
  bool up = false, down = false;
  for (std::size_t i = 1; i < q.size(); ++i) {
    const double d = q[i] - q[i - 1];
    if (d > noise) up = true;
    if (d < -noise) down = true;
  }
  if (up && down) return Monotonicity::mixed;
  if (up) return Monotonicity::nondecreasing;
  if (down) return Monotonicity::nonincreasing;
  return Monotonicity::constant;
}

inline Verdict threshold_verdict(double measured, double tol, const std::vector<double>& tail_series) {
  if (measured <= tol) return Verdict::pass;
  return monotonicity(tail_series) == Monotonicity::mixed ? Verdict::inconclusive : Verdict::fail;
}

inline double tail_ratio(double at_half, double at_end) {
  if (at_end <= 0.0) return 0.0;
  return (at_end - at_half) / at_end;
}

}  // namespace detail

inline bool nonincreasing(const std::vector<double>& q) {
  const auto m = detail::monotonicity(q);
  return m == detail::Monotonicity::nonincreasing || m == detail::Monotonicity::constant;
}

/// Finite-horizon verdicts for the asymptotic claims: objective value,
/// vanishing penalty, integrability, vanishing auxiliary velocity,
/// trajectory convergence into the solution set, and strong convergence
/// when phi is strongly convex. "Last decade" means samples in [T/2, T].
inline ConvergenceReport convergence_verdicts(const Trajectory& traj, const BilevelProblem& problem,
                                              const PenaltySchedule& schedule, const DynamicsParams& params,
                                              const Vector& z, double phi_z, const VerdictTolerances& tol = {}) {
  if (traj.samples.size() < 3) throw std::invalid_argument("convergence_verdicts: need at least three samples");
  ConvergenceReport rep;
  const double T = traj.back().t;
  rep.horizon = T;
  const Sample& half = traj.at_or_after(0.5 * T);
  const Sample& end = traj.back();
  const PointEval pe = evaluate_point(end, problem, schedule, params);
  const PointEval ph = evaluate_point(half, problem, schedule, params);

  std::vector<double> phi_gap, beta_psi, psi, ynorm, dist;
  for (const auto& s : traj.samples) {
    if (s.t < half.t) continue;
    const double b = schedule(s.t);
    const double ps = problem.psi.base.value(s.x);
    phi_gap.push_back(std::abs(problem.phi.value(s.x) - phi_z));
    beta_psi.push_back(b * ps);
    psi.push_back(ps);
    ynorm.push_back(s.y.norm());
    dist.push_back((s.x - z).norm());
  }

  {
    ClaimResult c{"T1_phi_value", {{"phi_gap", phi_gap.back()}, {"phi_x", pe.phi}, {"phi_z", phi_z}}};
    c.trend = phi_gap.back() - phi_gap.front();
    c.tolerance = tol.phi_gap;
    c.verdict = detail::threshold_verdict(phi_gap.back(), tol.phi_gap, phi_gap);
    rep.claims.push_back(c);
  }
  {
    ClaimResult c{"T2_beta_psi_to_zero", {{"beta_psi", beta_psi.back()}}};
    c.trend = beta_psi.back() - beta_psi.front();
    c.tolerance = tol.beta_psi;
    c.verdict = detail::threshold_verdict(beta_psi.back(), tol.beta_psi, beta_psi);
    rep.claims.push_back(c);
  }
  {
    ClaimResult c{"T2_psi_to_zero", {{"psi", psi.back()}}};
    c.trend = psi.back() - psi.front();
    c.tolerance = tol.psi;
    c.verdict = detail::threshold_verdict(psi.back(), tol.psi, psi);
    rep.claims.push_back(c);
  }
  {
    const double r = detail::tail_ratio(half.integrals.beta_psi, end.integrals.beta_psi);
    ClaimResult c{"T3_int_beta_psi_finite", {{"int_beta_psi", end.integrals.beta_psi}, {"tail_ratio", r}}};
    c.trend = end.integrals.beta_psi - half.integrals.beta_psi;
    c.tolerance = tol.tail_ratio;
    c.verdict = r <= tol.tail_ratio ? Verdict::pass : Verdict::fail;
    rep.claims.push_back(c);
  }
  {
    const double rs = detail::tail_ratio(half.integrals.speed_sq, end.integrals.speed_sq);
    const double rg = detail::tail_ratio(half.integrals.grad_comb_sq, end.integrals.grad_comb_sq);
    ClaimResult c{"T4_L2_memberships",
                  {{"int_speed_sq", end.integrals.speed_sq},
                   {"speed_tail_ratio", rs},
                   {"int_grad_comb_sq", end.integrals.grad_comb_sq},
                   {"grad_comb_tail_ratio", rg}}};
    c.trend = std::max(rs, rg);
    c.tolerance = tol.tail_ratio;
    c.verdict = std::max(rs, rg) <= tol.tail_ratio ? Verdict::pass : Verdict::fail;
    rep.claims.push_back(c);
  }
  {
    ClaimResult c{"T5_combined_velocity_to_zero", {{"y_norm", ynorm.back()}}};
    c.trend = ynorm.back() - ynorm.front();
    c.tolerance = tol.y_norm;
    c.verdict = detail::threshold_verdict(ynorm.back(), tol.y_norm, ynorm);
    rep.claims.push_back(c);
  }
  {
    const double drift = (end.x - half.x).norm();
    const double vi = vi_residual(problem, end.x, tol.vi_radius);
    ClaimResult c{"T6_trajectory_converges", {{"drift", drift}, {"psi", pe.psi}, {"vi_residual", vi}}};
    c.trend = drift;
    c.tolerance = tol.drift;
    const bool member = pe.psi <= tol.psi && vi >= -tol.vi;
    c.verdict = (drift <= tol.drift && member) ? Verdict::pass : Verdict::fail;
    if (!member) c.note = "limit point fails the solution-set membership test";
    rep.claims.push_back(c);
  }
  {
    ClaimResult c{"S1_strong_convergence", {{"distance", dist.back()}}};
    c.trend = dist.back() - dist.front();
    c.tolerance = tol.strong;
    if (problem.phi.strong_convexity > 0.0) {
      const bool down = nonincreasing(dist);
      c.measured.push_back({"nonincreasing", down ? 1.0 : 0.0});
      if (dist.back() <= tol.strong && down) {
        c.verdict = Verdict::pass;
      } else if (detail::monotonicity(dist) == detail::Monotonicity::mixed) {
        c.verdict = Verdict::inconclusive;
      } else {
        c.verdict = Verdict::fail;
      }
    } else {
      c.verdict = Verdict::not_applicable;
      c.note = "phi is not strongly convex";
    }
    rep.claims.push_back(c);
  }
  (void)ph;
  return rep;
}

// ---------------------------------------------------------------------------
// Per-sample diagnostics table.

struct DiagnosticsRow {
  double t = 0.0;
  double e_one_plus_gl = 0.0;
  double e_delta1 = 0.0;
  double e_delta2 = 0.0;
  double energy = 0.0;
  double de_fd = kInfinity;
  double de_analytic_one_plus_gl = 0.0;
  double beta_tilde = 0.0;
  double int_beta_psi = 0.0;
  double int_speed_sq = 0.0;
  double int_grad_comb_sq = 0.0;
  double margin_lyap = kInfinity;
};

/// Rows carry NaN in the FD columns where the central stencil is unavailable.
inline std::vector<DiagnosticsRow> compute_diagnostics(const Trajectory& traj, const BilevelProblem& problem,
                                                       const PenaltySchedule& schedule, const DynamicsParams& params,
                                                       const Vector& z, double k) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const Vector grad_phi_z = problem.phi.grad(z);
  std::vector<DiagnosticsRow> rows;
  std::vector<double> t, e;
  for (const auto& s : traj.samples) {
    const PointEval p = evaluate_point(s, problem, schedule, params);
    const EnergyRecord r = energy_record(p, z, k, params);
    DiagnosticsRow row;
    row.t = s.t;
    row.e_one_plus_gl = r.e_one_plus_gl;
    row.e_delta1 = r.e_delta1;
    row.e_delta2 = r.e_delta2;
    row.energy = r.energy;
    row.de_analytic_one_plus_gl = r.de_one_plus_gl;
    row.beta_tilde = r.beta_tilde;
    row.int_beta_psi = s.integrals.beta_psi;
    row.int_speed_sq = s.integrals.speed_sq;
    row.int_grad_comb_sq = s.integrals.grad_comb_sq;
    row.de_fd = nan;
    row.margin_lyap = nan;
    rows.push_back(row);
    t.push_back(s.t);
    e.push_back(r.energy);
  }
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    const FdDerivative fd = central_derivative(t, e, i);
    if (!fd.valid) continue;
    rows[i].de_fd = fd.value;
    const double bound = lyapunov_bound(rows[i].beta_tilde, grad_phi_z, problem.psi);
    rows[i].margin_lyap = std::isfinite(bound) ? fd.value - bound : nan;
  }
  return rows;
}

}  // namespace hdd
