#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdd/convex_oracle.hpp"
#include "hdd/integrals.hpp"
#include "hdd/ode.hpp"
#include "hdd/penalty_schedule.hpp"
#include "hdd/types.hpp"

namespace hdd {

/// Hessian-free state: position x and auxiliary y = x' + lambda grad phi(x) + lambda beta grad psi(x).
struct FlowState {
  double t = 0.0;
  Vector x;
  Vector y;
};

/// Position/velocity state used by the Hessian-direct form.
struct PhaseState {
  double t = 0.0;
  Vector x;
  Vector v;
};

struct FlowDerivative {
  Vector dx;
  Vector dy;
};

struct PhaseDerivative {
  Vector dx;
  Vector dv;
};

enum class Formulation { hessian_free, hessian_direct };

inline std::string formulation_name(Formulation f) {
  return f == Formulation::hessian_free ? "hessian_free" : "hessian_direct";
}

/// Scratch vectors reused by the right-hand sides.
struct FlowWorkspace {
  Vector grad_phi;
  Vector grad_psi;
  Vector hv_phi;
  Vector hv_psi;
  Vector x;
  Vector v;

  explicit FlowWorkspace(int n = 0)
      : grad_phi(Vector::Zero(n)),
        grad_psi(Vector::Zero(n)),
        hv_phi(Vector::Zero(n)),
        hv_psi(Vector::Zero(n)),
        x(Vector::Zero(n)),
        v(Vector::Zero(n)) {}
};

/// dx = y - lambda (grad phi + beta grad psi), dy = -gamma dx - grad phi - beta grad psi.
inline void rhs_hessian_free(double t, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                             const BilevelProblem& problem, const PenaltySchedule& schedule,
                             const DynamicsParams& params, Eigen::Ref<Vector> dx, Eigen::Ref<Vector> dy,
                             FlowWorkspace& ws) {
  ws.x = x;
  problem.phi.gradient(ws.x, ws.grad_phi);
  problem.psi.base.gradient(ws.x, ws.grad_psi);
  const double beta = schedule(t);
  ws.grad_phi += beta * ws.grad_psi;  // now grad phi + beta grad psi
  dx = y - params.lambda * ws.grad_phi;
  dy = -params.gamma * dx - ws.grad_phi;
}

inline FlowDerivative rhs_hessian_free(const FlowState& state, const BilevelProblem& problem,
                                       const PenaltySchedule& schedule, const DynamicsParams& params) {
  const int n = problem.dimension();
  FlowWorkspace ws(n);
  FlowDerivative d{Vector(n), Vector(n)};
  rhs_hessian_free(state.t, state.x, state.y, problem, schedule, params, d.dx, d.dy, ws);
  return d;
}

/// dx = v,
/// dv = -gamma v - lambda hess phi v - lambda beta hess psi v - grad phi - (beta + lambda beta') grad psi.
inline void rhs_hessian_direct(double t, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& v,
                               const BilevelProblem& problem, const PenaltySchedule& schedule,
                               const DynamicsParams& params, Eigen::Ref<Vector> dx, Eigen::Ref<Vector> dv,
                               FlowWorkspace& ws) {
  ws.x = x;
  ws.v = v;
  problem.phi.gradient(ws.x, ws.grad_phi);
  problem.psi.base.gradient(ws.x, ws.grad_psi);
  problem.phi.hess_vec(ws.x, ws.v, ws.hv_phi);
  problem.psi.base.hess_vec(ws.x, ws.v, ws.hv_psi);
  const double beta = schedule(t);
  const double beta_dot = schedule.derivative(t);
  const double lambda = params.lambda;
  dx = v;
  dv = -params.gamma * v - lambda * ws.hv_phi - (lambda * beta) * ws.hv_psi - ws.grad_phi -
       (beta + lambda * beta_dot) * ws.grad_psi;
}

inline PhaseDerivative rhs_hessian_direct(const PhaseState& state, const BilevelProblem& problem,
                                          const PenaltySchedule& schedule, const DynamicsParams& params) {
  const int n = problem.dimension();
  FlowWorkspace ws(n);
  PhaseDerivative d{Vector(n), Vector(n)};
  rhs_hessian_direct(state.t, state.x, state.v, problem, schedule, params, d.dx, d.dv, ws);
  return d;
}

/// lambda (grad phi(x) + beta(t) grad psi(x)).
inline Vector damping_shift(double t, const Vector& x, const BilevelProblem& problem,
                            const PenaltySchedule& schedule, const DynamicsParams& params) {
  return params.lambda * (problem.phi.grad(x) + schedule(t) * problem.psi.base.grad(x));
}

inline Vector velocity_from_auxiliary(const FlowState& s, const BilevelProblem& problem,
                                      const PenaltySchedule& schedule, const DynamicsParams& params) {
  return s.y - damping_shift(s.t, s.x, problem, schedule, params);
}

inline Vector auxiliary_from_velocity(const PhaseState& s, const BilevelProblem& problem,
                                      const PenaltySchedule& schedule, const DynamicsParams& params) {
  return s.v + damping_shift(s.t, s.x, problem, schedule, params);
}

/// One output sample; `integrals` holds the running integrals up to t.
struct Sample {
  double t = 0.0;
  Vector x;
  Vector y;
  Vector v;
  RunningIntegrals integrals;
};

struct IntegratorStats {
  std::string method;
  std::string formulation;
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
  double t_end = 0.0;
  double reached = 0.0;
  double rel_tol = 0.0;
  double abs_tol = 0.0;
  double step = 0.0;
  double stiffness_cap = 0.0;
  double cadence = 0.0;
};

struct Trajectory {
  std::vector<Sample> samples;
  /// Integrals accumulated at every accepted step up to the last sample.
  RunningIntegrals integrals;
  bool has_reference = false;
  IntegratorStats stats;

  const Sample& back() const { return samples.back(); }
  int dimension() const { return samples.empty() ? 0 : static_cast<int>(samples.front().x.size()); }

  /// First sample with time >= t (the last one if none).
  const Sample& at_or_after(double t) const {
    for (const auto& s : samples)
      if (s.t >= t - 1e-12 * std::max(1.0, std::abs(t))) return s;
    return samples.back();
  }
};

/// Raised when integration stops early; carries the samples produced so far.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, FlowState last_good, Trajectory partial)
      : std::runtime_error(what), last_good_(std::move(last_good)), partial_(std::move(partial)) {}

  const FlowState& last_good() const { return last_good_; }
  const Trajectory& partial() const { return partial_; }

 private:
  FlowState last_good_;
  Trajectory partial_;
};

struct FlowOptions {
  /// Uniform output grid spacing; samples are emitted at k * cadence and at t_end.
  double cadence = 0.1;
  Formulation formulation = Formulation::hessian_free;
  std::optional<IntegralReference> reference;
  /// Skip the growth-condition gate on the schedule.
  bool ablation = false;
};

/// Integrates the penalized Hessian-damped flow from x(0) = u0, x'(0) = v0.
inline Trajectory integrate(const BilevelProblem& problem, const PenaltySchedule& schedule,
                            const DynamicsParams& params, const Vector& u0, const Vector& v0, double t_end,
                            const IntegratorControls& controls, const FlowOptions& options = {}) {
  params.validate();
  validate_controls(controls);
  const int n = problem.dimension();
  if (u0.size() != n || v0.size() != n) throw std::invalid_argument("integrate: initial data has wrong dimension");
  if (!(t_end > 0.0)) throw std::invalid_argument("integrate: t_end must be positive");
  if (!(options.cadence > 0.0)) throw std::invalid_argument("integrate: cadence must be positive");
  if (!options.ablation && !validate_growth(schedule, params, t_end).pass)
    throw std::invalid_argument("integrate: schedule violates the growth condition (use ablation to override)");

  const bool free_form = options.formulation == Formulation::hessian_free;
  const IntegralReference* ref = options.reference ? &*options.reference : nullptr;

  FlowWorkspace ws(n);
  auto rhs = [&](double t, const Vector& s, Vector& ds) {
    if (free_form)
      rhs_hessian_free(t, s.head(n), s.tail(n), problem, schedule, params, ds.head(n), ds.tail(n), ws);
    else
      rhs_hessian_direct(t, s.head(n), s.tail(n), problem, schedule, params, ds.head(n), ds.tail(n), ws);
  };

  // Point evaluation of (y, v, integrands) from a packed state.
  Vector gphi(n), gpsi(n), comb(n), xbuf(n);
  auto evaluate = [&](double t, const Vector& s, Vector& y, Vector& v) -> RunningIntegrals {
    xbuf = s.head(n);
    problem.phi.gradient(xbuf, gphi);
    problem.psi.base.gradient(xbuf, gpsi);
    const double beta = schedule(t);
    comb = gphi + beta * gpsi;
    if (free_form) {
      y = s.tail(n);
      v = y - params.lambda * comb;
    } else {
      v = s.tail(n);
      y = v + params.lambda * comb;
    }
    return integrand_values(beta, problem.phi.value(xbuf), problem.psi.base.value(xbuf), xbuf, v, comb, ref);
  };

  Vector s0(2 * n);
  s0.head(n) = u0;
  s0.tail(n) = free_form ? Vector(v0 + damping_shift(0.0, u0, problem, schedule, params)) : v0;

  Trajectory traj;
  traj.has_reference = ref != nullptr;
  traj.stats.method = method_name(controls);
  traj.stats.formulation = formulation_name(options.formulation);
  traj.stats.t_end = t_end;
  traj.stats.cadence = options.cadence;
  if (const auto* rk = std::get_if<FixedRk4>(&controls)) {
    traj.stats.step = rk->step;
  } else {
    const auto& a = std::get<AdaptiveDopri>(controls);
    traj.stats.rel_tol = a.rel_tol;
    traj.stats.abs_tol = a.abs_tol;
    traj.stats.stiffness_cap = a.stiffness_cap;
  }

  Vector y(n), v(n), y1(n), v1(n), interp(2 * n);
  RunningIntegrals f_prev = evaluate(0.0, s0, y, v);
  RunningIntegrals acc;
  traj.samples.push_back(Sample{0.0, u0, y, v, acc});

  const double slack = 1e-9 * options.cadence;
  long next_index = 1;
  auto next_time = [&]() {
    const double tk = static_cast<double>(next_index) * options.cadence;
    return (std::abs(tk - t_end) <= slack || tk > t_end) ? t_end : tk;
  };
  bool emitted_end = false;

  auto observe = [&](const StepView& step) {
    const RunningIntegrals f1 = evaluate(step.t1, step.s1, y1, v1);
    while (!emitted_end) {
      const double ts = next_time();
      if (ts > step.t1 + slack) break;
      RunningIntegrals snapshot;
      if (std::abs(ts - step.t1) <= slack) {
        snapshot = acc + (0.5 * (step.t1 - step.t0)) * (f_prev + f1);
        traj.samples.push_back(Sample{ts, step.s1.head(n), y1, v1, snapshot});
      } else {
        hermite_interpolate(step, ts, interp);
        Vector ys(n), vs(n);
        const RunningIntegrals fs = evaluate(ts, interp, ys, vs);
        snapshot = acc + (0.5 * (ts - step.t0)) * (f_prev + fs);
        traj.samples.push_back(Sample{ts, interp.head(n), ys, vs, snapshot});
      }
      if (ts == t_end) emitted_end = true;
      ++next_index;
    }
    acc += (0.5 * (step.t1 - step.t0)) * (f_prev + f1);
    f_prev = f1;
    traj.integrals = acc;
    traj.stats.reached = step.t1;
  };

  auto cap = [&](double t) {
    const auto* a = std::get_if<AdaptiveDopri>(&controls);
    if (a == nullptr || a->stiffness_cap <= 0.0) return kInfinity;
    return a->stiffness_cap / (1.0 + schedule(t) * problem.psi.base.grad_lipschitz);
  };

  try {
    const OdeStats st = solve_ivp(rhs, 0.0, s0, t_end, controls, cap, observe);
    traj.stats.accepted = st.accepted;
    traj.stats.rejected = st.rejected;
    traj.stats.rhs_evals = st.rhs_evals;
  } catch (const OdeFailure& e) {
    FlowState last{e.time(), e.state().head(n), Vector(n)};
    if (free_form) {
      last.y = e.state().tail(n);
    } else {
      last.y = auxiliary_from_velocity(PhaseState{e.time(), last.x, e.state().tail(n)}, problem, schedule, params);
    }
    throw IntegrationError(std::string("integration failed: ") + e.what(), std::move(last), std::move(traj));
  }
  return traj;
}

}  // namespace hdd
