#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "hdd/convex_oracle.hpp"
#include "hdd/flow.hpp"
#include "hdd/gallery.hpp"
#include "hdd/lyapunov.hpp"
#include "hdd/ode.hpp"
#include "hdd/penalty_schedule.hpp"

namespace hdd {

using json = nlohmann::ordered_json;

/// Thrown for malformed or inconsistent documents.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite doubles are written as the strings "inf", "-inf", "nan".
inline json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double to_number(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ConfigError(what + ": expected a number");
}

inline const json& require(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(ctx + ": missing key '" + key + "'");
  return j.at(key);
}

inline double number_at(const json& j, const std::string& key, const std::string& ctx) {
  return to_number(require(j, key, ctx), ctx + "." + key);
}

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

inline Vector vector_from_json(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw ConfigError(ctx + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = to_number(j[i], ctx);
  return v;
}

/// Dense row-major nested arrays.
inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) throw ConfigError(ctx + ": expected a nonempty array of rows");
  const auto cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw ConfigError(ctx + ": rows must be nonempty arrays");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw ConfigError(ctx + ": ragged matrix");
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = to_number(j[i][k], ctx);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Problems

inline json to_json(const ProblemData& d) {
  json phi = {{"type", "quadratic"}, {"Q", to_json(d.phi.Q)}, {"b", to_json(d.phi.b)}, {"c", number(d.phi.c)}};
  if (d.phi.lower_bound) phi["lower_bound"] = number(*d.phi.lower_bound);
  json psi;
  if (const auto* z = std::get_if<ZeroData>(&d.psi)) {
    psi = {{"type", "zero"}, {"n", z->n}};
  } else {
    const auto& a = std::get<AffineData>(d.psi);
    psi = {{"type", "affine_distance"}, {"A", to_json(a.A)}, {"c", to_json(a.c)}};
  }
  return {{"phi", phi}, {"psi", psi}};
}

inline ProblemData problem_from_json(const json& j) {
  const json& phi = require(j, "phi", "problem");
  if (require(phi, "type", "phi") != "quadratic") throw ConfigError("phi.type must be \"quadratic\"");
  ProblemData d;
  d.phi.Q = matrix_from_json(require(phi, "Q", "phi"), "phi.Q");
  d.phi.b = vector_from_json(require(phi, "b", "phi"), "phi.b");
  d.phi.c = phi.contains("c") ? to_number(phi["c"], "phi.c") : 0.0;
  if (phi.contains("lower_bound")) d.phi.lower_bound = to_number(phi["lower_bound"], "phi.lower_bound");

  const json& psi = require(j, "psi", "problem");
  const auto type = require(psi, "type", "psi").get<std::string>();
  if (type == "zero") {
    d.psi = ZeroData{static_cast<int>(d.phi.Q.rows())};
  } else if (type == "affine_distance") {
    d.psi = AffineData{matrix_from_json(require(psi, "A", "psi"), "psi.A"),
                       vector_from_json(require(psi, "c", "psi"), "psi.c")};
  } else {
    throw ConfigError("psi.type must be \"zero\" or \"affine_distance\"");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Schedules, parameters, integrator controls

inline json to_json(const PenaltySchedule& s) {
  return std::visit(
      [](const auto& f) -> json {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ShiftedPower>)
          return {{"family", "shifted_power"}, {"alpha", f.alpha}, {"t0", f.t0}, {"scale", f.scale}};
        else if constexpr (std::is_same_v<T, Exponential>)
          return {{"family", "exponential"}, {"beta0", f.beta0}, {"rate", f.rate}};
        else
          return {{"family", "constant"}, {"beta0", f.beta0}};
      },
      s.family());
}

inline PenaltySchedule schedule_from_json(const json& j) {
  const auto family = require(j, "family", "schedule").get<std::string>();
  try {
    if (family == "shifted_power") {
      return PenaltySchedule::shifted_power(number_at(j, "alpha", "schedule"), number_at(j, "t0", "schedule"),
                                            j.contains("scale") ? to_number(j["scale"], "schedule.scale") : 1.0);
    }
    if (family == "exponential") {
      const double rate = j.contains("rate") ? number_at(j, "rate", "schedule") : number_at(j, "c", "schedule");
      return PenaltySchedule::exponential(j.contains("beta0") ? to_number(j["beta0"], "schedule.beta0") : 1.0,
                                          rate);
    }
    if (family == "constant") return PenaltySchedule::constant(number_at(j, "beta0", "schedule"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown schedule family '" + family + "'");
}

inline json to_json(const DynamicsParams& p) {
  return {{"gamma", p.gamma}, {"lambda", p.lambda}, {"theta", p.theta}};
}

inline DynamicsParams params_from_json(const json& j, DynamicsParams base = {}) {
  if (!j.is_object()) throw ConfigError("params: expected an object");
  if (j.contains("gamma")) base.gamma = to_number(j["gamma"], "params.gamma");
  if (j.contains("lambda")) base.lambda = to_number(j["lambda"], "params.lambda");
  if (j.contains("theta")) base.theta = to_number(j["theta"], "params.theta");
  return base;
}

inline json to_json(const IntegratorControls& c) {
  if (const auto* rk = std::get_if<FixedRk4>(&c)) return {{"method", "rk4"}, {"step", rk->step}};
  const auto& a = std::get<AdaptiveDopri>(c);
  return {{"method", "dopri5"},      {"rel_tol", a.rel_tol},           {"abs_tol", a.abs_tol},
          {"max_step", number(a.max_step)}, {"min_step", a.min_step}, {"initial_step", a.initial_step},
          {"stiffness_cap", a.stiffness_cap}};
}

inline IntegratorControls controls_from_json(const json& j) {
  const auto method = j.contains("method") ? j["method"].get<std::string>() : std::string("dopri5");
  IntegratorControls out;
  if (method == "rk4") {
    out = FixedRk4{number_at(j, "step", "integrator")};
  } else if (method == "dopri5") {
    AdaptiveDopri a;
    if (j.contains("rel_tol")) a.rel_tol = to_number(j["rel_tol"], "integrator.rel_tol");
    if (j.contains("abs_tol")) a.abs_tol = to_number(j["abs_tol"], "integrator.abs_tol");
    if (j.contains("max_step")) a.max_step = to_number(j["max_step"], "integrator.max_step");
    if (j.contains("min_step")) a.min_step = to_number(j["min_step"], "integrator.min_step");
    if (j.contains("initial_step")) a.initial_step = to_number(j["initial_step"], "integrator.initial_step");
    if (j.contains("stiffness_cap")) a.stiffness_cap = to_number(j["stiffness_cap"], "integrator.stiffness_cap");
    out = a;
  } else {
    throw ConfigError("integrator.method must be \"rk4\" or \"dopri5\"");
  }
  try {
    validate_controls(out);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gallery instances

inline json to_json(const GalleryInstance& g) {
  return {{"name", g.name},
          {"tags", g.tags},
          {"problem", to_json(g.data)},
          {"reference",
           {{"z", to_json(g.reference.z)},
            {"phi_z", g.reference.phi_z},
            {"nu", to_json(g.reference.nu)},
            {"kkt_residual", g.reference.kkt_residual},
            {"unique", g.reference.unique}}},
          {"params", to_json(g.params)},
          {"u0", to_json(g.u0)},
          {"v0", to_json(g.v0)}};
}

/// Rebuilds an instance from its document. The stored reference is kept only
/// if it still satisfies the KKT conditions to 1e-10.
inline GalleryInstance instance_from_json(const json& j) {
  GalleryInstance g;
  g.name = require(j, "name", "instance").get<std::string>();
  if (j.contains("tags")) g.tags = j["tags"].get<std::vector<std::string>>();
  g.data = problem_from_json(require(j, "problem", "instance"));
  try {
    g.problem = build_problem(g.data);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(g.name + ": " + e.what());
  }
  const json& ref = require(j, "reference", "instance");
  g.reference.z = vector_from_json(require(ref, "z", "reference"), "reference.z");
  g.reference.nu = ref.contains("nu") ? vector_from_json(ref["nu"], "reference.nu") : Vector(0);
  g.reference.unique = ref.value("unique", true);
  g.params = j.contains("params") ? params_from_json(j["params"]) : DynamicsParams{};
  g.u0 = vector_from_json(require(j, "u0", "instance"), "u0");
  g.v0 = vector_from_json(require(j, "v0", "instance"), "v0");

  const int n = g.problem.dimension();
  if (g.reference.z.size() != n || g.u0.size() != n || g.v0.size() != n)
    throw ConfigError(g.name + ": vectors do not match the problem dimension");
  Matrix A(0, n);
  Vector c(0);
  if (const auto* a = std::get_if<AffineData>(&g.data.psi)) {
    A = a->A;
    c = a->c;
  }
  if (g.reference.nu.size() != A.rows()) throw ConfigError(g.name + ": multiplier has wrong dimension");
  g.reference.kkt_residual = kkt_residual(g.data.phi.Q, g.data.phi.b, A, c, g.reference.z, g.reference.nu);
  if (!(g.reference.kkt_residual <= 1e-10)) throw ConfigError(g.name + ": stored reference fails the KKT check");
  g.reference.phi_z = g.problem.phi.value(g.reference.z);
  return g;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const ValidationReport& r) {
  return {{"assumption", "growth"},
          {"family", r.family},
          {"horizon", r.horizon},
          {"grid_points", r.grid_points},
          {"sup_ratio_grid", r.sup_ratio_grid},
          {"sup_ratio_analytic", r.sup_ratio_analytic},
          {"certified_k", r.certified_k},
          {"k_max", r.k_max},
          {"positive", r.positive},
          {"nondecreasing", r.nondecreasing},
          {"tends_to_infinity", r.tends_to_infinity},
          {"pass", r.pass}};
}

inline json to_json(const ConditionHReport& r) {
  json j = {{"assumption", "conjugate_gap_integrability"},
            {"constraint", r.constraint},
            {"p_norm", r.p_norm},
            {"horizon", r.horizon},
            {"finite_branch", r.finite_branch},
            {"quadrature", number(r.quadrature)},
            {"closed_form", r.closed_form ? number(*r.closed_form) : json(nullptr)},
            {"closed_form_total", r.closed_form_total ? number(*r.closed_form_total) : json(nullptr)},
            {"tail_convergent", r.tail_convergent},
            {"pass", r.pass}};
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  return j;
}

inline json to_json(const ConvergenceReport& r) {
  json claims = json::array();
  for (const auto& c : r.claims) {
    json measured = json::object();
    for (const auto& m : c.measured) measured[m.name] = number(m.value);
    json e = {{"id", c.id},
              {"measured", measured},
              {"trend", number(c.trend)},
              {"tolerance", c.tolerance},
              {"verdict", verdict_name(c.verdict)}};
    if (!c.note.empty()) e["note"] = c.note;
    claims.push_back(e);
  }
  return {{"horizon", r.horizon},
          {"claims", claims},
          {"counts",
           {{"pass", r.count(Verdict::pass)},
            {"fail", r.count(Verdict::fail)},
            {"inconclusive", r.count(Verdict::inconclusive)},
            {"not_applicable", r.count(Verdict::not_applicable)}}}};
}

inline json to_json(const LyapunovCheck& c) {
  json j = {{"samples_checked", c.margins.size()},
            {"tolerance", c.tolerance},
            {"max_margin", number(c.max_margin)},
            {"max_normalized_margin", number(c.max_normalized)},
            {"failures", c.failures},
            {"inconclusive", c.inconclusive},
            {"pass", c.pass}};
  if (c.strong_checked) j["max_strong_normalized_margin"] = number(c.max_strong_normalized);
  return j;
}

inline json to_json(const IntegratorStats& s) {
  json j = {{"method", s.method},      {"formulation", s.formulation}, {"accepted_steps", s.accepted},
            {"rejected_steps", s.rejected}, {"rhs_evaluations", s.rhs_evals}, {"t_end", s.t_end},
            {"reached", s.reached},    {"cadence", s.cadence}};
  if (s.method == "rk4") {
    j["step"] = s.step;
  } else {
    j["rel_tol"] = s.rel_tol;
    j["abs_tol"] = s.abs_tol;
    j["stiffness_cap"] = s.stiffness_cap;
  }
  return j;
}

}  // namespace hdd
