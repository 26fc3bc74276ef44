#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hdd/csv.hpp"
#include "hdd/flow.hpp"
#include "hdd/gallery.hpp"
#include "hdd/lyapunov.hpp"
#include "hdd/serialization.hpp"

namespace hdd {

enum ExitCode : int { kExitOk = 0, kExitAssumption = 1, kExitConfig = 2, kExitIntegration = 3 };

struct RunConfig {
  GalleryInstance instance;
  PenaltySchedule schedule = default_schedule();
  DynamicsParams params;
  Vector u0;
  Vector v0;
  double t_end = 2000.0;
  IntegratorControls controls = AdaptiveDopri{};
  Formulation formulation = Formulation::hessian_free;
  double cadence = 1.0;
  std::string out_dir = "out";
  VerdictTolerances tolerances;
  std::string sweep_axis;
  std::vector<double> sweep_values;
};

/// "zero", "random(<seed>)" or an explicit array.
inline Vector initial_vector_from_json(const json& j, int n, const std::string& ctx) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "zero") return Vector::Zero(n);
    unsigned long long seed = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "random(%llu%c", &seed, &tail) == 2 && tail == ')' &&
        s.back() == ')')
      return UniformSource(seed).vector(n);
    throw ConfigError(ctx + ": expected \"zero\", \"random(<seed>)\" or an array");
  }
  Vector v = vector_from_json(j, ctx);
  if (v.size() != n) throw ConfigError(ctx + ": wrong dimension");
  return v;
}

inline GalleryInstance load_instance(const std::string& name, const std::optional<std::filesystem::path>& dir) {
  if (dir) {
    const auto path = *dir / (name + ".json");
    if (!std::filesystem::exists(path)) throw ConfigError("gallery instance file not found: " + path.string());
    return instance_from_json(read_json_file(path.string()));
  }
  try {
    return builtin_instance(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

/// Relative paths inside the document resolve against `base_dir`.
inline RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir = ".") {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig cfg;
  if (j.contains("problem")) {
    ProblemData data = problem_from_json(j["problem"]);
    const int n = static_cast<int>(data.phi.Q.rows());
    try {
      cfg.instance = make_instance("inline", {}, std::move(data), DynamicsParams{}, Vector::Zero(n), Vector::Zero(n),
                                   true);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("inline problem: ") + e.what());
    }
  } else {
    std::optional<std::filesystem::path> dir;
    if (j.contains("gallery_dir")) dir = base_dir / j["gallery_dir"].get<std::string>();
    cfg.instance = load_instance(require(j, "instance", "config").get<std::string>(), dir);
  }
  const int n = cfg.instance.problem.dimension();
  cfg.params = cfg.instance.params;
  cfg.u0 = cfg.instance.u0;
  cfg.v0 = cfg.instance.v0;

  if (j.contains("schedule")) cfg.schedule = schedule_from_json(j["schedule"]);
  if (j.contains("params")) cfg.params = params_from_json(j["params"], cfg.params);
  if (!cfg.params.valid()) throw ConfigError("params: need gamma > 0, lambda > 0, 0 < theta < 1");
  if (j.contains("u0")) cfg.u0 = initial_vector_from_json(j["u0"], n, "u0");
  if (j.contains("v0")) cfg.v0 = initial_vector_from_json(j["v0"], n, "v0");
  if (j.contains("t_end")) cfg.t_end = number_at(j, "t_end", "config");
  if (j.contains("integrator")) {
    cfg.controls = controls_from_json(j["integrator"]);
    if (j["integrator"].contains("formulation")) {
      const auto f = j["integrator"]["formulation"].get<std::string>();
      if (f == "hessian_free") cfg.formulation = Formulation::hessian_free;
      else if (f == "hessian_direct") cfg.formulation = Formulation::hessian_direct;
      else throw ConfigError("integrator.formulation must be \"hessian_free\" or \"hessian_direct\"");
    }
  }
  if (j.contains("cadence")) cfg.cadence = number_at(j, "cadence", "config");
  if (j.contains("out")) cfg.out_dir = (base_dir / j["out"].get<std::string>()).string();
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    auto set = [&](const char* key, double& field) {
      if (t.contains(key)) field = to_number(t[key], std::string("tolerances.") + key);
    };
    set("phi_gap", cfg.tolerances.phi_gap);
    set("beta_psi", cfg.tolerances.beta_psi);
    set("psi", cfg.tolerances.psi);
    set("y_norm", cfg.tolerances.y_norm);
    set("tail_ratio", cfg.tolerances.tail_ratio);
    set("drift", cfg.tolerances.drift);
    set("vi", cfg.tolerances.vi);
    set("strong", cfg.tolerances.strong);
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    cfg.sweep_axis = require(s, "axis", "sweep").get<std::string>();
    if (s.contains("values")) {
      const Vector v = vector_from_json(s["values"], "sweep.values");
      cfg.sweep_values.assign(v.begin(), v.end());
    }
  }
  if (!(cfg.t_end > 0.0) || !std::isfinite(cfg.t_end)) throw ConfigError("t_end must be positive and finite");
  if (!(cfg.cadence > 0.0) || !std::isfinite(cfg.cadence)) throw ConfigError("cadence must be positive and finite");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  const json j = read_json_file(path);
  return run_config_from_json(j, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// validate

struct ValidateOutcome {
  int exit_code = kExitOk;
  json report;
  ValidationReport growth;
};

inline ValidateOutcome cmd_validate(const RunConfig& cfg) {
  ValidateOutcome out;
  out.growth = validate_growth(cfg.schedule, cfg.params, cfg.t_end);
  const Vector p = -cfg.instance.problem.phi.grad(cfg.instance.reference.z);
  const ConditionHReport h = condition_h_check(cfg.instance.problem.psi, p, cfg.schedule, cfg.t_end);
  const double eps = epsilon(cfg.params);
  const double identity_error = std::abs(eps - (1.0 + cfg.params.lambda * cfg.params.gamma) * k_max(cfg.params));
  const bool pass = out.growth.pass && h.pass;
  out.report = {{"instance", cfg.instance.name},
                {"schedule", to_json(cfg.schedule)},
                {"params", to_json(cfg.params)},
                {"epsilon", eps},
                {"k_max", k_max(cfg.params)},
                {"epsilon_identity_error", identity_error},
                {"assumptions", json::array({to_json(out.growth), to_json(h)})},
                {"pass", pass}};
  out.exit_code = pass ? kExitOk : kExitAssumption;
  return out;
}

// ---------------------------------------------------------------------------
// run

struct RunOutcome {
  int exit_code = kExitOk;
  std::string summary;
  json report;
  std::optional<Trajectory> trajectory;
  std::optional<ConvergenceReport> convergence;
  std::optional<LyapunovCheck> lyapunov;
};

struct RunOptions {
  bool force = false;
  bool write_files = true;
};

inline std::string run_summary(const ConvergenceReport& rep) {
  std::ostringstream s;
  s << "horizon=" << format_double(rep.horizon)
    << " phi_gap=" << format_double(rep.claim("T1_phi_value").measurement("phi_gap"))
    << " beta_psi=" << format_double(rep.claim("T2_beta_psi_to_zero").measurement("beta_psi"))
    << " y_norm=" << format_double(rep.claim("T5_combined_velocity_to_zero").measurement("y_norm"))
    << " pass=" << rep.count(Verdict::pass) << " fail=" << rep.count(Verdict::fail)
    << " inconclusive=" << rep.count(Verdict::inconclusive)
    << " not_applicable=" << rep.count(Verdict::not_applicable);
  return s.str();
}

/// Integrates the configured run, then evaluates diagnostics, the Lyapunov
/// inequality and the convergence verdicts. Files land in cfg.out_dir.
inline RunOutcome cmd_run(const RunConfig& cfg, const RunOptions& opts = {}) {
  RunOutcome out;
  const ValidateOutcome val = cmd_validate(cfg);
  out.report["instance"] = cfg.instance.name;
  out.report["validation"] = val.report;
  out.report["forced"] = opts.force;

  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  if (opts.write_files) fs::create_directories(dir);
  auto write_report = [&] {
    if (opts.write_files) write_json_file((dir / "report.json").string(), out.report);
  };

  if (val.exit_code != kExitOk && !opts.force) {
    out.exit_code = kExitAssumption;
    out.report["status"] = "assumption_failed";
    out.summary = "assumptions failed; rerun with --force for an ablation run";
    write_report();
    return out;
  }

  const BilevelProblem& problem = cfg.instance.problem;
  const Vector& z = cfg.instance.reference.z;
  const double k = val.growth.certified_k;
  FlowOptions fo;
  fo.cadence = cfg.cadence;
  fo.formulation = cfg.formulation;
  fo.reference = make_integral_reference(problem, z, k, cfg.params);
  fo.ablation = opts.force;

  auto write_trajectory = [&](const Trajectory& t) {
    if (!opts.write_files) return;
    write_file((dir / "trajectory.csv").string(),
               [&](std::ostream& os) { write_trajectory_csv(os, t, problem, cfg.schedule); });
    write_json_file((dir / "integrator.json").string(),
                    json{{"controls", to_json(cfg.controls)}, {"stats", to_json(t.stats)}});
  };

  Trajectory traj;
  try {
    traj = integrate(problem, cfg.schedule, cfg.params, cfg.u0, cfg.v0, cfg.t_end, cfg.controls, fo);
  } catch (const IntegrationError& e) {
    out.exit_code = kExitIntegration;
    out.report["status"] = "integration_failed";
    out.report["error"] = e.what();
    out.report["last_good_state"] = {
        {"t", e.last_good().t}, {"x", to_json(e.last_good().x)}, {"y", to_json(e.last_good().y)}};
    out.summary = std::string("integration failed: ") + e.what();
    if (!e.partial().samples.empty()) write_trajectory(e.partial());
    write_report();
    out.trajectory = e.partial();
    return out;
  }

  const auto rows = compute_diagnostics(traj, problem, cfg.schedule, cfg.params, z, k);
  const LyapunovCheck lyap = lyapunov_inequality_check(traj, problem, cfg.schedule, cfg.params, z, k);
  const ConvergenceReport conv =
      convergence_verdicts(traj, problem, cfg.schedule, cfg.params, z, cfg.instance.reference.phi_z, cfg.tolerances);

  write_trajectory(traj);
  if (opts.write_files)
    write_file((dir / "diagnostics.csv").string(), [&](std::ostream& os) { write_diagnostics_csv(os, rows); });

  out.report["status"] = "ok";
  out.report["reference"] = {{"z", to_json(z)}, {"phi_z", cfg.instance.reference.phi_z}};
  out.report["beta_tilde_factor"] = beta_tilde_factor(k, cfg.params);
  out.report["convergence"] = to_json(conv);
  out.report["lyapunov"] = to_json(lyap);
  out.report["integrator"] = to_json(traj.stats);
  write_report();

  out.summary = run_summary(conv);
  out.trajectory = std::move(traj);
  out.convergence = conv;
  out.lyapunov = lyap;
  return out;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::string status;
  double phi_gap = std::numeric_limits<double>::quiet_NaN();
  double beta_psi = std::numeric_limits<double>::quiet_NaN();
  double y_norm = std::numeric_limits<double>::quiet_NaN();
  double lyap_max_margin = std::numeric_limits<double>::quiet_NaN();
  int pass = 0;
  int fail = 0;
  int inconclusive = 0;
};

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"gamma", "lambda", "alpha", "t0", "theta"};
  return axes;
}

/// Copy of `cfg` with one axis set to `value`; nullopt when the value is
/// outside the axis domain.
inline std::optional<RunConfig> apply_axis(const RunConfig& cfg, const std::string& axis, double value) {
  RunConfig c = cfg;
  if (axis == "gamma") c.params.gamma = value;
  else if (axis == "lambda") c.params.lambda = value;
  else if (axis == "theta") c.params.theta = value;
  else if (axis == "alpha" || axis == "t0") {
    auto sp = std::get<ShiftedPower>(cfg.schedule.family());
    (axis == "alpha" ? sp.alpha : sp.t0) = value;
    try {
      c.schedule = PenaltySchedule(sp);
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  }
  if (!c.params.valid()) return std::nullopt;
  return c;
}

inline SweepRow sweep_one(const RunConfig& cfg, const std::string& axis, double value, bool force) {
  SweepRow row;
  row.axis = axis;
  row.value = value;
  const auto c = apply_axis(cfg, axis, value);
  if (!c) {
    row.status = "invalid";
    return row;
  }
  RunOutcome r;
  try {
    r = cmd_run(*c, RunOptions{force, false});
  } catch (const std::exception& e) {
    row.status = "error";
    return row;
  }
  if (r.exit_code == kExitAssumption) {
    row.status = "assumption_failed";
    return row;
  }
  if (r.exit_code == kExitIntegration) {
    row.status = "integration_failed";
    return row;
  }
  row.status = "ok";
  const ConvergenceReport& rep = *r.convergence;
  row.phi_gap = rep.claim("T1_phi_value").measurement("phi_gap");
  row.beta_psi = rep.claim("T2_beta_psi_to_zero").measurement("beta_psi");
  row.y_norm = rep.claim("T5_combined_velocity_to_zero").measurement("y_norm");
  row.lyap_max_margin = r.lyapunov->max_normalized;
  row.pass = rep.count(Verdict::pass);
  row.fail = rep.count(Verdict::fail);
  row.inconclusive = rep.count(Verdict::inconclusive);
  return row;
}

/// One row per value, in input order. Runs are independent; with jobs > 1
/// they execute on worker threads.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::string& axis,
                                       const std::vector<double>& values, bool force = false, unsigned jobs = 1) {
  if (std::find(sweep_axes().begin(), sweep_axes().end(), axis) == sweep_axes().end())
    throw ConfigError("sweep axis must be one of gamma, lambda, alpha, t0, theta");
  if ((axis == "alpha" || axis == "t0") && !std::holds_alternative<ShiftedPower>(cfg.schedule.family()))
    throw ConfigError("sweep over " + axis + " needs a shifted_power schedule");

  std::vector<SweepRow> rows(values.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < values.size(); i = next++) rows[i] = sweep_one(cfg, axis, values[i], force);
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(values.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  CsvWriter w(out);
  w.header({"axis", "value", "status", "phi_gap", "beta_psi", "y_norm", "lyap_max_margin", "pass", "fail",
            "inconclusive"});
  for (const auto& r : rows) {
    w.cell(r.axis).cell(r.value).cell(r.status).cell(r.phi_gap).cell(r.beta_psi).cell(r.y_norm);
    w.cell(r.lyap_max_margin).cell(r.pass).cell(r.fail).cell(r.inconclusive);
    w.end_row();
  }
}

}  // namespace hdd
