#pragma once

#include <charconv>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdd/convex_oracle.hpp"
#include "hdd/flow.hpp"
#include "hdd/lyapunov.hpp"
#include "hdd/penalty_schedule.hpp"

namespace hdd {

/// Locale-independent shortest-round-trip-safe text: 17 significant digits.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
    out_ << '\n';
  }

  CsvWriter& cell(double v) { return raw(format_double(v)); }
  CsvWriter& cell(long v) { return raw(std::to_string(v)); }
  CsvWriter& cell(int v) { return raw(std::to_string(v)); }
  CsvWriter& cell(const std::string& s) { return raw(s); }

  void end_row() {
    out_ << '\n';
    first_ = true;
  }

 private:
  CsvWriter& raw(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }

  std::ostream& out_;
  bool first_ = true;
};

inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const BilevelProblem& problem,
                                 const PenaltySchedule& schedule) {
  const int n = traj.dimension();
  std::vector<std::string> cols{"t"};
  for (int i = 1; i <= n; ++i) cols.push_back("x_" + std::to_string(i));
  for (int i = 1; i <= n; ++i) cols.push_back("v_" + std::to_string(i));
  cols.insert(cols.end(), {"beta", "phi", "psi"});
  CsvWriter w(out);
  w.header(cols);
  for (const auto& s : traj.samples) {
    w.cell(s.t);
    for (int i = 0; i < n; ++i) w.cell(s.x(i));
    for (int i = 0; i < n; ++i) w.cell(s.v(i));
    w.cell(schedule(s.t)).cell(problem.phi.value(s.x)).cell(problem.psi.base.value(s.x));
    w.end_row();
  }
}

inline void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticsRow>& rows) {
  CsvWriter w(out);
  w.header({"t", "E_1gl", "E_d1", "E_d2", "E", "dE_fd", "dE_analytic_1gl", "beta_tilde", "int_beta_psi",
            "int_speed_sq", "int_grad_comb_sq", "margin_lyap"});
  for (const auto& r : rows) {
    w.cell(r.t).cell(r.e_one_plus_gl).cell(r.e_delta1).cell(r.e_delta2).cell(r.energy).cell(r.de_fd);
    w.cell(r.de_analytic_one_plus_gl).cell(r.beta_tilde).cell(r.int_beta_psi).cell(r.int_speed_sq);
    w.cell(r.int_grad_comb_sq).cell(r.margin_lyap);
    w.end_row();
  }
}

template <class Fn>
void write_file(const std::string& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  fn(out);
}

}  // namespace hdd
