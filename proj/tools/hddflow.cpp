#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hdd/hdd.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  bool force = false;
  double cadence = 0.0;
  double horizon = 0.0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)")->required();
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_flag("--force", c.force, "Run even when the schedule fails the assumption checks");
  cmd->add_option("--cadence", c.cadence, "Output sample spacing");
  cmd->add_option("--horizon", c.horizon, "Final time T");
}

hdd::RunConfig load(const Common& c) {
  hdd::RunConfig cfg = hdd::load_run_config(c.config);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.cadence != 0.0) {
    if (!(c.cadence > 0.0)) throw hdd::ConfigError("--cadence must be positive");
    cfg.cadence = c.cadence;
  }
  if (c.horizon != 0.0) {
    if (!(c.horizon > 0.0)) throw hdd::ConfigError("--horizon must be positive");
    cfg.t_end = c.horizon;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate and verify the penalized Hessian-damped bilevel flow"};
  app.require_subcommand(1);

  Common common;
  auto* validate = app.add_subcommand("validate", "Check the schedule assumptions for a configuration");
  add_common(validate, common);
  auto* run = app.add_subcommand("run", "Integrate one trajectory and write CSV and JSON reports");
  add_common(run, common);
  auto* sweep = app.add_subcommand("sweep", "Repeat a run over values of one parameter");
  add_common(sweep, common);
  std::string axis;
  std::vector<double> values;
  bool values_given = false;
  unsigned jobs = 1;
  sweep->add_option("--axis", axis, "gamma, lambda, alpha, t0 or theta");
  sweep->add_option("--values", values, "Parameter values")->delimiter(',')->each([&](const std::string&) {
    values_given = true;
  });
  sweep->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  std::string gallery_out;
  auto* exporter = app.add_subcommand("export-gallery", "Write the built-in gallery instances as JSON");
  exporter->add_option("--out", gallery_out, "Target directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hdd::kExitConfig;
  }

  try {
    if (exporter->parsed()) {
      std::filesystem::create_directories(gallery_out);
      for (const auto& g : hdd::standard_gallery())
        hdd::write_json_file((std::filesystem::path(gallery_out) / (g.name + ".json")).string(), hdd::to_json(g));
      return hdd::kExitOk;
    }

    const hdd::RunConfig cfg = load(common);

    if (validate->parsed()) {
      const auto v = hdd::cmd_validate(cfg);
      std::cout << v.report.dump(2) << '\n';
      if (!common.out.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        hdd::write_json_file((std::filesystem::path(cfg.out_dir) / "validation.json").string(), v.report);
      }
      return v.exit_code;
    }

    if (run->parsed()) {
      const auto r = hdd::cmd_run(cfg, hdd::RunOptions{common.force, true});
      (r.exit_code == hdd::kExitOk ? std::cout : std::cerr) << r.summary << '\n';
      return r.exit_code;
    }

    const std::string sweep_axis = axis.empty() ? cfg.sweep_axis : axis;
    const std::vector<double> sweep_values = values_given ? values : cfg.sweep_values;
    if (sweep_axis.empty()) throw hdd::ConfigError("sweep needs an axis (--axis or config sweep.axis)");
    const auto rows = hdd::cmd_sweep(cfg, sweep_axis, sweep_values, common.force, jobs);
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = (std::filesystem::path(cfg.out_dir) / "sweep.csv").string();
    hdd::write_file(path, [&](std::ostream& os) { hdd::write_sweep_csv(os, rows); });
    hdd::write_sweep_csv(std::cout, rows);
    return hdd::kExitOk;
  } catch (const hdd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return hdd::kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return hdd::kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return hdd::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return hdd::kExitIntegration;
  }
}
