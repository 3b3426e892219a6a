#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "rmader/harness.hpp"

namespace {

int cmd_run(const std::string& spec_file, const std::string& out_dir,
            std::int64_t seed_override, int parallel) {
  rmader::ExperimentSpec spec = rmader::load_experiment_spec(spec_file);
  if (seed_override >= 0) spec.base_seed = static_cast<std::uint64_t>(seed_override);
  const rmader::ExperimentReport report = rmader::run_experiment(spec, parallel);
  rmader::emit_report(report, out_dir);
  for (const auto& c : report.cells) {
    std::cout << c.mode << " delta_introd=" << c.delta_introd * 1e3
              << "ms delta_dc=" << c.delta_dc * 1e3
              << "ms : collision%=" << c.collision_pct
              << " avg_stops=" << c.avg_stops
              << " avg_travel=" << c.avg_travel_time << "s"
              << (c.errors ? " ERRORS=" + std::to_string(c.errors) : "")
              << '\n';
  }
  return report.any_error() ? 1 : 0;
}

int cmd_case(const std::string& name, const std::string& mode_name,
             const std::string& out_dir) {
  int case_number = 0;
  for (int i = 1; i <= 4; ++i) {
    if (name == "table3-case" + std::to_string(i)) case_number = i;
  }
  if (case_number == 0) {
    std::cerr << "unknown case name " << name << " (table3-case1..4)\n";
    return 2;
  }
  const rmader::Mode mode =
      mode_name == "mader" ? rmader::Mode::Mader : rmader::Mode::Rmader;
  const rmader::CaseOutcome outcome = rmader::run_table3_case(case_number, mode);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream log(std::filesystem::path(out_dir) / "events.jsonl");
    for (const auto& line : outcome.event_log) log << line << '\n';
    std::ofstream sc(std::filesystem::path(out_dir) / "scenario.json");
    sc << nlohmann::json(outcome.scenario).dump(2) << '\n';
  }
  std::cout << name << " mode=" << mode_name
            << " collisions=" << outcome.metrics.collision_pairs.size()
            << " check=" << outcome.deconflicted_by_check
            << " delay_check=" << outcome.deconflicted_by_delay_check
            << " recheck=" << outcome.deconflicted_by_recheck << '\n';
  return 0;
}

int cmd_calibrate(const std::string& spec_file, const std::string& out_dir) {
  rmader::ExperimentSpec spec = rmader::load_experiment_spec(spec_file);
  // One run per (mode, delta_introd) cell with the first delta_dc spec that
  // needs no calibration data; records the realized delays.
  rmader::ExperimentSpec calib = spec;
  calib.runs_per_cell = 1;
  calib.delta_dc_specs = {rmader::DeltaDcSpec{}};
  rmader::Scenario base = calib.base;
  if (calib.circle) base = rmader::circle_scenario(*calib.circle, base);

  std::vector<double> delays;
  for (double di : calib.delta_introd_values) {
    rmader::Scenario sc = base;
    sc.mode = calib.modes.empty() ? rmader::Mode::Rmader : calib.modes.front();
    sc.delay.delta_introd = di;
    sc.delta_dc = rmader::resolve_delta_dc(rmader::DeltaDcSpec{}, di,
                                           sc.delay.jitter.upper_bound());
    sc.seed = calib.base_seed;
    rmader::Simulation sim(sc);
    sim.run();
    const auto& samples = sim.delay_stats().samples();
    delays.insert(delays.end(), samples.begin(), samples.end());
  }
  std::filesystem::create_directories(out_dir);
  std::ofstream out(std::filesystem::path(out_dir) / "calibration.json");
  nlohmann::json j = spec;
  j["calibration_delays"] = delays;
  out << j.dump(2) << '\n';
  std::cout << "recorded " << delays.size() << " delays; spec with calibration at "
            << (std::filesystem::path(out_dir) / "calibration.json") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized asynchronous trajectory deconfliction simulator"};
  app.require_subcommand(1);

  std::string spec_file, out_dir = "out", case_name, mode_name = "rmader";
  std::int64_t seed_override = -1;
  int parallel = 1;

  auto* run = app.add_subcommand("run", "Run an experiment sweep");
  run->add_option("--spec", spec_file, "Experiment spec or manifest JSON")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed_override, "Override base seed");
  run->add_option("--parallel", parallel, "Worker threads");

  auto* case_cmd = app.add_subcommand("case", "Run a scripted deconfliction case");
  case_cmd->add_option("--name", case_name, "table3-case{1..4}")->required();
  case_cmd->add_option("--mode", mode_name, "mader|rmader")
      ->check(CLI::IsMember({"mader", "rmader"}));
  case_cmd->add_option("--out", out_dir, "Output directory for logs");

  auto* calibrate = app.add_subcommand("calibrate", "Record delay percentiles");
  calibrate->add_option("--spec", spec_file, "Experiment spec JSON")->required();
  calibrate->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(spec_file, out_dir, seed_override, parallel);
    if (case_cmd->parsed()) return cmd_case(case_name, mode_name, out_dir);
    if (calibrate->parsed()) return cmd_calibrate(spec_file, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
