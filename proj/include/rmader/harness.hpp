#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rmader/netsim.hpp"

namespace rmader {

/// How a sweep cell's Delay Check length is chosen.
struct DeltaDcSpec {
  enum class Kind {
    Absolute,    // fixed value
    IntrodPlus,  // delta_introd + offset
    AboveMax,    // delta_introd + jitter cap + margin  (">100th percentile")
    Percentile   // percentile of recorded delays (needs calibration data)
  };
  Kind kind = Kind::IntrodPlus;
  double value = 0.0;    // Absolute
  double offset = 0.035; // IntrodPlus
  double margin = 0.005; // AboveMax
  double pct = 75.0;     // Percentile
};

/// delta_DC for one cell. `measured` are calibration delays; required only
/// for percentile specs.
double resolve_delta_dc(const DeltaDcSpec& spec, double delta_introd,
                        double jitter_cap,
                        const std::vector<double>* measured = nullptr);

struct CircleSpec {
  int n_agents = 10;
  double radius = 10.0;
  double altitude = 1.0;
};

struct ExperimentSpec {
  // Scenario source: a circle-exchange generator or an explicit file.
  std::optional<CircleSpec> circle = CircleSpec{};
  std::optional<std::string> scenario_file;

  std::vector<Mode> modes = {Mode::Rmader};
  std::vector<double> delta_introd_values = {0.0};
  std::vector<DeltaDcSpec> delta_dc_specs = {DeltaDcSpec{}};
  int runs_per_cell = 1;
  std::uint64_t base_seed = 1;
  Scenario base;  // template for everything not swept

  std::vector<double> calibration_delays;  // for percentile delta_DC specs
};

void to_json(nlohmann::json& j, const ExperimentSpec& spec);
void from_json(const nlohmann::json& j, ExperimentSpec& spec);

/// Agents on a circle at equal angles, each exchanging position with its
/// antipodal point.
Scenario circle_scenario(const CircleSpec& circle, const Scenario& base);

/// Deterministic per-run seed derived from (base_seed, cell, run).
std::uint64_t derive_seed(std::uint64_t base_seed, int cell_index, int run_index);

struct RunRow {
  int cell_index = 0;
  std::string mode;
  double delta_introd = 0.0;
  double delta_dc = 0.0;
  int run_index = 0;
  std::uint64_t seed = 0;
  std::string error;  // empty on success
  int collided = 0;
  int collision_pairs = 0;
  double avg_travel_time = 0.0;
  double max_travel_time = 0.0;
  double avg_stops = 0.0;
  double avg_accel_integral = 0.0;
  double avg_jerk_integral = 0.0;
  int all_reached = 0;
  int delay_count = 0;
  double delay_min = 0.0;
  double delay_max = 0.0;
  // Histogram of sampled delays over [delta_introd, delta_introd + cap];
  // summed per cell into delays.csv, not written to runs.csv.
  static constexpr int kDelayBins = 20;
  std::array<long, kDelayBins> delay_hist{};
  double delay_bin_lo = 0.0;
  double delay_bin_hi = 0.0;
};

struct CellRow {
  int cell_index = 0;
  std::string mode;
  double delta_introd = 0.0;
  double delta_dc = 0.0;
  int runs = 0;
  int errors = 0;
  double collision_pct = 0.0;
  double avg_stops = 0.0;
  double avg_accel_integral = 0.0;
  double avg_jerk_integral = 0.0;
  double avg_travel_time = 0.0;
  double max_travel_time = 0.0;
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::vector<RunRow> runs;
  std::vector<CellRow> cells;
  bool any_error() const;
};

/// Cell aggregates recomputed purely from run rows (error rows excluded from
/// the averages).
std::vector<CellRow> aggregate_cells(const std::vector<RunRow>& runs);

/// Executes every cell x run of the sweep; run failures become error rows,
/// not aborts. Deterministic output for any worker count.
ExperimentReport run_experiment(const ExperimentSpec& spec, int parallel = 1);

/// Writes runs.csv, cells.csv, delays.csv and manifest.json into out_dir.
void emit_report(const ExperimentReport& report,
                 const std::filesystem::path& out_dir);

/// Loads an experiment spec from a spec file or a previously written
/// manifest.json (re-running a manifest reproduces the experiment).
ExperimentSpec load_experiment_spec(const std::filesystem::path& file);

/// Scripted two-agent scenarios delivering agent A's trajectory during
/// O_B / C_B / DC_B (resp. R_B) / the next iteration. case_number in 1..4.
Scenario table3_case_scenario(int case_number, Mode mode);

/// Runs one scripted case and reports what the acceptance cares about.
struct CaseOutcome {
  Scenario scenario;
  RunMetrics metrics;
  std::vector<std::string> event_log;
  bool deconflicted_by_check = false;        // discard reason "check"
  bool deconflicted_by_delay_check = false;  // discard reason "delay-check"
  bool deconflicted_by_recheck = false;      // discard reason "recheck"
};
CaseOutcome run_table3_case(int case_number, Mode mode);

}  // namespace rmader
