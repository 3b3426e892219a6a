#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmader/harness.hpp"

using namespace rmader;

namespace {

ExperimentSpec tiny_experiment() {
  ExperimentSpec spec;
  spec.circle = CircleSpec{3, 4.0, 1.0};
  spec.modes = {Mode::Rmader};
  spec.delta_introd_values = {0.02};
  DeltaDcSpec dc;
  dc.kind = DeltaDcSpec::Kind::AboveMax;
  dc.margin = 0.005;
  spec.delta_dc_specs = {dc};
  spec.runs_per_cell = 2;
  spec.base_seed = 17;
  spec.base.horizon = 30.0;
  return spec;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("resolve_delta_dc covers every spec form") {
  DeltaDcSpec above;
  above.kind = DeltaDcSpec::Kind::AboveMax;
  above.margin = 0.005;
  CHECK(resolve_delta_dc(above, 0.1, 0.03) == doctest::Approx(0.135));

  DeltaDcSpec plus;
  plus.kind = DeltaDcSpec::Kind::IntrodPlus;
  plus.offset = 0.035;
  CHECK(resolve_delta_dc(plus, 0.05, 0.03) == doctest::Approx(0.085));

  DeltaDcSpec abs;
  abs.kind = DeltaDcSpec::Kind::Absolute;
  abs.value = 0.2;
  CHECK(resolve_delta_dc(abs, 0.1, 0.03) == doctest::Approx(0.2));

  // percentile of measured delays: uniform(0, 0.03) on top of 0 introd
  DeltaDcSpec pct;
  pct.kind = DeltaDcSpec::Kind::Percentile;
  pct.pct = 75.0;
  std::vector<double> measured;
  for (int i = 0; i < 10000; ++i) measured.push_back(0.03 * i / 9999.0);
  CHECK(resolve_delta_dc(pct, 0.0, 0.03, &measured) ==
        doctest::Approx(0.0225).epsilon(1e-2));

  // degenerate: no jitter means every percentile equals delta_introd
  std::vector<double> flat(100, 0.05);
  CHECK(resolve_delta_dc(pct, 0.05, 0.0, &flat) == doctest::Approx(0.05));

  CHECK_THROWS_AS((void)resolve_delta_dc(pct, 0.0, 0.03, nullptr),
                  std::runtime_error);
}

TEST_CASE("circle scenario places agents evenly with antipodal goals") {
  Scenario s = circle_scenario(CircleSpec{10, 10.0, 1.5}, Scenario{});
  REQUIRE(s.agents.size() == 10);
  for (const auto& a : s.agents) {
    CHECK(a.start.head<2>().norm() == doctest::Approx(10.0));
    CHECK((a.goal + Vec3(a.start.x(), a.start.y(), -a.start.z())).norm() ==
          doctest::Approx(0.0).epsilon(1e-9));
    CHECK(a.start.z() == 1.5);
    CHECK(a.goal.z() == 1.5);
  }
  // equal angular spacing
  const double angle0 = std::atan2(s.agents[0].start.y(), s.agents[0].start.x());
  const double angle1 = std::atan2(s.agents[1].start.y(), s.agents[1].start.x());
  CHECK(angle1 - angle0 == doctest::Approx(2 * M_PI / 10));
}

TEST_CASE("derive_seed is deterministic and spreads") {
  CHECK(derive_seed(1, 0, 0) == derive_seed(1, 0, 0));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 0, 1));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 1, 0));
  CHECK(derive_seed(1, 0, 0) != derive_seed(2, 0, 0));
}

TEST_CASE("run_experiment fills rows and aggregates purely from rows") {
  const ExperimentSpec spec = tiny_experiment();
  const ExperimentReport report = run_experiment(spec, 2);
  REQUIRE(report.runs.size() == 2);
  CHECK_FALSE(report.any_error());
  for (const auto& r : report.runs) {
    CHECK(r.mode == "rmader");
    CHECK(r.delta_dc == doctest::Approx(0.02 + 0.03 + 0.005));
    CHECK(r.collided == 0);
    CHECK(r.all_reached == 1);
    CHECK(r.avg_travel_time > 0.0);
    CHECK(r.avg_travel_time <= spec.base.horizon);
  }
  REQUIRE(report.cells.size() == 1);
  const CellRow& c = report.cells[0];
  CHECK(c.runs == 2);
  CHECK(c.collision_pct == 0.0);
  // aggregates are recomputable from rows bit-exactly
  const auto again = aggregate_cells(report.runs);
  CHECK(again[0].avg_travel_time == c.avg_travel_time);
  CHECK(again[0].avg_stops == c.avg_stops);
  CHECK(again[0].avg_accel_integral == c.avg_accel_integral);
  const double hand_avg =
      0.5 * (report.runs[0].avg_travel_time + report.runs[1].avg_travel_time);
  CHECK(c.avg_travel_time == doctest::Approx(hand_avg).epsilon(1e-15));
}

TEST_CASE("emit_report writes the four files; manifest reruns identically") {
  const std::filesystem::path dir = "/tmp/rmader_test_report";
  std::filesystem::remove_all(dir);
  const ExperimentSpec spec = tiny_experiment();
  const ExperimentReport report = run_experiment(spec, 1);
  emit_report(report, dir);
  for (const char* name : {"runs.csv", "cells.csv", "delays.csv", "manifest.json"}) {
    CHECK(std::filesystem::exists(dir / name));
  }
  const std::string runs_first = slurp(dir / "runs.csv");
  CHECK(runs_first.find("cell_index,mode") == 0);

  // re-running from the manifest reproduces runs.csv byte-for-byte
  const ExperimentSpec again = load_experiment_spec(dir / "manifest.json");
  const ExperimentReport rerun = run_experiment(again, 2);
  const std::filesystem::path dir2 = "/tmp/rmader_test_report2";
  std::filesystem::remove_all(dir2);
  emit_report(rerun, dir2);
  CHECK(slurp(dir2 / "runs.csv") == runs_first);
  CHECK(slurp(dir2 / "cells.csv") == slurp(dir / "cells.csv"));
  CHECK(slurp(dir2 / "delays.csv") == slurp(dir / "delays.csv"));
}

TEST_CASE("an experiment with no cells still writes valid headers") {
  ExperimentSpec spec = tiny_experiment();
  spec.modes.clear();
  const ExperimentReport report = run_experiment(spec, 1);
  CHECK(report.runs.empty());
  CHECK(report.cells.empty());
  const std::filesystem::path dir = "/tmp/rmader_test_report_empty";
  std::filesystem::remove_all(dir);
  emit_report(report, dir);
  CHECK(slurp(dir / "runs.csv").find("cell_index,mode") == 0);
  CHECK(slurp(dir / "cells.csv").find("cell_index,mode") == 0);
}

TEST_CASE("scripted case scenarios are structurally sound") {
  for (int c = 1; c <= 4; ++c) {
    for (Mode mode : {Mode::Mader, Mode::Rmader}) {
      const Scenario s = table3_case_scenario(c, mode);
      CHECK(s.agents.size() == 2);
      CHECK(s.delay.jitter.kind == JitterConfig::Kind::None);
      CHECK(s.plan_duration.kind == PlanDurationConfig::Kind::Fixed);
      CHECK_FALSE(s.initial_broadcast);
      // lanes conflict when crossing but endpoints stay clear of start boxes
      CHECK(std::abs(s.agents[0].start.y() - s.agents[1].start.y()) <
            2 * s.box.hy);
      CHECK((s.agents[1].goal - s.agents[0].start).cwiseAbs().maxCoeff() >
            2 * s.box.hx);
    }
  }
  CHECK_THROWS_AS((void)table3_case_scenario(5, Mode::Mader),
                  std::invalid_argument);
}

TEST_CASE("table3 case 1 smoke: rmader deconflicts at Check") {
  const CaseOutcome o = run_table3_case(1, Mode::Rmader);
  CHECK(o.metrics.collision_pairs.empty());
  CHECK(o.deconflicted_by_check);
}

TEST_CASE("experiment spec json round-trips") {
  ExperimentSpec spec = tiny_experiment();
  spec.modes = {Mode::Rmader, Mode::Mader};
  DeltaDcSpec pct;
  pct.kind = DeltaDcSpec::Kind::Percentile;
  pct.pct = 75.0;
  spec.delta_dc_specs.push_back(pct);
  spec.calibration_delays = {0.01, 0.02, 0.03};
  const nlohmann::json j = spec;
  const ExperimentSpec back = j.get<ExperimentSpec>();
  CHECK(nlohmann::json(back).dump() == j.dump());
}
