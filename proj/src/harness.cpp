#include "rmader/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "rmader/rng.hpp"

namespace rmader {

double resolve_delta_dc(const DeltaDcSpec& spec, double delta_introd,
                        double jitter_cap, const std::vector<double>* measured) {
  switch (spec.kind) {
    case DeltaDcSpec::Kind::Absolute:
      return spec.value;
    case DeltaDcSpec::Kind::IntrodPlus:
      return delta_introd + spec.offset;
    case DeltaDcSpec::Kind::AboveMax:
      return delta_introd + jitter_cap + spec.margin;
    case DeltaDcSpec::Kind::Percentile: {
      if (!measured || measured->empty()) {
        throw std::runtime_error("percentile delta_dc spec needs calibration data");
      }
      std::vector<double> sorted = *measured;
      std::sort(sorted.begin(), sorted.end());
      const auto n = static_cast<double>(sorted.size());
      auto rank = static_cast<std::size_t>(std::ceil(spec.pct / 100.0 * n));
      rank = std::min(sorted.size(), std::max<std::size_t>(rank, 1));
      return sorted[rank - 1];
    }
  }
  throw std::logic_error("unreachable");
}

Scenario circle_scenario(const CircleSpec& circle, const Scenario& base) {
  if (circle.n_agents < 1) throw std::invalid_argument("circle: n_agents < 1");
  Scenario s = base;
  s.agents.clear();
  for (int i = 0; i < circle.n_agents; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / circle.n_agents;
    AgentSpec a;
    a.start = Vec3(circle.radius * std::cos(angle),
                   circle.radius * std::sin(angle), circle.altitude);
    a.goal = Vec3(-a.start.x(), -a.start.y(), circle.altitude);
    s.agents.push_back(a);
  }
  return s;
}

std::uint64_t derive_seed(std::uint64_t base_seed, int cell_index,
                          int run_index) {
  std::uint64_t state = base_seed;
  state ^= 0x517cc1b727220a95ull * static_cast<std::uint64_t>(cell_index + 1);
  state ^= 0x2545f4914f6cdd1dull * static_cast<std::uint64_t>(run_index + 1);
  return splitmix64(state);
}

namespace {

std::string dc_kind_name(DeltaDcSpec::Kind k) {
  switch (k) {
    case DeltaDcSpec::Kind::Absolute: return "absolute";
    case DeltaDcSpec::Kind::IntrodPlus: return "introd_plus";
    case DeltaDcSpec::Kind::AboveMax: return "above_max";
    case DeltaDcSpec::Kind::Percentile: return "percentile";
  }
  return "?";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void to_json(nlohmann::json& j, const ExperimentSpec& spec) {
  j = nlohmann::json::object();
  if (spec.circle) {
    j["scenario"] = {{"kind", "circle"},
                     {"n_agents", spec.circle->n_agents},
                     {"radius", spec.circle->radius},
                     {"altitude", spec.circle->altitude}};
  } else if (spec.scenario_file) {
    j["scenario"] = {{"kind", "file"}, {"path", *spec.scenario_file}};
  }
  nlohmann::json modes = nlohmann::json::array();
  for (Mode m : spec.modes) modes.push_back(m == Mode::Rmader ? "rmader" : "mader");
  j["modes"] = modes;
  j["delta_introd_values"] = spec.delta_introd_values;
  nlohmann::json dcs = nlohmann::json::array();
  for (const auto& d : spec.delta_dc_specs) {
    nlohmann::json jd = {{"kind", dc_kind_name(d.kind)}};
    switch (d.kind) {
      case DeltaDcSpec::Kind::Absolute: jd["value"] = d.value; break;
      case DeltaDcSpec::Kind::IntrodPlus: jd["offset"] = d.offset; break;
      case DeltaDcSpec::Kind::AboveMax: jd["margin"] = d.margin; break;
      case DeltaDcSpec::Kind::Percentile: jd["pct"] = d.pct; break;
    }
    dcs.push_back(jd);
  }
  j["delta_dc"] = dcs;
  j["runs_per_cell"] = spec.runs_per_cell;
  j["base_seed"] = spec.base_seed;
  j["base"] = spec.base;
  if (!spec.calibration_delays.empty()) {
    j["calibration_delays"] = spec.calibration_delays;
  }
}

void from_json(const nlohmann::json& j, ExperimentSpec& spec) {
  spec = ExperimentSpec{};
  spec.circle.reset();
  if (j.contains("scenario")) {
    const auto& sc = j["scenario"];
    const std::string kind = sc.value("kind", "circle");
    if (kind == "circle") {
      CircleSpec c;
      c.n_agents = sc.value("n_agents", 10);
      c.radius = sc.value("radius", 10.0);
      c.altitude = sc.value("altitude", 1.0);
      spec.circle = c;
    } else if (kind == "file") {
      spec.scenario_file = sc.at("path").get<std::string>();
    } else {
      throw std::invalid_argument("experiment: unknown scenario kind " + kind);
    }
  } else {
    spec.circle = CircleSpec{};
  }
  if (j.contains("modes")) {
    spec.modes.clear();
    for (const auto& m : j["modes"]) {
      const std::string name = m.get<std::string>();
      if (name == "rmader") spec.modes.push_back(Mode::Rmader);
      else if (name == "mader") spec.modes.push_back(Mode::Mader);
      else throw std::invalid_argument("experiment: unknown mode " + name);
    }
  }
  if (j.contains("delta_introd_values")) {
    spec.delta_introd_values = j["delta_introd_values"].get<std::vector<double>>();
  }
  if (j.contains("delta_dc")) {
    spec.delta_dc_specs.clear();
    for (const auto& jd : j["delta_dc"]) {
      DeltaDcSpec d;
      const std::string kind = jd.value("kind", "introd_plus");
      if (kind == "absolute") {
        d.kind = DeltaDcSpec::Kind::Absolute;
        d.value = jd.at("value").get<double>();
      } else if (kind == "introd_plus") {
        d.kind = DeltaDcSpec::Kind::IntrodPlus;
        d.offset = jd.value("offset", 0.035);
      } else if (kind == "above_max") {
        d.kind = DeltaDcSpec::Kind::AboveMax;
        d.margin = jd.value("margin", 0.005);
      } else if (kind == "percentile") {
        d.kind = DeltaDcSpec::Kind::Percentile;
        d.pct = jd.at("pct").get<double>();
      } else {
        throw std::invalid_argument("experiment: unknown delta_dc kind " + kind);
      }
      spec.delta_dc_specs.push_back(d);
    }
  }
  spec.runs_per_cell = j.value("runs_per_cell", 1);
  spec.base_seed = j.value("base_seed", std::uint64_t{1});
  if (j.contains("base")) spec.base = j["base"].get<Scenario>();
  if (j.contains("calibration_delays")) {
    spec.calibration_delays = j["calibration_delays"].get<std::vector<double>>();
  }
}

bool ExperimentReport::any_error() const {
  return std::any_of(runs.begin(), runs.end(),
                     [](const RunRow& r) { return !r.error.empty(); });
}

std::vector<CellRow> aggregate_cells(const std::vector<RunRow>& runs) {
  std::vector<CellRow> cells;
  for (const RunRow& r : runs) {
    if (cells.empty() || cells.back().cell_index != r.cell_index) {
      CellRow c;
      c.cell_index = r.cell_index;
      c.mode = r.mode;
      c.delta_introd = r.delta_introd;
      c.delta_dc = r.delta_dc;
      cells.push_back(c);
    }
    CellRow& c = cells.back();
    ++c.runs;
    if (!r.error.empty()) {
      ++c.errors;
      continue;
    }
    c.collision_pct += r.collided;
    c.avg_stops += r.avg_stops;
    c.avg_accel_integral += r.avg_accel_integral;
    c.avg_jerk_integral += r.avg_jerk_integral;
    c.avg_travel_time += r.avg_travel_time;
    c.max_travel_time = std::max(c.max_travel_time, r.max_travel_time);
  }
  for (CellRow& c : cells) {
    const int ok = c.runs - c.errors;
    if (ok > 0) {
      c.collision_pct = 100.0 * c.collision_pct / ok;
      c.avg_stops /= ok;
      c.avg_accel_integral /= ok;
      c.avg_jerk_integral /= ok;
      c.avg_travel_time /= ok;
    }
  }
  return cells;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, int parallel) {
  if (spec.runs_per_cell < 1) throw std::invalid_argument("runs_per_cell < 1");

  Scenario base = spec.base;
  if (spec.scenario_file) {
    std::ifstream in(*spec.scenario_file);
    if (!in) throw std::runtime_error("cannot open scenario file " + *spec.scenario_file);
    nlohmann::json j;
    in >> j;
    base = j.get<Scenario>();
  } else if (spec.circle) {
    base = circle_scenario(*spec.circle, base);
  }
  if (base.agents.empty()) throw std::invalid_argument("experiment: no agents");

  struct Cell {
    Mode mode;
    double delta_introd;
    double delta_dc;
  };
  std::vector<Cell> cells;
  for (Mode mode : spec.modes) {
    for (double di : spec.delta_introd_values) {
      for (const auto& dc : spec.delta_dc_specs) {
        const double resolved = resolve_delta_dc(
            dc, di, base.delay.jitter.upper_bound(),
            spec.calibration_delays.empty() ? nullptr : &spec.calibration_delays);
        cells.push_back({mode, di, resolved});
      }
    }
  }

  ExperimentReport report;
  report.spec = spec;
  report.runs.resize(cells.size() * spec.runs_per_cell);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= report.runs.size()) return;
      const int cell_index = static_cast<int>(idx / spec.runs_per_cell);
      const int run_index = static_cast<int>(idx % spec.runs_per_cell);
      const Cell& cell = cells[cell_index];

      RunRow row;
      row.cell_index = cell_index;
      row.mode = cell.mode == Mode::Rmader ? "rmader" : "mader";
      row.delta_introd = cell.delta_introd;
      row.delta_dc = cell.delta_dc;
      row.run_index = run_index;
      row.seed = derive_seed(spec.base_seed, cell_index, run_index);
      try {
        Scenario sc = base;
        sc.mode = cell.mode;
        sc.delay.delta_introd = cell.delta_introd;
        sc.delta_dc = cell.delta_dc;
        sc.seed = row.seed;
        Simulation sim(sc);
        const RunMetrics m = sim.run();
        row.collided = m.any_collision() ? 1 : 0;
        row.collision_pairs = static_cast<int>(m.collision_pairs.size());
        const auto n = static_cast<double>(m.agents.size());
        bool all = true;
        for (const auto& a : m.agents) {
          row.avg_travel_time += a.travel_time / n;
          row.max_travel_time = std::max(row.max_travel_time, a.travel_time);
          row.avg_stops += static_cast<double>(a.stops) / n;
          row.avg_accel_integral += a.accel_integral / n;
          row.avg_jerk_integral += a.jerk_integral / n;
          all = all && a.reached;
        }
        row.all_reached = all ? 1 : 0;
        row.delay_count = static_cast<int>(m.delay_samples.size());
        if (!m.delay_samples.empty()) {
          row.delay_min = *std::min_element(m.delay_samples.begin(), m.delay_samples.end());
          row.delay_max = *std::max_element(m.delay_samples.begin(), m.delay_samples.end());
        }
        row.delay_bin_lo = cell.delta_introd;
        row.delay_bin_hi = m.delay_max_bound + 1e-9;
        const double bin_w =
            (row.delay_bin_hi - row.delay_bin_lo) / RunRow::kDelayBins;
        for (double d : m.delay_samples) {
          const int bin = std::clamp(
              static_cast<int>((d - row.delay_bin_lo) / bin_w), 0,
              RunRow::kDelayBins - 1);
          ++row.delay_hist[bin];
        }
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      report.runs[idx] = std::move(row);
    }
  };

  parallel = std::max(1, parallel);
  if (parallel == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < parallel; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  report.cells = aggregate_cells(report.runs);
  return report;
}

namespace {

void write_runs_csv(const ExperimentReport& report, const std::filesystem::path& p) {
  std::ofstream out(p);
  out << "cell_index,mode,delta_introd,delta_dc,run_index,seed,error,collided,"
         "collision_pairs,avg_travel_time,max_travel_time,avg_stops,"
         "avg_accel_integral,avg_jerk_integral,all_reached,delay_count,"
         "delay_min,delay_max\n";
  for (const auto& r : report.runs) {
    out << r.cell_index << ',' << r.mode << ',' << fmt(r.delta_introd) << ','
        << fmt(r.delta_dc) << ',' << r.run_index << ',' << r.seed << ','
        << r.error << ',' << r.collided << ',' << r.collision_pairs << ','
        << fmt(r.avg_travel_time) << ',' << fmt(r.max_travel_time) << ','
        << fmt(r.avg_stops) << ',' << fmt(r.avg_accel_integral) << ','
        << fmt(r.avg_jerk_integral) << ',' << r.all_reached << ','
        << r.delay_count << ',' << fmt(r.delay_min) << ',' << fmt(r.delay_max)
        << '\n';
  }
}

void write_cells_csv(const ExperimentReport& report, const std::filesystem::path& p) {
  std::ofstream out(p);
  out << "cell_index,mode,delta_introd,delta_dc,runs,errors,collision_pct,"
         "avg_stops,avg_accel_integral,avg_jerk_integral,avg_travel_time,"
         "max_travel_time\n";
  for (const auto& c : report.cells) {
    out << c.cell_index << ',' << c.mode << ',' << fmt(c.delta_introd) << ','
        << fmt(c.delta_dc) << ',' << c.runs << ',' << c.errors << ','
        << fmt(c.collision_pct) << ',' << fmt(c.avg_stops) << ','
        << fmt(c.avg_accel_integral) << ',' << fmt(c.avg_jerk_integral) << ','
        << fmt(c.avg_travel_time) << ',' << fmt(c.max_travel_time) << '\n';
  }
}

void write_delays_csv(const ExperimentReport& report, const std::filesystem::path& p) {
  std::ofstream out(p);
  out << "cell_index,mode,delta_introd,delta_dc,bin_lo,bin_hi,count\n";
  for (const auto& c : report.cells) {
    std::array<long, RunRow::kDelayBins> counts{};
    double lo = 0.0, hi = 0.0;
    bool have = false;
    for (const auto& r : report.runs) {
      if (r.cell_index != c.cell_index || !r.error.empty()) continue;
      for (int b = 0; b < RunRow::kDelayBins; ++b) counts[b] += r.delay_hist[b];
      lo = r.delay_bin_lo;
      hi = r.delay_bin_hi;
      have = true;
    }
    if (!have) continue;
    const double width = (hi - lo) / RunRow::kDelayBins;
    for (int b = 0; b < RunRow::kDelayBins; ++b) {
      out << c.cell_index << ',' << c.mode << ',' << fmt(c.delta_introd) << ','
          << fmt(c.delta_dc) << ',' << fmt(lo + b * width) << ','
          << fmt(lo + (b + 1) * width) << ',' << counts[b] << '\n';
    }
  }
}

}  // namespace

void emit_report(const ExperimentReport& report,
                 const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_runs_csv(report, out_dir / "runs.csv");
  write_cells_csv(report, out_dir / "cells.csv");
  write_delays_csv(report, out_dir / "delays.csv");

  nlohmann::json manifest;
  manifest["spec"] = report.spec;
  manifest["version"] = "0.1.0";
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& r : report.runs) seeds.push_back(r.seed);
  manifest["seeds"] = seeds;
  std::ofstream out(out_dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  nlohmann::json j;
  in >> j;
  if (j.contains("spec")) return j["spec"].get<ExperimentSpec>();  // manifest
  return j.get<ExperimentSpec>();
}

Scenario table3_case_scenario(int case_number, Mode mode) {
  if (case_number < 1 || case_number > 4) {
    throw std::invalid_argument("table3 case number must be 1..4");
  }
  Scenario s;
  // Two opposing lanes 0.5 m apart in y: inside the 0.8 m pairwise box when
  // the x positions cross, with each goal pulled clear of the other start.
  AgentSpec a, b;
  a.start = Vec3(-6.0, 0.0, 1.0);
  a.goal = Vec3(6.0, 0.0, 1.0);
  b.start = Vec3(7.5, 0.5, 1.0);
  b.goal = Vec3(-7.5, 0.5, 1.0);
  s.agents = {a, b};
  s.mode = mode;
  s.delta_dc = 0.1;
  s.delay.delta_introd = 0.05;
  s.delay.jitter.kind = JitterConfig::Kind::None;
  s.plan_duration.kind = PlanDurationConfig::Kind::Fixed;
  s.plan_duration.value = 0.04;
  s.protocol.check_duration = 0.02;
  s.protocol.recheck_duration = 0.02;
  s.protocol.latency_budget = 0.3;
  s.initial_broadcast = false;
  s.horizon = 20.0;
  s.seed = 7;

  // Fixed durations make agent phases exact: with start s, O = [s, s+0.04],
  // C = [s+0.04, s+0.06]; MADER: R = [s+0.06, s+0.08], commit broadcast at
  // s+0.08; RMADER: NEW at s+0.06, DC = [s+0.06, s+0.16], commit at s+0.16.
  // Messages arrive 0.05 after sending. Start offsets below put agent A's
  // broadcast into the phase of agent B the case calls for.
  double start_a = 0.0, start_b = 0.0;
  if (mode == Mode::Mader) {
    switch (case_number) {
      case 1: start_b = 0.11; break;  // arrival 0.13 in O_B = [0.11, 0.15]
      case 2: start_b = 0.08; break;  // arrival 0.13 in C_B = [0.12, 0.14]
      case 3: start_b = 0.06; break;  // arrival 0.13 in R_B = [0.12, 0.14]
      case 4: start_b = 0.0; break;   // arrival 0.13 after commit at 0.08
    }
  } else {
    switch (case_number) {
      case 1: start_b = 0.09; break;  // NEW arrival 0.11 in O_B = [0.09, 0.13]
      case 2: start_b = 0.06; break;  // arrival 0.11 in C_B = [0.10, 0.12]
      case 3: start_b = 0.02; break;  // arrival 0.11 in DC_B = [0.08, 0.18]
      case 4:
        // B's NEW (sent 0.06) reaches A at 0.11 inside DC_A; A's NEW (sent
        // 0.12) reaches B at 0.17, after DC_B ends at 0.16.
        start_a = 0.06;
        start_b = 0.0;
        break;
    }
  }
  s.agents[0].start_time = start_a;
  s.agents[1].start_time = start_b;
  return s;
}

CaseOutcome run_table3_case(int case_number, Mode mode) {
  CaseOutcome out;
  out.scenario = table3_case_scenario(case_number, mode);
  Simulation sim(out.scenario);
  out.metrics = sim.run();
  out.event_log = sim.event_log();
  for (const auto& line : out.event_log) {
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j["event"] != "discard") continue;
    const std::string reason = j["payload"].value("reason", "");
    if (reason == "check") out.deconflicted_by_check = true;
    if (reason == "delay-check") out.deconflicted_by_delay_check = true;
    if (reason == "recheck") out.deconflicted_by_recheck = true;
  }
  return out;
}

}  // namespace rmader
