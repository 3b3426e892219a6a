#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmader/protocol.hpp"

namespace rmader {

/// Jitter added on top of the fixed introduced delay. The cap keeps the
/// worst-case delay finite so a delta_max exists.
struct JitterConfig {
  enum class Kind { None, Uniform, Exponential };
  Kind kind = Kind::Uniform;
  double a = 0.0, b = 0.03;   // uniform bounds
  double mean = 0.01;         // exponential mean
  double cap = 0.05;          // exponential cap

  double upper_bound() const;
};

struct DelayModel {
  double delta_introd = 0.0;
  JitterConfig jitter;

  double sample(std::mt19937_64& gen) const;
  double delta_max() const { return delta_introd + jitter.upper_bound(); }
};

struct PlanDurationConfig {
  enum class Kind { Fixed, Uniform };
  Kind kind = Kind::Uniform;
  double value = 0.031;       // fixed
  double a = 0.015, b = 0.06; // uniform bounds

  double sample(std::mt19937_64& gen) const;
  double mean() const;
  double min() const { return kind == Kind::Fixed ? value : a; }
};

/// Per-message record of the sampled delivery delays of one run.
class DelayStats {
 public:
  void record(double delay) { samples_.push_back(delay); }
  const std::vector<double>& samples() const { return samples_; }
  std::size_t count() const { return samples_.size(); }
  double max() const;
  double min() const;
  /// Nearest-rank percentile, p in (0, 100].
  double percentile(double p) const;

 private:
  std::vector<double> samples_;
};

struct AgentSpec {
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  std::optional<double> start_time;  // defaults to index * startup_spacing
};

struct ProtocolTiming {
  double check_duration = 0.001;
  double recheck_duration = 0.0005;
  double latency_budget = 0.0;  // 0 = derived from delta_dc and plan duration
  double goal_tolerance = 0.15;
  double goal_speed_tolerance = 0.05;
  double startup_spacing = 0.25;
  double stop_speed = 0.1;
  double stop_min_duration = 0.2;
  double stop_grid = 0.01;
  double check_inflation = 0.04;
  double min_progress = 0.02;
  double progress_backoff = 0.25;
  bool verify_commits = true;
};

struct Scenario {
  std::vector<AgentSpec> agents;
  Mode mode = Mode::Rmader;
  double delta_dc = 0.1;
  DelayModel delay;
  PlanDurationConfig plan_duration;
  DynamicLimits limits;
  BoundaryBox box;
  std::uint64_t seed = 1;
  double horizon = 60.0;
  double sample_dt = 0.01;
  bool initial_broadcast = true;  // agents announce their hover at t = 0
  ProtocolTiming protocol;
  PlannerConfig planner;

  double agent_start_time(std::size_t i) const;
  double resolved_latency_budget() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);

struct AgentRunMetrics {
  bool reached = false;
  double travel_time = 0.0;
  int stops = 0;
  double accel_integral = 0.0;
  double jerk_integral = 0.0;
};

struct RunMetrics {
  std::vector<AgentRunMetrics> agents;
  std::vector<std::pair<int, int>> collision_pairs;  // ground-truth monitor
  bool any_collision() const { return !collision_pairs.empty(); }
  double end_time = 0.0;
  std::uint64_t events_processed = 0;
  std::vector<double> delay_samples;
  double delay_max_bound = 0.0;  // delta_introd + jitter cap
  double delta_introd = 0.0;
};

/// Deterministic single-threaded discrete-event kernel: broadcast network
/// with per-recipient sampled delays, simulated planning durations, the
/// ground-truth collision monitor, and the per-agent protocol machines.
class Simulation final : public ProtocolHost {
 public:
  explicit Simulation(Scenario scenario);

  RunMetrics run();

  const std::vector<std::string>& event_log() const { return log_lines_; }
  const DelayStats& delay_stats() const { return delay_stats_; }
  const Agent& agent(int i) const { return *agents_[i]; }

  // ProtocolHost
  double now() const override { return now_; }
  void schedule_timer(int agent, TimerKind kind, double fire_time,
                      std::uint64_t generation) override;
  void schedule_plan(int agent, const PlanRequest& request,
                     std::uint64_t generation) override;
  void broadcast(const Message& msg) override;
  void log_event(int agent, std::string_view event,
                 nlohmann::json payload) override;

 private:
  struct Event {
    double fire_time = 0.0;
    std::uint64_t seq = 0;
    enum class Kind { Delivery, Timer, PlanDone, MetricTick } kind = Kind::MetricTick;
    int agent = -1;
    std::uint64_t generation = 0;
    TimerKind timer_kind = TimerKind::IterationStart;
    Message message;
    std::optional<PlanResult> plan;
  };
  struct EventCompare {
    bool operator()(const Event& a, const Event& b) const {
      if (a.fire_time != b.fire_time) return a.fire_time > b.fire_time;
      return a.seq > b.seq;
    }
  };
  void push_event(Event e);
  void monitor_tick();
  Trajectory executed_trajectory(int i, double a, double b) const;

  Scenario scenario_;
  std::vector<std::unique_ptr<Agent>> agents_;
  std::priority_queue<Event, std::vector<Event>, EventCompare> queue_;
  double now_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t events_processed_ = 0;
  std::mt19937_64 delay_rng_;
  std::mt19937_64 plan_rng_;
  DelayStats delay_stats_;
  std::vector<std::string> log_lines_;

  std::set<std::pair<int, int>> collision_pairs_;
  std::vector<bool> reached_;
  std::vector<double> reach_time_;
  bool all_reached_ = false;
};

}  // namespace rmader
