#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rmader/geometry.hpp"
#include "rmader/planner.hpp"
#include "rmader/trajectory.hpp"

namespace rmader {

enum class Mode { Mader, Rmader };

enum class Phase { Idle, Optimizing, Checking, DelayChecking, Rechecking };
std::string_view phase_name(Phase p);

enum class MsgKind { New, Committed };

struct Message {
  int sender = -1;
  MsgKind kind = MsgKind::Committed;
  double send_time = 0.0;
  Trajectory trajectory;  // the sender's future path from send_time onward
};

/// Per-peer record: last committed trajectory plus, transiently, a newly
/// optimized one for which no commit has been received yet.
struct PeerEntry {
  std::optional<Trajectory> committed;
  std::optional<Trajectory> pending_new;
  double last_send_time = -1.0;
};

class TrajectoryStore {
 public:
  /// Applies a message; returns false when dropped as stale (older send time
  /// than something already accepted from that sender).
  bool apply(const Message& msg);

  const std::map<int, PeerEntry>& peers() const { return peers_; }
  bool known(int peer) const { return peers_.count(peer) > 0; }

  /// Every stored trajectory in deterministic (peer id, committed-first) order.
  std::vector<const Trajectory*> all() const;

 private:
  std::map<int, PeerEntry> peers_;
};

enum class TimerKind { IterationStart, CheckEnd, DelayCheckEnd, RecheckEnd };

struct AgentConfig {
  Mode mode = Mode::Rmader;
  double delta_dc = 0.1;          // s, Delay Check length
  BoundaryBox box;
  DynamicLimits limits;
  Vec3 goal = Vec3::Zero();
  double latency_budget = 0.0;    // s; t_switch = iteration start + budget
  double check_duration = 0.001;  // s, simulated Check compute time
  double recheck_duration = 0.0005;// s, simulated Recheck duration (MADER)
  double goal_tolerance = 0.15;   // m, stop planning when committed end is here
  double check_inflation = 0.04;  // m, extra full-extent clearance in checks
  double min_progress = 0.02;     // m, smallest goal gain worth committing
  double progress_backoff = 0.25; // s, idle time after a no-progress discard
  bool verify_commits = true;     // re-verify the store at every commit
  PlannerConfig planner;
};

/// Kernel services the agent state machine uses. Implemented by the
/// simulation; kept abstract so protocol logic is testable on its own.
class ProtocolHost {
 public:
  virtual ~ProtocolHost() = default;
  virtual double now() const = 0;
  virtual void schedule_timer(int agent, TimerKind kind, double fire_time,
                              std::uint64_t generation) = 0;
  /// Samples a planning duration, evaluates the request, and delivers the
  /// result to the agent at now + duration.
  virtual void schedule_plan(int agent, const PlanRequest& request,
                             std::uint64_t generation) = 0;
  virtual void broadcast(const Message& msg) = 0;
  virtual void log_event(int agent, std::string_view event,
                         nlohmann::json payload) = 0;
};

/// One execution regime: trajectory flown from switch_time until the next
/// regime takes over.
struct Regime {
  double switch_time;
  Trajectory trajectory;
};

/// Deconfliction state machine for one agent: MADER
/// (Optimization/Check/Recheck) or RMADER (Optimization/Check/DelayCheck)
/// over the shared trajectory store.
class Agent {
 public:
  Agent(int id, AgentConfig cfg, const Vec3& start_position);

  int id() const { return id_; }
  Phase phase() const { return phase_; }
  std::uint64_t generation() const { return generation_; }
  bool planning_done() const { return planning_done_; }
  const TrajectoryStore& store() const { return store_; }
  const std::vector<Regime>& regimes() const { return regimes_; }
  const AgentConfig& config() const { return cfg_; }

  StateSample executed_state(double t) const;

  /// The agent's actual future path from t onward (committed tail, then the
  /// candidate from its switch time when include_candidate is set).
  Trajectory future_path(double t, bool include_candidate) const;

  Message initial_commit_message() const;

  // Kernel entry points. Stale events (generation mismatch) are ignored.
  void on_iteration_start(ProtocolHost& host);
  void on_plan_complete(ProtocolHost& host, std::uint64_t generation,
                        const std::optional<PlanResult>& result);
  void on_timer(ProtocolHost& host, TimerKind kind, std::uint64_t generation);
  void on_message(ProtocolHost& host, const Message& msg);

  /// Conservative conflict test of a candidate against everything currently
  /// stored, from t_switch onward. Returns the first conflicting peer id.
  std::optional<int> store_conflict(const Trajectory& candidate,
                                    double t_switch) const;

 private:
  void start_iteration_now(ProtocolHost& host);
  void delay_check_fail(ProtocolHost& host, std::string_view reason);
  void commit_candidate(ProtocolHost& host);
  void go_idle_and_restart(ProtocolHost& host, double delay = 0.0);
  void set_phase(ProtocolHost& host, Phase p);
  bool conflicts_with(const Trajectory& candidate, const Trajectory& peer,
                      double t_switch) const;

  int id_;
  AgentConfig cfg_;
  TrajectoryStore store_;
  std::vector<Regime> regimes_;
  Phase phase_ = Phase::Idle;
  std::uint64_t generation_ = 0;

  std::optional<Trajectory> candidate_;
  double t_switch_ = 0.0;
  bool check_passed_ = false;
  std::optional<int> check_conflict_peer_;
  int arrivals_during_check_ = 0;
  bool planning_done_ = false;
};

/// FNV-1a digest of a trajectory's JSON form; the event-log payload id.
std::string trajectory_digest(const Trajectory& traj);

}  // namespace rmader
