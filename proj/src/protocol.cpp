#include "rmader/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmader {

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::Optimizing: return "optimizing";
    case Phase::Checking: return "checking";
    case Phase::DelayChecking: return "delay-checking";
    case Phase::Rechecking: return "rechecking";
  }
  return "?";
}

std::string trajectory_digest(const Trajectory& traj) {
  const std::string dump = nlohmann::json(traj).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool TrajectoryStore::apply(const Message& msg) {
  PeerEntry& e = peers_[msg.sender];
  if (msg.send_time < e.last_send_time) return false;  // reordered, stale
  e.last_send_time = msg.send_time;
  if (msg.kind == MsgKind::New) {
    e.pending_new = msg.trajectory;
  } else {
    e.committed = msg.trajectory;
    e.pending_new.reset();
  }
  return true;
}

std::vector<const Trajectory*> TrajectoryStore::all() const {
  std::vector<const Trajectory*> out;
  for (const auto& [id, e] : peers_) {
    if (e.committed) out.push_back(&*e.committed);
    if (e.pending_new) out.push_back(&*e.pending_new);
  }
  return out;
}

Agent::Agent(int id, AgentConfig cfg, const Vec3& start_position)
    : id_(id), cfg_(std::move(cfg)) {
  regimes_.push_back({0.0, Trajectory::constant(start_position, 0.0, 1.0)});
}

StateSample Agent::executed_state(double t) const {
  size_t k = regimes_.size() - 1;
  while (k > 0 && regimes_[k].switch_time > t) --k;
  return regimes_[k].trajectory.state_at(std::max(t, regimes_[k].switch_time));
}

Trajectory Agent::future_path(double t, bool include_candidate) const {
  const Trajectory& committed = regimes_.back().trajectory;
  if (include_candidate && candidate_) {
    std::vector<PolySegment> segs;
    if (t_switch_ - t > 1e-12) {
      segs = committed.restricted(t, t_switch_);
      for (const auto& s : candidate_->segments()) segs.push_back(s);
      return Trajectory(std::move(segs));
    }
    // Check ran past the switch time; the candidate covers t already.
    if (t < candidate_->end_time()) {
      return Trajectory(candidate_->restricted(t, candidate_->end_time()));
    }
    return Trajectory::constant(candidate_->terminal_hold(), t, t + 1.0);
  }
  if (t < committed.end_time()) {
    return Trajectory(committed.restricted(t, committed.end_time()));
  }
  return Trajectory::constant(committed.terminal_hold(), t, t + 1.0);
}

Message Agent::initial_commit_message() const {
  Message msg;
  msg.sender = id_;
  msg.kind = MsgKind::Committed;
  msg.send_time = 0.0;
  msg.trajectory = regimes_.front().trajectory;
  return msg;
}

bool Agent::conflicts_with(const Trajectory& candidate,
                           const Trajectory& peer, double t_switch) const {
  const double wa = std::max(t_switch, peer.start_time());
  const double wb = std::max(candidate.end_time(), peer.end_time());
  if (!(wb - wa > 1e-12)) return false;
  // A pair whose true boxes already overlap at the window start is past
  // deconfliction; treating it as a conflict would only pin the agent in
  // place. The monitor has recorded the violation; let the agent escape.
  if (boxes_collide(candidate.position_at(wa), peer.position_at(wa), cfg_.box)) {
    return false;
  }
  // Slightly inflated box: commits keep a real clearance, so an agent's own
  // position never ends up on a peer's conservative hull (which would make
  // every later candidate fail the check).
  BoundaryBox box = cfg_.box;
  box.hx += 0.5 * cfg_.check_inflation;
  box.hy += 0.5 * cfg_.check_inflation;
  box.hz += 0.5 * cfg_.check_inflation;
  return check_pair_collision(candidate, peer, box, wa, wb);
}

std::optional<int> Agent::store_conflict(const Trajectory& candidate,
                                          double t_switch) const {
  for (const auto& [id, entry] : store_.peers()) {
    if (entry.committed && conflicts_with(candidate, *entry.committed, t_switch)) {
      return id;
    }
    if (entry.pending_new &&
        conflicts_with(candidate, *entry.pending_new, t_switch)) {
      return id;
    }
  }
  return std::nullopt;
}

void Agent::set_phase(ProtocolHost& host, Phase p) {
  phase_ = p;
  host.log_event(id_, "phase-change", {{"phase", std::string(phase_name(p))}});
}

void Agent::go_idle_and_restart(ProtocolHost& host, double delay) {
  candidate_.reset();
  ++generation_;
  set_phase(host, Phase::Idle);
  host.schedule_timer(id_, TimerKind::IterationStart, host.now() + delay,
                      generation_);
}

void Agent::on_iteration_start(ProtocolHost& host) {
  if (phase_ != Phase::Idle || planning_done_) return;
  const Trajectory& committed = regimes_.back().trajectory;
  if ((committed.terminal_hold() - cfg_.goal).norm() <= cfg_.goal_tolerance) {
    planning_done_ = true;
    host.log_event(id_, "phase-change", {{"phase", "idle"}, {"goal", true}});
    return;
  }
  start_iteration_now(host);
}

void Agent::start_iteration_now(ProtocolHost& host) {
  const double now = host.now();
  t_switch_ = now + cfg_.latency_budget;

  PlanRequest req;
  req.start = executed_state(t_switch_);
  req.start.t = t_switch_;
  req.goal = cfg_.goal;
  req.t_switch = t_switch_;
  req.num_segments = cfg_.planner.num_segments;
  // Horizon sized to the rest-to-rest minimum time for the remaining
  // distance (jerk-bound for short hops, ramp + cruise otherwise), with
  // slack, clipped to the configured range.
  const double dist = (cfg_.goal - req.start.position).norm();
  const double t_jerk = std::cbrt(32.0 * dist / cfg_.limits.j_max);
  const double t_cruise = dist / cfg_.limits.v_max +
                          cfg_.limits.v_max / cfg_.limits.a_max +
                          cfg_.limits.a_max / cfg_.limits.j_max;
  const double horizon = std::clamp(1.25 * std::max(t_jerk, t_cruise),
                                    cfg_.planner.horizon_min,
                                    cfg_.planner.horizon_max);
  req.segment_duration = horizon / req.num_segments;
  req.limits = cfg_.limits;
  req.box = cfg_.box;
  req.config = cfg_.planner;
  req.fallback_reference = future_path(t_switch_, /*include_candidate=*/false);
  for (const auto& [peer, entry] : store_.peers()) {
    if (entry.committed) req.constraints.emplace_back(peer, *entry.committed);
    if (entry.pending_new) req.constraints.emplace_back(peer, *entry.pending_new);
  }

  ++generation_;
  set_phase(host, Phase::Optimizing);
  host.schedule_plan(id_, req, generation_);
}

void Agent::on_plan_complete(ProtocolHost& host, std::uint64_t generation,
                             const std::optional<PlanResult>& result) {
  if (generation != generation_ || phase_ != Phase::Optimizing) return;
  const double now = host.now();
  if (!result) {
    host.log_event(id_, "discard", {{"reason", "infeasible"}});
    go_idle_and_restart(host);
    return;
  }
  if (now > t_switch_ + 1e-12) {
    host.log_event(id_, "discard", {{"reason", "stale-plan"}});
    go_idle_and_restart(host);
    return;
  }
  const Trajectory& committed = regimes_.back().trajectory;
  const double gain = (committed.terminal_hold() - cfg_.goal).norm() -
                      (result->trajectory.terminal_hold() - cfg_.goal).norm();
  if (gain < cfg_.min_progress) {
    host.log_event(id_, "discard", {{"reason", "no-progress"}});
    go_idle_and_restart(host, cfg_.progress_backoff);
    return;
  }
  candidate_ = result->trajectory;
  // Check runs against the store as of now, i.e. everything that arrived
  // during Optimization.
  check_conflict_peer_ = store_conflict(*candidate_, t_switch_);
  check_passed_ = !check_conflict_peer_;
  arrivals_during_check_ = 0;
  ++generation_;
  set_phase(host, Phase::Checking);
  host.schedule_timer(id_, TimerKind::CheckEnd, now + cfg_.check_duration,
                      generation_);
}

void Agent::delay_check_fail(ProtocolHost& host, std::string_view reason) {
  host.log_event(id_, "discard", {{"reason", std::string(reason)}});
  Message msg;
  msg.sender = id_;
  msg.kind = MsgKind::Committed;
  msg.send_time = host.now();
  msg.trajectory = future_path(host.now(), /*include_candidate=*/false);
  host.broadcast(msg);
  host.log_event(id_, "broadcast",
                 {{"kind", "committed"},
                  {"digest", trajectory_digest(msg.trajectory)}});
  go_idle_and_restart(host);
}

void Agent::commit_candidate(ProtocolHost& host) {
  const double now = host.now();
  // RMADER invariant only: MADER's blind commits are the vulnerability the
  // protocol comparison is about.
  if (cfg_.verify_commits && cfg_.mode == Mode::Rmader &&
      store_conflict(*candidate_, t_switch_)) {
    throw std::runtime_error("commit-time deconfliction violated");
  }
  Message msg;
  msg.sender = id_;
  msg.kind = MsgKind::Committed;
  msg.send_time = now;
  msg.trajectory = future_path(now, /*include_candidate=*/true);
  regimes_.push_back({t_switch_, *candidate_});
  host.log_event(id_, "commit",
                 {{"t_switch", t_switch_},
                  {"digest", trajectory_digest(*candidate_)}});
  host.broadcast(msg);
  host.log_event(id_, "broadcast",
                 {{"kind", "committed"},
                  {"digest", trajectory_digest(msg.trajectory)}});
  candidate_.reset();
  ++generation_;
  set_phase(host, Phase::Idle);
  host.schedule_timer(id_, TimerKind::IterationStart, t_switch_, generation_);
}

void Agent::on_timer(ProtocolHost& host, TimerKind kind,
                     std::uint64_t generation) {
  if (kind == TimerKind::IterationStart) {
    if (generation != generation_) return;
    on_iteration_start(host);
    return;
  }
  if (generation != generation_) return;
  const double now = host.now();

  switch (kind) {
    case TimerKind::CheckEnd: {
      if (phase_ != Phase::Checking) return;
      if (!check_passed_) {
        host.log_event(id_, "discard",
                       {{"reason", "check"}, {"peer", *check_conflict_peer_}});
        go_idle_and_restart(host);
        return;
      }
      if (cfg_.mode == Mode::Rmader) {
        Message msg;
        msg.sender = id_;
        msg.kind = MsgKind::New;
        msg.send_time = now;
        msg.trajectory = future_path(now, /*include_candidate=*/true);
        host.broadcast(msg);
        host.log_event(id_, "broadcast",
                       {{"kind", "new"},
                        {"digest", trajectory_digest(msg.trajectory)}});
        ++generation_;
        set_phase(host, Phase::DelayChecking);
        host.schedule_timer(id_, TimerKind::DelayCheckEnd, now + cfg_.delta_dc,
                            generation_);
        // Entry check covers anything that arrived during Check.
        if (store_conflict(*candidate_, t_switch_)) {
          delay_check_fail(host, "delay-check");
        }
      } else {
        ++generation_;
        set_phase(host, Phase::Rechecking);
        host.schedule_timer(id_, TimerKind::RecheckEnd,
                            now + cfg_.recheck_duration, generation_);
      }
      return;
    }
    case TimerKind::DelayCheckEnd: {
      if (phase_ != Phase::DelayChecking) return;
      if (now > t_switch_ + 1e-12) {
        delay_check_fail(host, "stale-candidate");
        return;
      }
      commit_candidate(host);
      return;
    }
    case TimerKind::RecheckEnd: {
      if (phase_ != Phase::Rechecking) return;
      if (arrivals_during_check_ > 0) {
        host.log_event(id_, "discard", {{"reason", "recheck"}});
        go_idle_and_restart(host);
        return;
      }
      if (now > t_switch_ + 1e-12) {
        host.log_event(id_, "discard", {{"reason", "stale-candidate"}});
        go_idle_and_restart(host);
        return;
      }
      commit_candidate(host);
      return;
    }
    default:
      return;
  }
}

void Agent::on_message(ProtocolHost& host, const Message& msg) {
  const bool accepted = store_.apply(msg);
  host.log_event(id_, "receive",
                 {{"from", msg.sender},
                  {"kind", msg.kind == MsgKind::New ? "new" : "committed"},
                  {"accepted", accepted},
                  {"digest", trajectory_digest(msg.trajectory)}});
  if (phase_ == Phase::Checking) {
    ++arrivals_during_check_;
  }
  if (accepted && phase_ == Phase::DelayChecking && candidate_) {
    // Re-check only against the store delta; everything else already passed.
    if (conflicts_with(*candidate_, msg.trajectory, t_switch_)) {
      delay_check_fail(host, "delay-check");
    }
  }
}

}  // namespace rmader
