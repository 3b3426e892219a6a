#include "rmader/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rmader/rng.hpp"

namespace rmader {

double JitterConfig::upper_bound() const {
  switch (kind) {
    case Kind::None: return 0.0;
    case Kind::Uniform: return b;
    case Kind::Exponential: return cap;
  }
  return 0.0;
}

double DelayModel::sample(std::mt19937_64& gen) const {
  double j = 0.0;
  switch (jitter.kind) {
    case JitterConfig::Kind::None:
      break;
    case JitterConfig::Kind::Uniform:
      j = jitter.a + (jitter.b - jitter.a) * uniform01(gen);
      break;
    case JitterConfig::Kind::Exponential:
      j = std::min(-jitter.mean * std::log1p(-uniform01(gen)), jitter.cap);
      break;
  }
  return delta_introd + j;
}

double PlanDurationConfig::sample(std::mt19937_64& gen) const {
  if (kind == Kind::Fixed) return value;
  return a + (b - a) * uniform01(gen);
}

double PlanDurationConfig::mean() const {
  return kind == Kind::Fixed ? value : 0.5 * (a + b);
}

double DelayStats::max() const {
  return samples_.empty() ? 0.0 : *std::max_element(samples_.begin(), samples_.end());
}

double DelayStats::min() const {
  return samples_.empty() ? 0.0 : *std::min_element(samples_.begin(), samples_.end());
}

double DelayStats::percentile(double p) const {
  if (samples_.empty()) throw std::runtime_error("percentile of empty delay record");
  std::vector<double> sorted = samples_;
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  return sorted[std::min(sorted.size() - 1, std::max<std::size_t>(rank, 1) - 1)];
}

double Scenario::agent_start_time(std::size_t i) const {
  if (agents[i].start_time) return *agents[i].start_time;
  return static_cast<double>(i) * protocol.startup_spacing;
}

double Scenario::resolved_latency_budget() const {
  if (protocol.latency_budget > 0.0) return protocol.latency_budget;
  const double dc_eff = (mode == Mode::Rmader) ? delta_dc : 0.0;
  return 1.5 * (dc_eff + plan_duration.mean()) + protocol.check_duration +
         protocol.recheck_duration;
}

void Scenario::validate() const {
  if (agents.empty()) throw std::invalid_argument("scenario: no agents");
  if (!limits.valid()) throw std::invalid_argument("scenario: invalid limits");
  if (!box.valid()) throw std::invalid_argument("scenario: invalid box");
  if (delta_dc < 0.0) throw std::invalid_argument("scenario: delta_dc < 0");
  if (delay.delta_introd < 0.0) throw std::invalid_argument("scenario: delta_introd < 0");
  if (plan_duration.min() <= 0.0) {
    throw std::invalid_argument("scenario: plan duration must be positive");
  }
  if (sample_dt <= 0.0 || horizon <= 0.0) {
    throw std::invalid_argument("scenario: bad horizon/sample_dt");
  }
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 vec_from(const nlohmann::json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

}  // namespace

void to_json(nlohmann::json& j, const Scenario& s) {
  nlohmann::json agents = nlohmann::json::array();
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    nlohmann::json a = {{"start", vec_json(s.agents[i].start)},
                        {"goal", vec_json(s.agents[i].goal)}};
    if (s.agents[i].start_time) a["start_time"] = *s.agents[i].start_time;
    agents.push_back(a);
  }
  nlohmann::json jitter;
  switch (s.delay.jitter.kind) {
    case JitterConfig::Kind::None:
      jitter = {{"kind", "none"}};
      break;
    case JitterConfig::Kind::Uniform:
      jitter = {{"kind", "uniform"}, {"a", s.delay.jitter.a}, {"b", s.delay.jitter.b}};
      break;
    case JitterConfig::Kind::Exponential:
      jitter = {{"kind", "exponential"},
                {"mean", s.delay.jitter.mean},
                {"cap", s.delay.jitter.cap}};
      break;
  }
  nlohmann::json plan_duration;
  if (s.plan_duration.kind == PlanDurationConfig::Kind::Fixed) {
    plan_duration = {{"kind", "fixed"}, {"value", s.plan_duration.value}};
  } else {
    plan_duration = {{"kind", "uniform"}, {"a", s.plan_duration.a}, {"b", s.plan_duration.b}};
  }
  j = nlohmann::json{
      {"agents", agents},
      {"mode", s.mode == Mode::Rmader ? "rmader" : "mader"},
      {"delta_dc", s.delta_dc},
      {"delay", {{"delta_introd", s.delay.delta_introd}, {"jitter", jitter}}},
      {"plan_duration", plan_duration},
      {"limits", {{"v_max", s.limits.v_max}, {"a_max", s.limits.a_max}, {"j_max", s.limits.j_max}}},
      {"box", {{"hx", s.box.hx}, {"hy", s.box.hy}, {"hz", s.box.hz}}},
      {"seed", s.seed},
      {"horizon", s.horizon},
      {"sample_dt", s.sample_dt},
      {"initial_broadcast", s.initial_broadcast},
      {"protocol",
       {{"check_duration", s.protocol.check_duration},
        {"recheck_duration", s.protocol.recheck_duration},
        {"latency_budget", s.protocol.latency_budget},
        {"goal_tolerance", s.protocol.goal_tolerance},
        {"goal_speed_tolerance", s.protocol.goal_speed_tolerance},
        {"startup_spacing", s.protocol.startup_spacing},
        {"stop_speed", s.protocol.stop_speed},
        {"stop_min_duration", s.protocol.stop_min_duration},
        {"stop_grid", s.protocol.stop_grid},
        {"check_inflation", s.protocol.check_inflation},
        {"min_progress", s.protocol.min_progress},
        {"progress_backoff", s.protocol.progress_backoff},
        {"verify_commits", s.protocol.verify_commits}}},
      {"planner",
       {{"num_segments", s.planner.num_segments},
        {"horizon_min", s.planner.horizon_min},
        {"horizon_max", s.planner.horizon_max},
        {"w_goal", s.planner.w_goal},
        {"plane_inflation_margin", s.planner.plane_inflation_margin},
        {"kkt_tolerance", s.planner.kkt_tolerance},
        {"max_qp_iterations", s.planner.max_qp_iterations}}}};
}

void from_json(const nlohmann::json& j, Scenario& s) {
  s = Scenario{};
  for (const auto& a : j.at("agents")) {
    AgentSpec spec;
    spec.start = vec_from(a.at("start"));
    spec.goal = vec_from(a.at("goal"));
    if (a.contains("start_time")) spec.start_time = a["start_time"].get<double>();
    s.agents.push_back(spec);
  }
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "rmader") s.mode = Mode::Rmader;
  else if (mode == "mader") s.mode = Mode::Mader;
  else throw std::invalid_argument("scenario: unknown mode " + mode);
  s.delta_dc = j.value("delta_dc", s.delta_dc);
  if (j.contains("delay")) {
    const auto& d = j["delay"];
    s.delay.delta_introd = d.value("delta_introd", 0.0);
    if (d.contains("jitter")) {
      const auto& jt = d["jitter"];
      const std::string kind = jt.value("kind", "uniform");
      if (kind == "none") {
        s.delay.jitter.kind = JitterConfig::Kind::None;
      } else if (kind == "uniform") {
        s.delay.jitter.kind = JitterConfig::Kind::Uniform;
        s.delay.jitter.a = jt.value("a", 0.0);
        s.delay.jitter.b = jt.value("b", 0.03);
      } else if (kind == "exponential") {
        s.delay.jitter.kind = JitterConfig::Kind::Exponential;
        s.delay.jitter.mean = jt.at("mean").get<double>();
        s.delay.jitter.cap = jt.at("cap").get<double>();
      } else {
        throw std::invalid_argument("scenario: unknown jitter kind " + kind);
      }
    }
  }
  if (j.contains("plan_duration")) {
    const auto& p = j["plan_duration"];
    const std::string kind = p.value("kind", "uniform");
    if (kind == "fixed") {
      s.plan_duration.kind = PlanDurationConfig::Kind::Fixed;
      s.plan_duration.value = p.at("value").get<double>();
    } else {
      s.plan_duration.kind = PlanDurationConfig::Kind::Uniform;
      s.plan_duration.a = p.value("a", 0.015);
      s.plan_duration.b = p.value("b", 0.06);
    }
  }
  if (j.contains("limits")) {
    s.limits.v_max = j["limits"].value("v_max", 10.0);
    s.limits.a_max = j["limits"].value("a_max", 20.0);
    s.limits.j_max = j["limits"].value("j_max", 30.0);
  }
  if (j.contains("box")) {
    s.box.hx = j["box"].value("hx", 0.4);
    s.box.hy = j["box"].value("hy", 0.4);
    s.box.hz = j["box"].value("hz", 0.75);
  }
  s.seed = j.value("seed", std::uint64_t{1});
  s.horizon = j.value("horizon", 60.0);
  s.sample_dt = j.value("sample_dt", 0.01);
  s.initial_broadcast = j.value("initial_broadcast", true);
  if (j.contains("protocol")) {
    const auto& p = j["protocol"];
    s.protocol.check_duration = p.value("check_duration", s.protocol.check_duration);
    s.protocol.recheck_duration = p.value("recheck_duration", s.protocol.recheck_duration);
    s.protocol.latency_budget = p.value("latency_budget", 0.0);
    s.protocol.goal_tolerance = p.value("goal_tolerance", s.protocol.goal_tolerance);
    s.protocol.goal_speed_tolerance =
        p.value("goal_speed_tolerance", s.protocol.goal_speed_tolerance);
    s.protocol.startup_spacing = p.value("startup_spacing", s.protocol.startup_spacing);
    s.protocol.stop_speed = p.value("stop_speed", s.protocol.stop_speed);
    s.protocol.stop_min_duration = p.value("stop_min_duration", s.protocol.stop_min_duration);
    s.protocol.stop_grid = p.value("stop_grid", s.protocol.stop_grid);
    s.protocol.check_inflation = p.value("check_inflation", s.protocol.check_inflation);
    s.protocol.min_progress = p.value("min_progress", s.protocol.min_progress);
    s.protocol.progress_backoff = p.value("progress_backoff", s.protocol.progress_backoff);
    s.protocol.verify_commits = p.value("verify_commits", true);
  }
  if (j.contains("planner")) {
    const auto& p = j["planner"];
    s.planner.num_segments = p.value("num_segments", s.planner.num_segments);
    s.planner.horizon_min = p.value("horizon_min", s.planner.horizon_min);
    s.planner.horizon_max = p.value("horizon_max", s.planner.horizon_max);
    s.planner.w_goal = p.value("w_goal", s.planner.w_goal);
    s.planner.plane_inflation_margin =
        p.value("plane_inflation_margin", s.planner.plane_inflation_margin);
    s.planner.kkt_tolerance = p.value("kkt_tolerance", s.planner.kkt_tolerance);
    s.planner.max_qp_iterations = p.value("max_qp_iterations", 0);
  }
}

Simulation::Simulation(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  std::uint64_t seed_state = scenario_.seed;
  delay_rng_.seed(splitmix64(seed_state));
  plan_rng_.seed(splitmix64(seed_state));

  AgentConfig base;
  base.mode = scenario_.mode;
  base.delta_dc = scenario_.delta_dc;
  base.box = scenario_.box;
  base.limits = scenario_.limits;
  base.latency_budget = scenario_.resolved_latency_budget();
  base.check_duration = scenario_.protocol.check_duration;
  base.recheck_duration = scenario_.protocol.recheck_duration;
  base.goal_tolerance = scenario_.protocol.goal_tolerance;
  base.check_inflation = scenario_.protocol.check_inflation;
  base.min_progress = scenario_.protocol.min_progress;
  base.progress_backoff = scenario_.protocol.progress_backoff;
  base.verify_commits = scenario_.protocol.verify_commits;
  base.planner = scenario_.planner;
  for (std::size_t i = 0; i < scenario_.agents.size(); ++i) {
    AgentConfig cfg = base;
    cfg.goal = scenario_.agents[i].goal;
    agents_.push_back(std::make_unique<Agent>(static_cast<int>(i), cfg,
                                              scenario_.agents[i].start));
  }
  reached_.assign(agents_.size(), false);
  reach_time_.assign(agents_.size(), 0.0);
}

void Simulation::push_event(Event e) {
  e.seq = next_seq_++;
  queue_.push(std::move(e));
}

void Simulation::schedule_timer(int agent, TimerKind kind, double fire_time,
                                std::uint64_t generation) {
  Event e;
  e.fire_time = fire_time;
  e.kind = Event::Kind::Timer;
  e.agent = agent;
  e.generation = generation;
  e.timer_kind = kind;
  push_event(std::move(e));
}

void Simulation::schedule_plan(int agent, const PlanRequest& request,
                               std::uint64_t generation) {
  const double duration = scenario_.plan_duration.sample(plan_rng_);
  Event e;
  e.fire_time = now_ + duration;
  e.kind = Event::Kind::PlanDone;
  e.agent = agent;
  e.generation = generation;
  e.plan = plan(request);  // pure function of the snapshot taken now
  push_event(std::move(e));
}

void Simulation::broadcast(const Message& msg) {
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (static_cast<int>(i) == msg.sender) continue;
    const double delay = scenario_.delay.sample(delay_rng_);
    delay_stats_.record(delay);
    Event e;
    e.fire_time = msg.send_time + delay;
    e.kind = Event::Kind::Delivery;
    e.agent = static_cast<int>(i);
    e.message = msg;
    push_event(std::move(e));
  }
}

void Simulation::log_event(int agent, std::string_view event,
                           nlohmann::json payload) {
  nlohmann::json line = {{"t", now_},
                         {"agent", agent},
                         {"event", std::string(event)},
                         {"payload", std::move(payload)}};
  log_lines_.push_back(line.dump());
}

void Simulation::monitor_tick() {
  const int n = static_cast<int>(agents_.size());
  std::vector<StateSample> states(n);
  for (int i = 0; i < n; ++i) states[i] = agents_[i]->executed_state(now_);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (boxes_collide(states[i].position, states[j].position, scenario_.box)) {
        if (collision_pairs_.insert({i, j}).second) {
          log_event(-1, "collision", {{"a", i}, {"b", j}});
        }
      }
    }
  }
  bool all = true;
  for (int i = 0; i < n; ++i) {
    if (!reached_[i]) {
      const bool close =
          (states[i].position - scenario_.agents[i].goal).norm() <=
          scenario_.protocol.goal_tolerance;
      const bool slow =
          states[i].velocity.norm() < scenario_.protocol.goal_speed_tolerance;
      if (close && slow && now_ >= scenario_.agent_start_time(i)) {
        reached_[i] = true;
        reach_time_[i] = now_;
        log_event(i, "goal-reached", {{"travel_time", now_ - scenario_.agent_start_time(i)}});
      }
    }
    all = all && reached_[i];
  }
  all_reached_ = all;
}

Trajectory Simulation::executed_trajectory(int i, double a, double b) const {
  const auto& regimes = agents_[i]->regimes();
  std::vector<PolySegment> segs;
  for (std::size_t k = 0; k < regimes.size(); ++k) {
    const double lo = std::max(regimes[k].switch_time, a);
    const double hi =
        (k + 1 < regimes.size()) ? std::min(regimes[k + 1].switch_time, b) : b;
    if (hi - lo > 1e-9) {
      for (const auto& s : regimes[k].trajectory.restricted(lo, hi)) {
        segs.push_back(s);
      }
    }
  }
  // force exact junction stamps across regime boundaries
  for (std::size_t k = 1; k < segs.size(); ++k) segs[k].t0 = segs[k - 1].t1;
  return Trajectory(std::move(segs));
}

RunMetrics Simulation::run() {
  now_ = 0.0;
  if (scenario_.initial_broadcast) {
    for (auto& agent : agents_) {
      const Message msg = agent->initial_commit_message();
      log_event(agent->id(), "broadcast",
                {{"kind", "committed"}, {"digest", trajectory_digest(msg.trajectory)}});
      broadcast(msg);
    }
  }
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    schedule_timer(static_cast<int>(i), TimerKind::IterationStart,
                   scenario_.agent_start_time(i), agents_[i]->generation());
  }
  {
    Event tick;
    tick.kind = Event::Kind::MetricTick;
    tick.fire_time = 0.0;
    push_event(std::move(tick));
  }

  while (!queue_.empty()) {
    const Event e = queue_.top();
    if (e.fire_time > scenario_.horizon) break;
    queue_.pop();
    if (e.fire_time < now_ - 1e-12) throw std::logic_error("event queue not monotone");
    now_ = std::max(now_, e.fire_time);
    ++events_processed_;
    switch (e.kind) {
      case Event::Kind::Delivery:
        agents_[e.agent]->on_message(*this, e.message);
        break;
      case Event::Kind::Timer:
        agents_[e.agent]->on_timer(*this, e.timer_kind, e.generation);
        break;
      case Event::Kind::PlanDone:
        agents_[e.agent]->on_plan_complete(*this, e.generation, e.plan);
        break;
      case Event::Kind::MetricTick: {
        monitor_tick();
        if (all_reached_) break;
        if (now_ + scenario_.sample_dt <= scenario_.horizon + 1e-12) {
          Event next;
          next.kind = Event::Kind::MetricTick;
          next.fire_time = now_ + scenario_.sample_dt;
          push_event(std::move(next));
        }
        break;
      }
    }
    if (all_reached_) break;
  }
  if (!all_reached_ && queue_.empty() && now_ < scenario_.horizon - scenario_.sample_dt) {
    throw std::runtime_error("deadlocked scenario");
  }

  RunMetrics out;
  out.end_time = now_;
  out.events_processed = events_processed_;
  out.collision_pairs.assign(collision_pairs_.begin(), collision_pairs_.end());
  out.delay_samples = delay_stats_.samples();
  out.delay_max_bound = scenario_.delay.delta_max();
  out.delta_introd = scenario_.delay.delta_introd;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    AgentRunMetrics m;
    m.reached = reached_[i];
    const double start = scenario_.agent_start_time(i);
    const double stop = reached_[i] ? reach_time_[i] : scenario_.horizon;
    m.travel_time = std::max(0.0, stop - start);
    if (stop - start > scenario_.protocol.stop_grid) {
      const Trajectory exec = executed_trajectory(static_cast<int>(i), start, stop);
      m.stops = count_stops(exec, scenario_.protocol.stop_speed,
                            scenario_.protocol.stop_min_duration,
                            scenario_.protocol.stop_grid);
      const SmoothnessIntegrals s = smoothness_integrals(exec);
      m.accel_integral = s.accel_integral;
      m.jerk_integral = s.jerk_integral;
    }
    out.agents.push_back(m);
  }
  return out;
}

}  // namespace rmader
