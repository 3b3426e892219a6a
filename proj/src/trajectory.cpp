#include "rmader/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmader {

namespace {

Vec3 lerp(const Vec3& a, const Vec3& b, double u) { return a + u * (b - a); }

/// Blossom of the cubic with parameter arguments (x, y, z) in [0,1].
Vec3 blossom(const std::array<Vec3, 4>& b, double x, double y, double z) {
  const Vec3 p0 = lerp(b[0], b[1], x);
  const Vec3 p1 = lerp(b[1], b[2], x);
  const Vec3 p2 = lerp(b[2], b[3], x);
  const Vec3 q0 = lerp(p0, p1, y);
  const Vec3 q1 = lerp(p1, p2, y);
  return lerp(q0, q1, z);
}

}  // namespace

Vec3 PolySegment::position_at(double t) const {
  const double u = (t - t0) / duration();
  return blossom(cps, u, u, u);
}

StateSample PolySegment::state_at(double t) const {
  const double dt = duration();
  const double u = (t - t0) / dt;
  const Vec3 p0 = lerp(cps[0], cps[1], u);
  const Vec3 p1 = lerp(cps[1], cps[2], u);
  const Vec3 p2 = lerp(cps[2], cps[3], u);
  const Vec3 q0 = lerp(p0, p1, u);
  const Vec3 q1 = lerp(p1, p2, u);
  StateSample s;
  s.t = t;
  s.position = lerp(q0, q1, u);
  s.velocity = 3.0 * (q1 - q0) / dt;
  s.acceleration = 6.0 * (p2 - 2.0 * p1 + p0) / (dt * dt);
  return s;
}

std::array<Vec3, 3> PolySegment::velocity_control_points() const {
  const double k = 3.0 / duration();
  return {k * (cps[1] - cps[0]), k * (cps[2] - cps[1]), k * (cps[3] - cps[2])};
}

std::array<Vec3, 2> PolySegment::acceleration_control_points() const {
  const double k = 6.0 / (duration() * duration());
  return {k * (cps[2] - 2.0 * cps[1] + cps[0]),
          k * (cps[3] - 2.0 * cps[2] + cps[1])};
}

Vec3 PolySegment::jerk() const {
  const double dt = duration();
  return 6.0 / (dt * dt * dt) * (cps[3] - 3.0 * cps[2] + 3.0 * cps[1] - cps[0]);
}

PolySegment PolySegment::subsegment(double ta, double tb) const {
  const double dt = duration();
  const double ua = (ta - t0) / dt;
  const double ub = (tb - t0) / dt;
  PolySegment out;
  out.t0 = ta;
  out.t1 = tb;
  out.cps = {blossom(cps, ua, ua, ua), blossom(cps, ua, ua, ub),
             blossom(cps, ua, ub, ub), blossom(cps, ub, ub, ub)};
  return out;
}

Trajectory::Trajectory(std::vector<PolySegment> segments)
    : segments_(std::move(segments)) {
  if (segments_.empty()) throw std::invalid_argument("trajectory has no segments");
  for (size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (!(s.t1 > s.t0)) throw std::invalid_argument("segment duration must be positive");
    for (const auto& p : s.cps) {
      if (!p.allFinite()) throw std::invalid_argument("non-finite control point");
    }
    if (i > 0 && std::abs(segments_[i - 1].t1 - s.t0) > 1e-9) {
      throw std::invalid_argument("segments not contiguous in time");
    }
  }
}

Trajectory Trajectory::constant(const Vec3& position, double t0, double t1) {
  PolySegment s;
  s.t0 = t0;
  s.t1 = t1;
  s.cps = {position, position, position, position};
  return Trajectory({s});
}

double Trajectory::start_time() const { return segments_.front().t0; }
double Trajectory::end_time() const { return segments_.back().t1; }
Vec3 Trajectory::terminal_hold() const { return segments_.back().cps[3]; }

size_t Trajectory::segment_index_for(double t) const {
  size_t lo = 0, hi = segments_.size() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi + 1) / 2;
    if (segments_[mid].t0 <= t) lo = mid; else hi = mid - 1;
  }
  return lo;
}

StateSample Trajectory::state_at(double t) const {
  if (segments_.empty()) throw std::logic_error("empty trajectory");
  if (t < start_time() - 1e-12) {
    throw std::out_of_range("query before trajectory start");
  }
  if (t >= end_time()) {
    StateSample s;
    s.t = t;
    s.position = terminal_hold();
    return s;
  }
  const double tc = std::max(t, start_time());
  return segments_[segment_index_for(tc)].state_at(tc);
}

bool Trajectory::is_c2(double tol) const {
  for (size_t i = 0; i + 1 < segments_.size(); ++i) {
    const StateSample a = segments_[i].state_at(segments_[i].t1);
    const StateSample b = segments_[i + 1].state_at(segments_[i + 1].t0);
    if ((a.position - b.position).lpNorm<Eigen::Infinity>() > tol) return false;
    if ((a.velocity - b.velocity).lpNorm<Eigen::Infinity>() > tol) return false;
    if ((a.acceleration - b.acceleration).lpNorm<Eigen::Infinity>() > tol) return false;
  }
  return true;
}

std::vector<PolySegment> Trajectory::restricted(double a, double b) const {
  if (!(a < b)) throw std::invalid_argument("restricted: empty interval");
  if (a < start_time() - 1e-12) throw std::out_of_range("query before trajectory start");
  std::vector<PolySegment> out;
  for (const auto& s : segments_) {
    const double lo = std::max(a, s.t0);
    const double hi = std::min(b, s.t1);
    if (hi - lo > 1e-12) {
      out.push_back(s.subsegment(lo, hi));
      // keep junctions exact
      if (out.size() > 1) out.back().t0 = out[out.size() - 2].t1;
    }
  }
  const double covered = out.empty() ? a : out.back().t1;
  if (b - covered > 1e-12) {  // tail inside the terminal hold
    PolySegment hold;
    hold.t0 = covered;
    hold.t1 = b;
    const Vec3 p = terminal_hold();
    hold.cps = {p, p, p, p};
    out.push_back(hold);
  } else if (!out.empty()) {
    out.back().t1 = b;
  }
  if (!out.empty()) out.front().t0 = a;
  return out;
}

SmoothnessIntegrals smoothness_integrals(const Trajectory& traj) {
  SmoothnessIntegrals out;
  for (const auto& s : traj.segments()) {
    const double dt = s.duration();
    const auto acc = s.acceleration_control_points();
    // a(u) is linear in u, so |a|^2 integrates in closed form.
    out.accel_integral +=
        dt / 3.0 *
        (acc[0].squaredNorm() + acc[0].dot(acc[1]) + acc[1].squaredNorm());
    out.jerk_integral += dt * s.jerk().squaredNorm();
  }
  return out;
}

int count_stops(const Trajectory& traj, double v_stop, double t_min_stop,
                double grid_dt) {
  if (v_stop <= 0.0 || t_min_stop <= 0.0 || grid_dt <= 0.0) {
    throw std::invalid_argument("count_stops: thresholds must be positive");
  }
  const double t0 = traj.start_time();
  const double t_end = traj.end_time();
  const long n = static_cast<long>(std::floor((t_end - t0) / grid_dt + 1e-9));
  if (n < 0) return 0;

  // A maximal low-speed run counts only when strictly interior: runs that
  // adjoin the terminal hold are the arrival hover, runs that start at the
  // first sample are the pre-departure wait, and neither is a stop en route.
  int stops = 0;
  long run_start = -1;
  for (long k = 0; k <= n; ++k) {
    const double t = std::min(t0 + static_cast<double>(k) * grid_dt, t_end);
    const bool slow = traj.state_at(t).velocity.norm() < v_stop;
    if (slow && run_start < 0) run_start = k;
    if ((!slow || k == n) && run_start >= 0) {
      const long run_end = slow ? k : k - 1;
      const bool interior = (run_start > 0) && (run_end < n);
      const double span = static_cast<double>(run_end - run_start) * grid_dt;
      if (interior && span >= t_min_stop) ++stops;
      run_start = -1;
    }
  }
  return stops;
}

bool check_limits(const Trajectory& traj, const DynamicLimits& limits) {
  for (const auto& s : traj.segments()) {
    for (const auto& v : s.velocity_control_points()) {
      if (v.lpNorm<Eigen::Infinity>() > limits.v_max) return false;
    }
    for (const auto& a : s.acceleration_control_points()) {
      if (a.lpNorm<Eigen::Infinity>() > limits.a_max) return false;
    }
    if (s.jerk().lpNorm<Eigen::Infinity>() > limits.j_max) return false;
  }
  return true;
}

void to_json(nlohmann::json& j, const Trajectory& traj) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : traj.segments()) {
    nlohmann::json cps = nlohmann::json::array();
    for (const auto& p : s.cps) cps.push_back({p.x(), p.y(), p.z()});
    segs.push_back({{"t0", s.t0}, {"t1", s.t1}, {"cps", cps}});
  }
  j = nlohmann::json{{"segments", segs}};
}

void from_json(const nlohmann::json& j, Trajectory& traj) {
  std::vector<PolySegment> segs;
  for (const auto& js : j.at("segments")) {
    PolySegment s;
    s.t0 = js.at("t0").get<double>();
    s.t1 = js.at("t1").get<double>();
    const auto& cps = js.at("cps");
    if (cps.size() != 4) throw std::invalid_argument("segment needs 4 control points");
    for (int i = 0; i < 4; ++i) {
      s.cps[i] = Vec3(cps[i][0].get<double>(), cps[i][1].get<double>(),
                      cps[i][2].get<double>());
    }
    segs.push_back(s);
  }
  traj = Trajectory(std::move(segs));
}

}  // namespace rmader
