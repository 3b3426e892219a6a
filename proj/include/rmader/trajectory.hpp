#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace rmader {

using Vec3 = Eigen::Vector3d;

/// One sampled kinematic state along a trajectory.
struct StateSample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
};

/// Per-axis dynamic bounds. All strictly positive.
struct DynamicLimits {
  double v_max = 10.0;
  double a_max = 20.0;
  double j_max = 30.0;

  bool valid() const { return v_max > 0.0 && a_max > 0.0 && j_max > 0.0; }
};

/// Cubic Bezier segment over the absolute time interval [t0, t1].
struct PolySegment {
  double t0 = 0.0;
  double t1 = 0.0;
  std::array<Vec3, 4> cps{};

  double duration() const { return t1 - t0; }

  Vec3 position_at(double t) const;
  StateSample state_at(double t) const;

  // Control points of the derivative curves (scaled to real time units).
  std::array<Vec3, 3> velocity_control_points() const;
  std::array<Vec3, 2> acceleration_control_points() const;
  Vec3 jerk() const;  // constant over the segment

  /// Restriction of the curve to [ta, tb] as a new cubic segment (blossoming).
  PolySegment subsegment(double ta, double tb) const;
};

/// Piecewise cubic Bezier trajectory with absolute time stamps.
/// Past the last segment the trajectory holds its final position forever
/// (zero velocity/acceleration), so it stays executable during arbitrarily
/// long delay checks.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<PolySegment> segments);

  static Trajectory constant(const Vec3& position, double t0, double t1);

  const std::vector<PolySegment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }
  double start_time() const;
  double end_time() const;
  Vec3 terminal_hold() const;

  /// Kinematic state at time t. Terminal-hold semantics past end_time();
  /// querying before start_time() is an error.
  StateSample state_at(double t) const;
  Vec3 position_at(double t) const { return state_at(t).position; }

  /// True if position/velocity/acceleration match at every junction to tol.
  bool is_c2(double tol = 1e-9) const;

  /// Segments covering exactly [a, b]; pieces past the end become constant
  /// holds. Requires start_time() <= a < b.
  std::vector<PolySegment> restricted(double a, double b) const;

 private:
  std::vector<PolySegment> segments_;
  size_t segment_index_for(double t) const;  // requires start <= t < end
};

struct SmoothnessIntegrals {
  double accel_integral = 0.0;  // m^2/s^3
  double jerk_integral = 0.0;   // m^2/s^5
};

/// Closed-form time integrals of |a(t)|^2 and |j(t)|^2 over the trajectory.
SmoothnessIntegrals smoothness_integrals(const Trajectory& traj);

/// Number of maximal intervals, strictly before the terminal hold, on which
/// |v(t)| < v_stop for at least t_min_stop. Detected on a sampling grid.
int count_stops(const Trajectory& traj, double v_stop, double t_min_stop,
                double grid_dt = 0.01);

/// Sufficient per-axis limit check via the convex hull of the derivative
/// control points. Conservative: true implies the continuous curve is within
/// limits; false may be a false alarm.
bool check_limits(const Trajectory& traj, const DynamicLimits& limits);

void to_json(nlohmann::json& j, const Trajectory& traj);
void from_json(const nlohmann::json& j, Trajectory& traj);

}  // namespace rmader
