#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rmader/trajectory.hpp"

namespace rmader {

/// Axis-aligned collision-safety box around one agent, as half extents.
/// hz may exceed hx/hy (downwash inflation).
struct BoundaryBox {
  double hx = 0.4;
  double hy = 0.4;
  double hz = 0.75;

  bool valid() const { return hx > 0.0 && hy > 0.0 && hz > 0.0; }
};

/// Half-space n.x <= d with unit normal.
struct SeparatingPlane {
  Vec3 normal = Vec3::UnitX();
  double offset = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

/// Two identical boxes overlap iff the center offset is inside the Minkowski
/// sum, i.e. strictly less than the full extent per axis.
bool boxes_collide(const Vec3& p1, const Vec3& p2, const BoundaryBox& box);

/// Closest points between the convex hulls of two point sets (GJK).
/// Returns nullopt when the hulls intersect or touch.
struct ClosestPair {
  Vec3 on_a;
  Vec3 on_b;
  double distance;
};
std::optional<ClosestPair> closest_points(std::span<const Vec3> hull_a,
                                          std::span<const Vec3> hull_b);

/// Maximum-margin plane between two disjoint convex hulls: through the
/// midpoint of the closest-point pair, normal from A toward B. Points of A
/// satisfy n.x < d, points of B satisfy n.x > d. nullopt if the hulls
/// intersect.
std::optional<SeparatingPlane> compute_separating_plane(
    std::span<const Vec3> hull_a, std::span<const Vec3> hull_b);

/// One time slice of a trajectory: the Bezier control points of the curve
/// restricted to [t0, t1] (a single point repeated when inside the terminal
/// hold).
struct TrajectoryPiece {
  double t0;
  double t1;
  std::array<Vec3, 4> cps;
};

/// Slices traj over [a, b] at its own segment boundaries (terminal hold
/// included as a final constant piece).
std::vector<TrajectoryPiece> collect_pieces(const Trajectory& traj, double a,
                                            double b);

/// Corners of the axis-aligned bounding box of the control points, expanded
/// by the full pairwise Minkowski box (2*h per axis). 8 points.
std::array<Vec3, 8> inflate_piece(const std::array<Vec3, 4>& cps,
                                  const BoundaryBox& box);

/// Conservative continuous-time pairwise check over [t_start, t_end]:
/// partitions the window at the union of both trajectories' segment
/// boundaries and requires hull separation on every sub-interval. False
/// guarantees no collision; true may be a false alarm.
bool check_pair_collision(const Trajectory& traj_a, const Trajectory& traj_b,
                          const BoundaryBox& box, double t_start, double t_end);

/// Ground-truth style dense sampling check: true iff the boxes overlap at any
/// sample t_start, t_start+dt, ..., t_end.
bool sampling_oracle_collision(const Trajectory& traj_a,
                               const Trajectory& traj_b, const BoundaryBox& box,
                               double t_start, double t_end, double dt);

}  // namespace rmader
