#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "rmader/geometry.hpp"
#include "rmader/trajectory.hpp"

namespace rmader {

struct PlannerConfig {
  int num_segments = 6;
  double horizon_min = 1.0;   // s, lower clip of the planning horizon
  double horizon_max = 4.0;   // s, upper clip
  double w_goal = 1e7;        // soft terminal-position weight
  double plane_margin = 1e-9; // strictness pad on plane rows
  /// Extra shell on the pairwise box when fixing planes, so candidates keep
  /// clearance that the (unshelled) conservative checker accepts.
  double plane_inflation_margin = 0.1;
  double limit_pad_rel = 1e-7;// relative pad on dynamic-limit rows
  double kkt_tolerance = 1e-6;
  int max_qp_iterations = 0;  // 0 = solver default
};

struct PlanRequest {
  StateSample start;       // taken from the committed trajectory at t_switch
  Vec3 goal = Vec3::Zero();
  double t_switch = 0.0;   // absolute start time of the new trajectory
  int num_segments = 6;
  double segment_duration = 0.5;
  DynamicLimits limits;
  BoundaryBox box;         // pairwise inflation for plane construction
  std::vector<std::pair<int, Trajectory>> constraints;  // (peer id, trajectory)
  /// Plane reference used when the straight-line guess already intersects a
  /// peer hull (e.g. the goal is momentarily blocked); typically the
  /// committed future path. Without it such requests are infeasible.
  std::optional<Trajectory> fallback_reference;
  PlannerConfig config;
};

struct PlaneConstraintRecord {
  int segment_index;
  int peer_id;
  SeparatingPlane plane;
};

struct PlanResult {
  Trajectory trajectory;
  std::vector<PlaneConstraintRecord> planes_used;
  int solver_iterations = 0;
  double kkt_residual = 0.0;
};

/// Straight-line constant-speed reference toward the goal, clipped to v_max,
/// with the initial velocity blended over the first segment. Used only to fix
/// the separating planes; C1 but not generally C2.
Trajectory initial_guess(const PlanRequest& req);

/// Solves the fixed-plane convex program: free Bezier control points of all
/// segments (start state pinned, terminal velocity/acceleration pinned to
/// zero), objective = jerk integral + w_goal * |endpoint - goal|^2, subject
/// to per-axis derivative bounds and, per (segment, overlapping peer piece),
/// all four control points on this agent's side of the fixed plane.
/// Returns nullopt when no feasible trajectory exists (a normal outcome: the
/// caller keeps flying its committed trajectory).
std::optional<PlanResult> plan(const PlanRequest& req);

}  // namespace rmader
