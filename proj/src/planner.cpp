#include "rmader/planner.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rmader/qp.hpp"

namespace rmader {

namespace {

/// Scalar affine expression over the per-axis free variables.
struct Affine {
  Eigen::VectorXd w;
  double c = 0.0;

  Affine() = default;
  Affine(int nvars, double cst) : w(Eigen::VectorXd::Zero(nvars)), c(cst) {}

  static Affine var(int nvars, int i) {
    Affine a(nvars, 0.0);
    a.w(i) = 1.0;
    return a;
  }
  Affine operator+(const Affine& o) const {
    Affine a = *this;
    a.w += o.w;
    a.c += o.c;
    return a;
  }
  Affine operator-(const Affine& o) const {
    Affine a = *this;
    a.w -= o.w;
    a.c -= o.c;
    return a;
  }
  Affine operator*(double k) const {
    Affine a = *this;
    a.w *= k;
    a.c *= k;
    return a;
  }
  /// Replace raw variable `i` by the expression `e` (which must not use `i`).
  void substitute(int i, const Affine& e) {
    const double k = w(i);
    if (k == 0.0) return;
    w(i) = 0.0;
    w += k * e.w;
    c += k * e.c;
  }
};

/// Per-axis affine map from the reduced free variables to all 4N Bezier
/// control points of a C2 spline with pinned initial state and terminal
/// rest. Raw frees are the segment end points; the last two are eliminated
/// by the terminal velocity/acceleration conditions, leaving N-2.
struct AxisMap {
  Eigen::MatrixXd m;   // 4N x (N-2)
  Eigen::VectorXd c0;  // 4N
};

AxisMap build_axis_map(int n_seg, double dt, double p0, double v0, double a0) {
  const int nraw = n_seg;
  std::vector<std::array<Affine, 4>> cp(n_seg);
  cp[0][0] = Affine(nraw, p0);
  cp[0][1] = Affine(nraw, p0 + dt / 3.0 * v0);
  cp[0][2] = cp[0][1] * 2.0 - cp[0][0] + Affine(nraw, a0 * dt * dt / 6.0);
  cp[0][3] = Affine::var(nraw, 0);
  for (int i = 0; i + 1 < n_seg; ++i) {
    cp[i + 1][0] = cp[i][3];
    cp[i + 1][1] = cp[i][3] * 2.0 - cp[i][2];
    cp[i + 1][2] = cp[i][1] - cp[i][2] * 4.0 + cp[i][3] * 4.0;
    cp[i + 1][3] = Affine::var(nraw, i + 1);
  }
  // Terminal rest: c[N-1][1] == c[N-1][2] fixes f_{N-2};
  // c[N-1][3] == c[N-1][2] fixes f_{N-1}.
  const Affine f_n2 = (cp[n_seg - 2][2] * 3.0 - cp[n_seg - 2][1]) * 0.5;
  for (auto& seg : cp) {
    for (auto& e : seg) e.substitute(n_seg - 2, f_n2);
  }
  const Affine f_n1 = cp[n_seg - 1][2];
  for (auto& seg : cp) {
    for (auto& e : seg) e.substitute(n_seg - 1, f_n1);
  }

  const int nfree = n_seg - 2;
  AxisMap map;
  map.m.resize(4 * n_seg, nfree);
  map.c0.resize(4 * n_seg);
  for (int i = 0; i < n_seg; ++i) {
    for (int j = 0; j < 4; ++j) {
      map.m.row(4 * i + j) = cp[i][j].w.head(nfree);
      map.c0(4 * i + j) = cp[i][j].c;
    }
  }
  return map;
}

void validate(const PlanRequest& req) {
  if (req.num_segments < 2) throw std::invalid_argument("plan: num_segments < 2");
  if (!(req.segment_duration > 0.0)) throw std::invalid_argument("plan: bad segment duration");
  if (!req.limits.valid()) throw std::invalid_argument("plan: invalid limits");
  if (!req.box.valid()) throw std::invalid_argument("plan: invalid box");
  if (std::abs(req.start.t - req.t_switch) > 1e-9) {
    throw std::invalid_argument("plan: start state not at t_switch");
  }
  if (!req.goal.allFinite() || !req.start.position.allFinite() ||
      !req.start.velocity.allFinite() || !req.start.acceleration.allFinite()) {
    throw std::invalid_argument("plan: non-finite request");
  }
}

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}
double smoothstep_rate(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return 6.0 * u * (1.0 - u);
}

/// Reference curve used to fix planes. bump = 0 is the plain constant-speed
/// straight line toward the goal. bump != 0 is a two-phase detour: sidestep
/// laterally by `bump` over the first third of the horizon, then advance
/// toward the goal along the offset lane (this handles blockers sitting
/// directly ahead, where a mid-path bump would sweep through them first).
Trajectory guess_trajectory(const PlanRequest& req, double bump) {
  const int n = req.num_segments;
  const double dt = req.segment_duration;
  const double horizon = n * dt;
  const Vec3 delta = req.goal - req.start.position;
  const double dist = delta.norm();

  Vec3 dir = Vec3::Zero();
  double speed = 0.0;
  if (dist > 1e-12) {
    dir = delta / dist;
    const double axis_cap = req.limits.v_max / dir.cwiseAbs().maxCoeff();
    speed = std::min(dist / horizon, axis_cap);
  }
  const double t_reach = speed > 0.0 ? dist / speed : 0.0;

  Vec3 lateral = Vec3::UnitZ().cross(dir);
  if (lateral.norm() < 1e-9) lateral = Vec3::UnitX();
  else lateral.normalize();

  // Detour lane: sidestep over the first third, pass, return over the last
  // third (so planes near the goal do not cut the goal region off).
  const double t_side = horizon / 3.0;
  auto lane_offset = [&](double tau) {
    return smoothstep(tau / t_side) -
           smoothstep((tau - 2.0 * t_side) / t_side);
  };
  auto lane_rate = [&](double tau) {
    return (smoothstep_rate(tau / t_side) -
            smoothstep_rate((tau - 2.0 * t_side) / t_side)) /
           t_side;
  };
  auto pos = [&](double tau) {
    if (bump == 0.0) {
      return Vec3(req.start.position + dir * (speed * std::min(tau, t_reach)));
    }
    const double forward =
        dist * smoothstep(std::max(0.0, tau - t_side) / (horizon - t_side));
    return Vec3(req.start.position + dir * forward +
                lateral * (bump * lane_offset(tau)));
  };
  auto vel = [&](double tau) {
    if (bump == 0.0) {
      return tau < t_reach ? Vec3(dir * speed) : Vec3(Vec3::Zero());
    }
    const double fwd_rate =
        dist * smoothstep_rate(std::max(0.0, tau - t_side) / (horizon - t_side)) /
        (horizon - t_side);
    return Vec3(dir * fwd_rate + lateral * (bump * lane_rate(tau)));
  };

  std::vector<PolySegment> segs(n);
  for (int i = 0; i < n; ++i) {
    const double ta = i * dt, tb = (i + 1) * dt;
    PolySegment& s = segs[i];
    s.t0 = req.t_switch + ta;
    s.t1 = req.t_switch + tb;
    const Vec3 va = (i == 0) ? req.start.velocity : vel(ta);
    s.cps[0] = pos(ta);
    s.cps[1] = s.cps[0] + dt / 3.0 * va;
    s.cps[3] = pos(tb);
    s.cps[2] = s.cps[3] - dt / 3.0 * vel(tb);
  }
  for (int i = 1; i < n; ++i) segs[i].t0 = segs[i - 1].t1;
  return Trajectory(std::move(segs));
}

}  // namespace

Trajectory initial_guess(const PlanRequest& req) {
  validate(req);
  return guess_trajectory(req, 0.0);
}

std::optional<PlanResult> plan(const PlanRequest& req) {
  validate(req);
  const int n = req.num_segments;
  const double dt = req.segment_duration;
  const PlannerConfig& cfg = req.config;

  // Fix separating planes between the reference segment hulls and the
  // box-inflated peer pieces overlapping each segment window.
  BoundaryBox shelled = req.box;
  shelled.hx += 0.5 * cfg.plane_inflation_margin;
  shelled.hy += 0.5 * cfg.plane_inflation_margin;
  shelled.hz += 0.5 * cfg.plane_inflation_margin;

  // Builds the plane set for one reference. Each pair is first separated
  // from the shell-inflated peer hull; when the reference already sits
  // inside the shell (escape situations) the unshelled hull is used, whose
  // max-margin plane still leaves half the true gap. all_shelled reports
  // whether the full shell held everywhere.
  auto build_planes = [&](const Trajectory& reference, bool& all_shelled)
      -> std::optional<std::vector<PlaneConstraintRecord>> {
    std::vector<PlaneConstraintRecord> planes;
    all_shelled = true;
    for (int i = 0; i < n; ++i) {
      const double wa = req.t_switch + i * dt;
      const double wb = req.t_switch + (i + 1) * dt;
      std::vector<Vec3> ref_hull;
      for (const auto& piece : collect_pieces(reference, wa, wb)) {
        ref_hull.insert(ref_hull.end(), piece.cps.begin(), piece.cps.end());
      }
      for (const auto& [peer_id, peer_traj] : req.constraints) {
        const double pa = std::max(wa, peer_traj.start_time());
        if (!(wb - pa > 1e-12)) continue;  // peer not defined yet
        // Already in violation with this peer: no separating plane exists,
        // so constrain against everyone else and escape.
        const double p0 = std::max(req.t_switch, peer_traj.start_time());
        if (boxes_collide(req.start.position, peer_traj.position_at(p0), req.box)) {
          continue;
        }
        for (const auto& piece : collect_pieces(peer_traj, pa, wb)) {
          auto plane =
              compute_separating_plane(ref_hull, inflate_piece(piece.cps, shelled));
          if (!plane) {
            all_shelled = false;
            plane = compute_separating_plane(ref_hull,
                                             inflate_piece(piece.cps, req.box));
          }
          if (!plane) return std::nullopt;  // hulls already intersect
          planes.push_back({i, peer_id, *plane});
        }
      }
    }
    return planes;
  };

  // References in preference order: straight guess, lateral detours (so a
  // dead-center blocker yields sideways planes instead of a frontal press),
  // committed path. The first reference clearing the full shell everywhere
  // wins; otherwise the first that builds at all.
  const double bump_amp = 3.0 * std::max(req.box.hx, req.box.hy);
  std::vector<Trajectory> references;
  references.push_back(guess_trajectory(req, 0.0));
  references.push_back(guess_trajectory(req, bump_amp));
  references.push_back(guess_trajectory(req, -bump_amp));
  if (req.fallback_reference) references.push_back(*req.fallback_reference);

  std::optional<std::vector<PlaneConstraintRecord>> planes_opt;
  for (const Trajectory& ref : references) {
    bool all_shelled = false;
    auto attempt = build_planes(ref, all_shelled);
    if (attempt && all_shelled) {
      planes_opt = std::move(attempt);
      break;
    }
    if (attempt && !planes_opt) planes_opt = std::move(attempt);
  }
  if (!planes_opt) return std::nullopt;
  std::vector<PlaneConstraintRecord> planes = std::move(*planes_opt);

  const int nfree = n - 2;
  const int nv = 3 * nfree;
  std::array<AxisMap, 3> maps;
  for (int ax = 0; ax < 3; ++ax) {
    maps[ax] = build_axis_map(n, dt, req.start.position[ax],
                              req.start.velocity[ax], req.start.acceleration[ax]);
  }

  // Objective: sum_i dt*|jerk_i|^2 + w_goal*|endpoint - goal|^2.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nv, nv);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(nv);
  const double kj = 6.0 / (dt * dt * dt);
  for (int ax = 0; ax < 3; ++ax) {
    const auto& m = maps[ax];
    auto block = [&](int i) { return Eigen::VectorXd(m.m.row(i).transpose()); };
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd g =
          kj * (block(4 * i + 3) - 3.0 * block(4 * i + 2) +
                3.0 * block(4 * i + 1) - block(4 * i));
      const double h = kj * (m.c0(4 * i + 3) - 3.0 * m.c0(4 * i + 2) +
                             3.0 * m.c0(4 * i + 1) - m.c0(4 * i));
      H.block(ax * nfree, ax * nfree, nfree, nfree) += 2.0 * dt * g * g.transpose();
      q.segment(ax * nfree, nfree) += 2.0 * dt * h * g;
    }
    const Eigen::VectorXd me = block(4 * (n - 1) + 3);
    const double e0 = m.c0(4 * (n - 1) + 3) - req.goal[ax];
    H.block(ax * nfree, ax * nfree, nfree, nfree) +=
        2.0 * cfg.w_goal * me * me.transpose();
    q.segment(ax * nfree, nfree) += 2.0 * cfg.w_goal * e0 * me;
  }

  // Inequality rows over the stacked per-axis frees.
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  auto add_row = [&](const Eigen::VectorXd& a, double bnd) {
    rows.push_back(a);
    rhs.push_back(bnd);
  };
  auto add_abs_bound = [&](int ax, const Eigen::VectorXd& g, double h,
                           double bound) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(nv);
    a.segment(ax * nfree, nfree) = g;
    add_row(a, bound - h);
    add_row(-a, bound + h);
  };
  const double vlim = req.limits.v_max * (1.0 - cfg.limit_pad_rel);
  const double alim = req.limits.a_max * (1.0 - cfg.limit_pad_rel);
  const double jlim = req.limits.j_max * (1.0 - cfg.limit_pad_rel);
  const double kv = 3.0 / dt;
  const double ka = 6.0 / (dt * dt);
  for (int ax = 0; ax < 3; ++ax) {
    const auto& m = maps[ax];
    auto g_of = [&](int i) { return Eigen::VectorXd(m.m.row(i).transpose()); };
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) {
        const Eigen::VectorXd g = kv * (g_of(4 * i + j + 1) - g_of(4 * i + j));
        const double h = kv * (m.c0(4 * i + j + 1) - m.c0(4 * i + j));
        add_abs_bound(ax, g, h, vlim);
      }
      for (int j = 0; j < 2; ++j) {
        const Eigen::VectorXd g = ka * (g_of(4 * i + j + 2) -
                                        2.0 * g_of(4 * i + j + 1) + g_of(4 * i + j));
        const double h = ka * (m.c0(4 * i + j + 2) - 2.0 * m.c0(4 * i + j + 1) +
                               m.c0(4 * i + j));
        add_abs_bound(ax, g, h, alim);
      }
      const Eigen::VectorXd g = kj * (g_of(4 * i + 3) - 3.0 * g_of(4 * i + 2) +
                                      3.0 * g_of(4 * i + 1) - g_of(4 * i));
      const double h = kj * (m.c0(4 * i + 3) - 3.0 * m.c0(4 * i + 2) +
                             3.0 * m.c0(4 * i + 1) - m.c0(4 * i));
      add_abs_bound(ax, g, h, jlim);
    }
  }
  for (const auto& pc : planes) {
    for (int j = 0; j < 4; ++j) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(nv);
      double h = 0.0;
      for (int ax = 0; ax < 3; ++ax) {
        const int idx = 4 * pc.segment_index + j;
        a.segment(ax * nfree, nfree) +=
            pc.plane.normal[ax] * maps[ax].m.row(idx).transpose();
        h += pc.plane.normal[ax] * maps[ax].c0(idx);
      }
      add_row(a, pc.plane.offset - cfg.plane_margin - h);
    }
  }

  Eigen::MatrixXd A(static_cast<int>(rows.size()), nv);
  Eigen::VectorXd b(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    A.row(static_cast<int>(i)) = rows[i].transpose();
    b(static_cast<int>(i)) = rhs[i];
  }

  Eigen::VectorXd x(nv);
  int iterations = 0;
  double kkt = 0.0;
  if (nv > 0) {
    const QpResult sol = solve_qp(H, q, A, b, cfg.max_qp_iterations);
    if (sol.status != QpResult::Status::Optimal) return std::nullopt;
    if (sol.kkt_residual > cfg.kkt_tolerance) return std::nullopt;
    x = sol.x;
    iterations = sol.iterations;
    kkt = sol.kkt_residual;
  } else {
    // Two segments: the spline is fully determined by the boundary state.
    x.resize(0);
    for (int i = 0; i < A.rows(); ++i) {
      if (b(i) < -1e-12) return std::nullopt;
    }
  }

  std::vector<PolySegment> segs(n);
  for (int ax = 0; ax < 3; ++ax) {
    const Eigen::VectorXd flat =
        maps[ax].m * x.segment(ax * nfree, nfree) + maps[ax].c0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 4; ++j) segs[i].cps[j][ax] = flat(4 * i + j);
    }
  }
  for (int i = 0; i < n; ++i) {
    segs[i].t0 = req.t_switch + i * dt;
    segs[i].t1 = req.t_switch + (i + 1) * dt;
    if (i > 0) segs[i].t0 = segs[i - 1].t1;
  }

  PlanResult out;
  out.trajectory = Trajectory(std::move(segs));
  out.planes_used = std::move(planes);
  out.solver_iterations = iterations;
  out.kkt_residual = kkt;

  // Feasibility is verified, not trusted.
  if (!check_limits(out.trajectory, req.limits)) return std::nullopt;
  if (!out.trajectory.is_c2(1e-9)) return std::nullopt;
  const StateSample s0 = out.trajectory.state_at(req.t_switch);
  if ((s0.position - req.start.position).norm() > 1e-6 ||
      (s0.velocity - req.start.velocity).norm() > 1e-6 ||
      (s0.acceleration - req.start.acceleration).norm() > 1e-6) {
    return std::nullopt;
  }
  for (const auto& pc : out.planes_used) {
    for (const auto& cp : out.trajectory.segments()[pc.segment_index].cps) {
      if (!(pc.plane.signed_distance(cp) < 0.0)) return std::nullopt;
    }
  }
  return out;
}

}  // namespace rmader
