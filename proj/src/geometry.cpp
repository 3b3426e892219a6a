#include "rmader/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmader {

bool boxes_collide(const Vec3& p1, const Vec3& p2, const BoundaryBox& box) {
  const Vec3 d = p1 - p2;
  return std::abs(d.x()) < 2.0 * box.hx && std::abs(d.y()) < 2.0 * box.hy &&
         std::abs(d.z()) < 2.0 * box.hz;
}

namespace {

struct SupportVertex {
  Vec3 w;       // a - b
  int ia, ib;   // indices into the source hulls
  double la;    // barycentric weight of the current closest point
};

Vec3 support_point(std::span<const Vec3> pts, const Vec3& dir, int& idx) {
  idx = 0;
  double best = pts[0].dot(dir);
  for (int i = 1; i < static_cast<int>(pts.size()); ++i) {
    const double v = pts[i].dot(dir);
    if (v > best) { best = v; idx = i; }
  }
  return pts[idx];
}

/// Min-norm point in the convex hull of the simplex vertices. Enumerates
/// support subsets by increasing size; exact for <= 4 points. Returns the
/// barycentric weights through `simplex` (entries outside the winning subset
/// are dropped from it).
Vec3 reduce_to_min_norm(std::vector<SupportVertex>& simplex) {
  const int n = static_cast<int>(simplex.size());
  double best_norm2 = std::numeric_limits<double>::infinity();
  Vec3 best_v = Vec3::Zero();
  std::vector<int> best_subset;
  std::vector<double> best_lambda;

  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) {
      if (mask & (1 << i)) idx.push_back(i);
    }
    const int k = static_cast<int>(idx.size());
    Eigen::VectorXd lambda(k);
    if (k == 1) {
      lambda(0) = 1.0;
    } else {
      // lambda_0 = 1 - sum(mu); minimize |w0 + D mu| with D_i = w_i - w0.
      Eigen::MatrixXd D(3, k - 1);
      for (int i = 1; i < k; ++i) {
        D.col(i - 1) = simplex[idx[i]].w - simplex[idx[0]].w;
      }
      const Eigen::MatrixXd G = D.transpose() * D;
      const Eigen::VectorXd r = -D.transpose() * simplex[idx[0]].w;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
      if (!lu.isInvertible()) continue;  // affinely dependent subset
      const Eigen::VectorXd mu = lu.solve(r);
      lambda(0) = 1.0 - mu.sum();
      lambda.tail(k - 1) = mu;
    }
    bool ok = true;
    for (int i = 0; i < k; ++i) {
      if (lambda(i) < -1e-12) { ok = false; break; }
    }
    if (!ok) continue;
    Vec3 v = Vec3::Zero();
    for (int i = 0; i < k; ++i) v += lambda(i) * simplex[idx[i]].w;
    if (v.squaredNorm() < best_norm2 - 1e-18) {
      best_norm2 = v.squaredNorm();
      best_v = v;
      best_subset = idx;
      best_lambda.assign(lambda.data(), lambda.data() + k);
    }
  }

  std::vector<SupportVertex> kept;
  for (size_t i = 0; i < best_subset.size(); ++i) {
    SupportVertex sv = simplex[best_subset[i]];
    sv.la = std::max(best_lambda[i], 0.0);
    kept.push_back(sv);
  }
  simplex = std::move(kept);
  return best_v;
}

}  // namespace

std::optional<ClosestPair> closest_points(std::span<const Vec3> hull_a,
                                          std::span<const Vec3> hull_b) {
  if (hull_a.empty() || hull_b.empty()) {
    throw std::invalid_argument("closest_points: empty hull");
  }
  double scale = 1.0;
  for (const auto& p : hull_a) scale = std::max(scale, p.lpNorm<Eigen::Infinity>());
  for (const auto& p : hull_b) scale = std::max(scale, p.lpNorm<Eigen::Infinity>());
  const double eps_zero = 1e-11 * scale;

  auto support = [&](const Vec3& dir) {
    SupportVertex sv;
    sv.w = support_point(hull_a, dir, sv.ia) - support_point(hull_b, -dir, sv.ib);
    sv.la = 0.0;
    return sv;
  };

  std::vector<SupportVertex> simplex{support(Vec3::UnitX())};
  Vec3 v = simplex[0].w;

  for (int iter = 0; iter < 64; ++iter) {
    v = reduce_to_min_norm(simplex);
    if (v.norm() <= eps_zero) return std::nullopt;  // hulls intersect/touch
    const SupportVertex s = support(-v);
    for (const auto& e : simplex) {
      if (e.ia == s.ia && e.ib == s.ib) goto done;  // no new vertex available
    }
    // Converged when the support gains nothing in direction -v.
    if (v.squaredNorm() - v.dot(s.w) <= 1e-12 * v.squaredNorm()) break;
    simplex.push_back(s);
  }
done:
  ClosestPair out;
  out.on_a = Vec3::Zero();
  out.on_b = Vec3::Zero();
  for (const auto& e : simplex) {
    out.on_a += e.la * hull_a[e.ia];
    out.on_b += e.la * hull_b[e.ib];
  }
  out.distance = v.norm();
  return out;
}

std::optional<SeparatingPlane> compute_separating_plane(
    std::span<const Vec3> hull_a, std::span<const Vec3> hull_b) {
  const auto cp = closest_points(hull_a, hull_b);
  if (!cp || cp->distance <= 1e-9) return std::nullopt;
  SeparatingPlane plane;
  plane.normal = (cp->on_b - cp->on_a) / cp->distance;
  plane.offset = plane.normal.dot(0.5 * (cp->on_a + cp->on_b));
  return plane;
}

std::vector<TrajectoryPiece> collect_pieces(const Trajectory& traj, double a,
                                            double b) {
  std::vector<TrajectoryPiece> out;
  for (const auto& s : traj.restricted(a, b)) {
    out.push_back({s.t0, s.t1, s.cps});
  }
  return out;
}

std::array<Vec3, 8> inflate_piece(const std::array<Vec3, 4>& cps,
                                  const BoundaryBox& box) {
  Vec3 lo = cps[0], hi = cps[0];
  for (int i = 1; i < 4; ++i) {
    lo = lo.cwiseMin(cps[i]);
    hi = hi.cwiseMax(cps[i]);
  }
  const Vec3 h(2.0 * box.hx, 2.0 * box.hy, 2.0 * box.hz);
  lo -= h;
  hi += h;
  std::array<Vec3, 8> corners;
  for (int i = 0; i < 8; ++i) {
    corners[i] = Vec3(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(),
                      i & 4 ? hi.z() : lo.z());
  }
  return corners;
}

namespace {

/// Cheap pre-test: disjoint AABBs admit an axis-aligned separating plane.
bool aabbs_overlap(const std::array<Vec3, 4>& a, const std::array<Vec3, 8>& b) {
  Vec3 alo = a[0], ahi = a[0];
  for (int i = 1; i < 4; ++i) {
    alo = alo.cwiseMin(a[i]);
    ahi = ahi.cwiseMax(a[i]);
  }
  const Vec3& blo = b[0];
  const Vec3& bhi = b[7];
  for (int ax = 0; ax < 3; ++ax) {
    if (ahi[ax] < blo[ax] || bhi[ax] < alo[ax]) return false;
  }
  return true;
}

}  // namespace

bool check_pair_collision(const Trajectory& traj_a, const Trajectory& traj_b,
                          const BoundaryBox& box, double t_start,
                          double t_end) {
  if (!(t_end > t_start)) throw std::invalid_argument("empty time window");

  std::vector<double> cuts{t_start, t_end};
  for (const auto& s : traj_a.segments()) {
    if (s.t1 > t_start && s.t1 < t_end) cuts.push_back(s.t1);
  }
  for (const auto& s : traj_b.segments()) {
    if (s.t1 > t_start && s.t1 < t_end) cuts.push_back(s.t1);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double x, double y) { return y - x < 1e-12; }),
             cuts.end());

  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    const auto pa = collect_pieces(traj_a, cuts[i], cuts[i + 1]);
    const auto pb = collect_pieces(traj_b, cuts[i], cuts[i + 1]);
    for (const auto& pieceA : pa) {
      for (const auto& pieceB : pb) {
        const auto inflated = inflate_piece(pieceB.cps, box);
        if (!aabbs_overlap(pieceA.cps, inflated)) continue;
        if (!compute_separating_plane(pieceA.cps, inflated)) return true;
      }
    }
  }
  return false;
}

bool sampling_oracle_collision(const Trajectory& traj_a,
                               const Trajectory& traj_b, const BoundaryBox& box,
                               double t_start, double t_end, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("sampling step must be positive");
  long k = 0;
  while (true) {
    const double t = t_start + static_cast<double>(k) * dt;
    const double tc = std::min(t, t_end);
    if (boxes_collide(traj_a.position_at(tc), traj_b.position_at(tc), box)) {
      return true;
    }
    if (t >= t_end) return false;
    ++k;
  }
}

}  // namespace rmader
