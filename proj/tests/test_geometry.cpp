#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rmader/geometry.hpp"
#include "test_util.hpp"

using namespace rmader;
using namespace rmader::test;

namespace {

const BoundaryBox kBox{0.4, 0.4, 0.75};

std::vector<Vec3> random_cloud(std::mt19937_64& gen, int n, const Vec3& center,
                               double radius) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) {
    Vec3 p;
    do {
      p = vrand(gen, -1.0, 1.0);
    } while (p.norm() > 1.0);
    pts.push_back(center + radius * p);
  }
  return pts;
}

}  // namespace

TEST_CASE("boxes_collide basics") {
  CHECK_FALSE(boxes_collide(Vec3(0, 0, 0), Vec3(10, 0, 0), kBox));
  CHECK(boxes_collide(Vec3(1, 2, 3), Vec3(1, 2, 3), kBox));
  CHECK(boxes_collide(Vec3(0, 0, 0), Vec3(0.79, 0, 0), kBox));
  CHECK_FALSE(boxes_collide(Vec3(0, 0, 0), Vec3(0.81, 0, 0), kBox));
  // boundary is open
  CHECK_FALSE(boxes_collide(Vec3(0, 0, 0), Vec3(0.8, 0, 0), kBox));
}

TEST_CASE("boxes_collide is symmetric") {
  std::mt19937_64 gen(41);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a = vrand(gen, -2, 2), b = vrand(gen, -2, 2);
    CHECK(boxes_collide(a, b, kBox) == boxes_collide(b, a, kBox));
  }
}

TEST_CASE("separating plane between two points") {
  const std::vector<Vec3> a{Vec3(0, 0, 0)};
  const std::vector<Vec3> b{Vec3(2, 0, 0)};
  const auto plane = compute_separating_plane(a, b);
  REQUIRE(plane.has_value());
  CHECK((plane->normal - Vec3(1, 0, 0)).norm() <= 1e-12);
  CHECK(plane->offset == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("intersecting hulls yield no plane") {
  const std::vector<Vec3> a{Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 2, 0), Vec3(0, 0, 2)};
  const std::vector<Vec3> b{Vec3(0.5, 0.2, 0.2), Vec3(3, 3, 3)};
  CHECK_FALSE(compute_separating_plane(a, b).has_value());
  // coincident degenerate hulls
  const std::vector<Vec3> c{Vec3(1, 1, 1)};
  CHECK_FALSE(compute_separating_plane(c, c).has_value());
}

TEST_CASE("axis-aligned cube pair: exact distance and face plane") {
  std::vector<Vec3> a, b;
  for (int i = 0; i < 8; ++i) {
    a.push_back(Vec3(i & 1, (i >> 1) & 1, (i >> 2) & 1));
    b.push_back(Vec3(2 + (i & 1), (i >> 1) & 1, (i >> 2) & 1));
  }
  const auto cp = closest_points(a, b);
  REQUIRE(cp.has_value());
  CHECK(cp->distance == doctest::Approx(1.0).epsilon(1e-9));
  const auto plane = compute_separating_plane(a, b);
  REQUIRE(plane.has_value());
  CHECK(std::abs(plane->normal.x()) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(plane->offset == doctest::Approx(1.5).epsilon(1e-9));
  // touching cubes have no strict separator
  std::vector<Vec3> c;
  for (int i = 0; i < 8; ++i) c.push_back(Vec3(1 + (i & 1), (i >> 1) & 1, (i >> 2) & 1));
  CHECK_FALSE(compute_separating_plane(a, c).has_value());
}

TEST_CASE("random disjoint hulls: returned plane strictly separates") {
  std::mt19937_64 gen(43);
  int found = 0;
  for (int i = 0; i < 500; ++i) {
    Vec3 axis;
    do {
      axis = vrand(gen, -1, 1);
    } while (axis.norm() < 0.1);
    axis.normalize();
    const double gap = urand(gen, 0.05, 2.0);
    const auto a = random_cloud(gen, 2 + static_cast<int>(gen() % 7),
                                -(1.0 + gap / 2) * axis, 1.0);
    const auto b = random_cloud(gen, 2 + static_cast<int>(gen() % 7),
                                (1.0 + gap / 2) * axis, 1.0);
    const auto plane = compute_separating_plane(a, b);
    REQUIRE(plane.has_value());
    ++found;
    double max_a = -1e30, min_b = 1e30;
    for (const auto& p : a) max_a = std::max(max_a, plane->signed_distance(p));
    for (const auto& p : b) min_b = std::min(min_b, plane->signed_distance(p));
    REQUIRE(max_a < 0.0);
    REQUIRE(min_b > 0.0);
    CHECK(plane->normal.norm() == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(found == 500);
}

TEST_CASE("closest distance between point and segment cloud matches brute force") {
  std::mt19937_64 gen(47);
  for (int i = 0; i < 100; ++i) {
    // hull B is a segment; brute-force its closest approach to a point
    const Vec3 p = vrand(gen, -3, 3);
    const Vec3 q0 = vrand(gen, -3, 3) + Vec3(5, 0, 0);
    const Vec3 q1 = vrand(gen, -3, 3) + Vec3(5, 0, 0);
    const std::vector<Vec3> a{p};
    const std::vector<Vec3> b{q0, q1};
    double brute = 1e30;
    for (int k = 0; k <= 2000; ++k) {
      const double u = k / 2000.0;
      brute = std::min(brute, (p - (q0 + u * (q1 - q0))).norm());
    }
    const auto cp = closest_points(a, b);
    if (!cp) {
      CHECK(brute <= 1e-6);
      continue;
    }
    CHECK(cp->distance == doctest::Approx(brute).epsilon(1e-6));
  }
}

TEST_CASE("check_pair_collision: parallel lanes far apart are clear") {
  auto lane = [](double y) {
    PolySegment s;
    s.t0 = 0;
    s.t1 = 2;
    s.cps = {Vec3(0, y, 1), Vec3(2, y, 1), Vec3(4, y, 1), Vec3(6, y, 1)};
    return Trajectory({s});
  };
  CHECK_FALSE(check_pair_collision(lane(0), lane(10), kBox, 0.0, 2.0));
  CHECK(check_pair_collision(lane(0), lane(0), kBox, 0.0, 2.0));
}

TEST_CASE("check_pair_collision: crossing at the same time is flagged") {
  PolySegment a;
  a.t0 = 0;
  a.t1 = 2;
  a.cps = {Vec3(-5, 0, 1), Vec3(-5.0 / 3, 0, 1), Vec3(5.0 / 3, 0, 1), Vec3(5, 0, 1)};
  PolySegment b = a;
  for (auto& p : b.cps) p.x() = -p.x();
  Trajectory ta({a}), tb({b});
  CHECK(check_pair_collision(ta, tb, kBox, 0.0, 2.0));
  CHECK(sampling_oracle_collision(ta, tb, kBox, 0.0, 2.0, 1e-3));
}

TEST_CASE("empty window is an error") {
  Trajectory t = Trajectory::constant(Vec3(0, 0, 0), 0, 1);
  CHECK_THROWS_AS((void)check_pair_collision(t, t, kBox, 1.0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("sampling oracle: coincident constants collide, near miss does not") {
  Trajectory a = Trajectory::constant(Vec3(0, 0, 0), 0, 1);
  Trajectory b = Trajectory::constant(Vec3(0.81, 0, 0), 0, 1);
  CHECK(sampling_oracle_collision(a, a, kBox, 0, 1, 1e-3));
  CHECK_FALSE(sampling_oracle_collision(a, b, kBox, 0, 1, 1e-3));
}

TEST_CASE("near miss at one centimeter beyond the box is clear") {
  // parallel straight lines offset 2*hx + 1 cm in x; closest approach is
  // exactly that offset, so no sample can collide
  PolySegment a;
  a.t0 = 0;
  a.t1 = 1;
  a.cps = {Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 2, 0), Vec3(0, 3, 0)};
  PolySegment b = a;
  for (auto& p : b.cps) p.x() += 0.81;
  CHECK_FALSE(
      sampling_oracle_collision(Trajectory({a}), Trajectory({b}), kBox, 0, 1, 1e-3));
}

TEST_CASE("soundness: conservative clear implies oracle clear") {
  std::mt19937_64 gen(53);
  int clear = 0;
  for (int i = 0; i < 300; ++i) {
    Trajectory a = random_trajectory(gen, 2, 0.0, 2.0);
    // random separation so both branches of the property get exercised
    const Vec3 center = urand(gen, 0.0, 8.0) * vrand(gen, -1, 1).normalized();
    std::vector<PolySegment> shifted = random_trajectory(gen, 2, 0.0, 2.0).segments();
    for (auto& seg : shifted) {
      for (auto& p : seg.cps) p += center;
    }
    Trajectory b(std::move(shifted));
    const double t1 = std::min(a.end_time(), b.end_time());
    if (!check_pair_collision(a, b, kBox, 0.0, t1)) {
      ++clear;
      REQUIRE_FALSE(sampling_oracle_collision(a, b, kBox, 0.0, t1, 1e-3));
    }
  }
  CHECK(clear > 30);  // the clear branch must actually be exercised
}

TEST_CASE("inflate_piece covers the control points plus the pairwise box") {
  std::mt19937_64 gen(59);
  const std::array<Vec3, 4> cps = {vrand(gen, -1, 1), vrand(gen, -1, 1),
                                   vrand(gen, -1, 1), vrand(gen, -1, 1)};
  const auto corners = inflate_piece(cps, kBox);
  for (const auto& cp : cps) {
    for (int ax = 0; ax < 3; ++ax) {
      CHECK(cp[ax] - 2 * (ax == 0 ? kBox.hx : ax == 1 ? kBox.hy : kBox.hz) >=
            corners[0][ax] - 1e-12);
      CHECK(cp[ax] + 2 * (ax == 0 ? kBox.hx : ax == 1 ? kBox.hy : kBox.hz) <=
            corners[7][ax] + 1e-12);
    }
  }
}
