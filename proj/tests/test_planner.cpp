#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rmader/planner.hpp"
#include "planner_oracle.hpp"
#include "test_util.hpp"

using namespace rmader;
using namespace rmader::test;

namespace {

PlanRequest base_request(int n = 6, double dt = 0.4) {
  PlanRequest req;
  req.start.t = 0.0;
  req.t_switch = 0.0;
  req.num_segments = n;
  req.segment_duration = dt;
  req.limits = {10.0, 20.0, 30.0};
  req.box = {0.4, 0.4, 0.75};
  return req;
}

double plan_cost(const PlanResult& r, const PlanRequest& req) {
  const SmoothnessIntegrals s = smoothness_integrals(r.trajectory);
  const double gd = (r.trajectory.terminal_hold() - req.goal).squaredNorm();
  return s.jerk_integral + req.config.w_goal * gd;
}

Trajectory hover(const Vec3& p) { return Trajectory::constant(p, -1.0, 20.0); }

Trajectory moving_peer(std::mt19937_64& gen, double span) {
  PlanRequest r = base_request();
  r.start.position = vrand(gen, -span, span);
  r.goal = vrand(gen, -span, span);
  r.t_switch = -0.5;
  r.start.t = -0.5;
  return initial_guess(r);
}

/// Limit and plane feasibility re-derived from the raw control points.
void require_verified(const PlanResult& r, const PlanRequest& req) {
  for (const auto& seg : r.trajectory.segments()) {
    const double dt = seg.duration();
    for (int j = 0; j < 3; ++j) {
      const Vec3 v = 3.0 / dt * (seg.cps[j + 1] - seg.cps[j]);
      REQUIRE(v.lpNorm<Eigen::Infinity>() <= req.limits.v_max);
    }
    for (int j = 0; j < 2; ++j) {
      const Vec3 a =
          6.0 / (dt * dt) * (seg.cps[j + 2] - 2 * seg.cps[j + 1] + seg.cps[j]);
      REQUIRE(a.lpNorm<Eigen::Infinity>() <= req.limits.a_max);
    }
    const Vec3 j = 6.0 / (dt * dt * dt) *
                   (seg.cps[3] - 3 * seg.cps[2] + 3 * seg.cps[1] - seg.cps[0]);
    REQUIRE(j.lpNorm<Eigen::Infinity>() <= req.limits.j_max);
  }
  for (const auto& pc : r.planes_used) {
    for (const auto& cp : r.trajectory.segments()[pc.segment_index].cps) {
      REQUIRE(pc.plane.signed_distance(cp) < 0.0);
    }
  }
  REQUIRE(r.trajectory.is_c2(1e-9));
  const StateSample s0 = r.trajectory.state_at(req.t_switch);
  REQUIRE((s0.position - req.start.position).norm() <= 1e-6);
  REQUIRE((s0.velocity - req.start.velocity).norm() <= 1e-6);
  REQUIRE((s0.acceleration - req.start.acceleration).norm() <= 1e-6);
}

}  // namespace

TEST_CASE("unconstrained plans match the direct KKT solve") {
  std::mt19937_64 gen(61);
  for (int i = 0; i < 20; ++i) {
    PlanRequest req = base_request(4 + 2 * static_cast<int>(gen() % 2),
                                   urand(gen, 0.3, 0.6));
    req.start.position = vrand(gen, -3, 3);
    req.start.velocity = vrand(gen, -2, 2);
    req.start.acceleration = vrand(gen, -2, 2);
    req.goal = req.start.position + vrand(gen, -4, 4);
    req.limits = {1e6, 1e6, 1e6};  // keep every inequality slack

    const auto r = plan(req);
    REQUIRE(r.has_value());
    const KktOracle oracle = kkt_oracle(req);
    for (int seg = 0; seg < req.num_segments; ++seg) {
      for (int j = 0; j < 4; ++j) {
        for (int ax = 0; ax < 3; ++ax) {
          CHECK(r->trajectory.segments()[seg].cps[j][ax] ==
                doctest::Approx(oracle.axis_cps[ax](4 * seg + j)).epsilon(1e-6));
        }
      }
    }
    CHECK(plan_cost(*r, req) == doctest::Approx(oracle.cost).epsilon(1e-4));
    CHECK(r->kkt_residual <= req.config.kkt_tolerance);
  }
}

TEST_CASE("free flight to a goal well inside limits") {
  PlanRequest req = base_request(6, 0.4);
  req.goal = Vec3(5, 0, 0);
  const auto r = plan(req);
  REQUIRE(r.has_value());
  CHECK((r->trajectory.terminal_hold() - req.goal).norm() <= 1e-3);
  const KktOracle oracle = kkt_oracle(req);
  const SmoothnessIntegrals s = smoothness_integrals(r->trajectory);
  // jerk integral against the independent unconstrained optimum
  double oracle_jerk = oracle.cost;
  {
    Vec3 endpoint;
    for (int ax = 0; ax < 3; ++ax) endpoint[ax] = oracle.axis_cps[ax](4 * 6 - 1);
    oracle_jerk -= req.config.w_goal * (endpoint - req.goal).squaredNorm();
  }
  CHECK(s.jerk_integral == doctest::Approx(oracle_jerk).epsilon(1e-4));
}

TEST_CASE("goal at the start point yields a constant trajectory") {
  PlanRequest req = base_request();
  req.start.position = Vec3(1, 2, 3);
  req.goal = req.start.position;
  const auto r = plan(req);
  REQUIRE(r.has_value());
  for (const auto& seg : r->trajectory.segments()) {
    for (const auto& cp : seg.cps) {
      CHECK((cp - req.start.position).norm() <= 1e-6);
    }
  }
  CHECK(plan_cost(*r, req) <= 1e-9);
}

TEST_CASE("a static peer on the straight path is avoided") {
  PlanRequest req = base_request(6, 0.4);
  req.goal = Vec3(5, 0, 0);
  req.constraints.emplace_back(1, hover(Vec3(2.5, 0, 0)));
  const auto r = plan(req);
  REQUIRE(r.has_value());
  require_verified(*r, req);
  CHECK((r->trajectory.terminal_hold() - req.goal).norm() <= 0.3);
  CHECK_FALSE(sampling_oracle_collision(r->trajectory, hover(Vec3(2.5, 0, 0)),
                                        req.box, 0.0, 2.4, 1e-3));
}

TEST_CASE("initial guess: line reaches the goal within the horizon") {
  PlanRequest req = base_request(6, 0.5);
  req.goal = Vec3(1, 0, 0);
  const Trajectory g = initial_guess(req);
  CHECK((g.terminal_hold() - req.goal).norm() <= 1e-9);

  req.goal = req.start.position;
  const Trajectory c = initial_guess(req);
  for (const auto& seg : c.segments()) {
    for (const auto& cp : seg.cps) CHECK((cp - req.start.position).norm() <= 1e-12);
  }
}

TEST_CASE("initial guess blends a nonzero start velocity C1") {
  PlanRequest req = base_request(6, 0.4);
  req.start.velocity = Vec3(2, -1, 0.5);
  req.goal = Vec3(6, 1, 1);
  const Trajectory g = initial_guess(req);
  CHECK((g.state_at(0.0).velocity - req.start.velocity).norm() <= 1e-9);
  const double h = 1e-5;
  const Vec3 fd = (g.position_at(h) - g.position_at(0.0)) / h;
  CHECK((fd - req.start.velocity).norm() <= 1e-3);
  // junction to the pure line is C1 as well
  const double tj = g.segments()[0].t1;
  const Vec3 v_left = g.segments()[0].state_at(tj).velocity;
  const Vec3 v_right = g.segments()[1].state_at(tj).velocity;
  CHECK((v_left - v_right).norm() <= 1e-9);
}

TEST_CASE("verified feasibility over random constrained requests") {
  std::mt19937_64 gen(67);
  int ok = 0, infeasible = 0;
  for (int i = 0; i < 60; ++i) {
    PlanRequest req = base_request(6, urand(gen, 0.25, 0.5));
    req.start.position = vrand(gen, -2, 2);
    req.start.velocity = vrand(gen, -3, 3);
    req.start.acceleration = vrand(gen, -3, 3);
    req.goal = req.start.position + vrand(gen, -8, 8);
    const int n_peers = 1 + static_cast<int>(gen() % 5);
    for (int p = 0; p < n_peers; ++p) {
      if (gen() % 2) {
        req.constraints.emplace_back(p, hover(vrand(gen, -6, 6)));
      } else {
        req.constraints.emplace_back(p, moving_peer(gen, 6.0));
      }
    }
    const auto r = plan(req);
    if (!r) {
      ++infeasible;
      continue;
    }
    ++ok;
    require_verified(*r, req);
  }
  CHECK(ok >= 30);
  CHECK(ok + infeasible == 60);
}

TEST_CASE("identical requests produce bit-identical plans") {
  std::mt19937_64 gen(71);
  PlanRequest req = base_request();
  req.goal = Vec3(4, 2, 0);
  req.constraints.emplace_back(1, hover(Vec3(2, 1, 0)));
  const auto a = plan(req);
  const auto b = plan(req);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  for (size_t i = 0; i < a->trajectory.segments().size(); ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int ax = 0; ax < 3; ++ax) {
        CHECK(a->trajectory.segments()[i].cps[j][ax] ==
              b->trajectory.segments()[i].cps[j][ax]);
      }
    }
  }
}

TEST_CASE("doubling w_goal never increases the goal-distance term") {
  std::mt19937_64 gen(73);
  for (int i = 0; i < 50; ++i) {
    PlanRequest req = base_request(6, urand(gen, 0.3, 0.5));
    req.start.position = vrand(gen, -2, 2);
    req.goal = req.start.position + vrand(gen, -6, 6);
    req.config.w_goal = urand(gen, 1e2, 1e6);
    if (gen() % 2) req.constraints.emplace_back(1, hover(vrand(gen, -4, 4)));
    const auto r1 = plan(req);
    PlanRequest req2 = req;
    req2.config.w_goal *= 2.0;
    const auto r2 = plan(req2);
    if (!r1 || !r2) continue;
    const double d1 = (r1->trajectory.terminal_hold() - req.goal).squaredNorm();
    const double d2 = (r2->trajectory.terminal_hold() - req.goal).squaredNorm();
    CHECK(d2 <= d1 + 1e-9);
  }
}

TEST_CASE("a peer sweeping through the start makes the plan infeasible") {
  PlanRequest req = base_request(6, 0.4);
  req.goal = Vec3(5, 0, 0);
  // peer crosses the pinned start during the first segment window but is
  // not overlapping at t_switch itself
  PlanRequest sweep = base_request(2, 0.2);
  sweep.start.position = Vec3(-2, 0, 0);
  sweep.goal = Vec3(2, 0, 0);
  req.constraints.emplace_back(1, initial_guess(sweep));
  const auto r = plan(req);
  CHECK_FALSE(r.has_value());
}

TEST_CASE("malformed requests throw") {
  PlanRequest req = base_request();
  req.num_segments = 1;
  CHECK_THROWS_AS((void)plan(req), std::invalid_argument);
  PlanRequest req2 = base_request();
  req2.start.t = 0.5;  // != t_switch
  CHECK_THROWS_AS((void)plan(req2), std::invalid_argument);
  PlanRequest req3 = base_request();
  req3.segment_duration = 0.0;
  CHECK_THROWS_AS((void)plan(req3), std::invalid_argument);
}
