#pragma once

#include <Eigen/Dense>

#include "rmader/planner.hpp"

namespace rmader::test {

/// Independent route to the same optimum: full control-point vector per
/// axis, equality constraints handled by a direct KKT solve.
struct KktOracle {
  std::array<Eigen::VectorXd, 3> axis_cps;  // 4N control points per axis
  double cost = 0.0;
};

inline KktOracle kkt_oracle(const PlanRequest& req) {
  const int n = req.num_segments;
  const double dt = req.segment_duration;
  const int nz = 4 * n;
  const double kj = 6.0 / (dt * dt * dt);

  KktOracle out;
  for (int ax = 0; ax < 3; ++ax) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nz, nz);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(nz);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(nz);
      g(4 * i + 0) = -kj;
      g(4 * i + 1) = 3 * kj;
      g(4 * i + 2) = -3 * kj;
      g(4 * i + 3) = kj;
      H += 2.0 * dt * g * g.transpose();
    }
    H(nz - 1, nz - 1) += 2.0 * req.config.w_goal;
    q(nz - 1) -= 2.0 * req.config.w_goal * req.goal[ax];

    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    auto add = [&](std::initializer_list<std::pair<int, double>> terms, double v) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(nz);
      for (const auto& [idx, w] : terms) r(idx) = w;
      rows.push_back(r);
      rhs.push_back(v);
    };
    add({{0, 1.0}}, req.start.position[ax]);
    add({{1, 3.0 / dt}, {0, -3.0 / dt}}, req.start.velocity[ax]);
    add({{2, 6.0 / (dt * dt)}, {1, -12.0 / (dt * dt)}, {0, 6.0 / (dt * dt)}},
        req.start.acceleration[ax]);
    for (int i = 0; i + 1 < n; ++i) {
      const int a = 4 * i, b = 4 * (i + 1);
      add({{b, 1.0}, {a + 3, -1.0}}, 0.0);
      add({{b + 1, 1.0}, {b, -1.0}, {a + 3, -1.0}, {a + 2, 1.0}}, 0.0);
      add({{b + 2, 1.0}, {b + 1, -2.0}, {b, 1.0},
           {a + 1, -1.0}, {a + 2, 2.0}, {a + 3, -1.0}}, 0.0);
    }
    const int last = nz - 4;
    add({{last + 3, 1.0}, {last + 2, -1.0}}, 0.0);
    add({{last + 3, 1.0}, {last + 2, -2.0}, {last + 1, 1.0}}, 0.0);

    const int ne = static_cast<int>(rows.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nz + ne, nz + ne);
    kkt.topLeftCorner(nz, nz) = H;
    Eigen::VectorXd full_rhs(nz + ne);
    full_rhs.head(nz) = -q;
    for (int i = 0; i < ne; ++i) {
      kkt.block(nz + i, 0, 1, nz) = rows[i].transpose();
      kkt.block(0, nz + i, nz, 1) = rows[i];
      full_rhs(nz + i) = rhs[i];
    }
    const Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(full_rhs);
    out.axis_cps[ax] = sol.head(nz);
  }
  // cost from the reconstructed trajectory
  double jerk_int = 0.0;
  Vec3 endpoint;
  for (int ax = 0; ax < 3; ++ax) endpoint[ax] = out.axis_cps[ax](nz - 1);
  for (int i = 0; i < n; ++i) {
    Vec3 j;
    for (int ax = 0; ax < 3; ++ax) {
      const auto& z = out.axis_cps[ax];
      j[ax] = kj * (z(4 * i + 3) - 3 * z(4 * i + 2) + 3 * z(4 * i + 1) - z(4 * i));
    }
    jerk_int += dt * j.squaredNorm();
  }
  out.cost = jerk_int + req.config.w_goal * (endpoint - req.goal).squaredNorm();
  return out;
}


}  // namespace rmader::test
