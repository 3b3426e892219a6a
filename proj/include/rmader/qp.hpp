#pragma once

#include <Eigen/Dense>

namespace rmader {

/// Result of a dense convex QP solve.
struct QpResult {
  enum class Status { Optimal, Infeasible, MaxIterations };
  Status status = Status::MaxIterations;
  Eigen::VectorXd x;
  Eigen::VectorXd duals;  // one per inequality row, zero when inactive
  int iterations = 0;
  double kkt_residual = 0.0;
};

/// Minimizes 0.5 x'Gx + g0'x subject to Ax <= b, with G positive definite.
/// Dual active-set method (Goldfarb-Idnani): starts from the unconstrained
/// minimum and adds violated constraints, so no feasible starting point is
/// needed and primal infeasibility is detected exactly. Deterministic:
/// most-violated row first, lowest index on ties.
QpResult solve_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& g0,
                  const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                  int max_iterations = 0);

}  // namespace rmader
