#include "rmader/qp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace rmader {

namespace {

// Scaled KKT residual: stationarity is normalized by the magnitude of its
// terms so the measure is meaningful for badly scaled objectives.
double kkt_residual(const Eigen::MatrixXd& G, const Eigen::VectorXd& g0,
                    const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                    const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  const Eigen::VectorXd gx = G * x;
  const Eigen::VectorXd atu = A.transpose() * u;
  const double scale =
      std::max({1.0, gx.lpNorm<Eigen::Infinity>(), g0.lpNorm<Eigen::Infinity>(),
                atu.lpNorm<Eigen::Infinity>()});
  double res = (gx + g0 + atu).lpNorm<Eigen::Infinity>() / scale;
  for (int i = 0; i < A.rows(); ++i) {
    const double s = A.row(i).dot(x) - b(i);
    res = std::max(res, s / (1.0 + std::abs(b(i))));       // primal feasibility
    res = std::max(res, -u(i) / scale);                    // dual feasibility
    res = std::max(res, std::abs(u(i) * s) /
                            ((1.0 + u(i)) * (1.0 + std::abs(b(i)))));
  }
  return res;
}

}  // namespace

QpResult solve_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& g0,
                  const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                  int max_iterations) {
  const int n = static_cast<int>(G.rows());
  const int m = static_cast<int>(A.rows());
  if (G.cols() != n || g0.size() != n || (m > 0 && A.cols() != n) ||
      b.size() != m) {
    throw std::invalid_argument("solve_qp: inconsistent dimensions");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("solve_qp: G is not positive definite");
  }
  if (max_iterations <= 0) max_iterations = 10 * (m + n) + 100;

  QpResult out;
  out.x = llt.solve(-g0);
  out.duals = Eigen::VectorXd::Zero(m);

  std::vector<int> active;             // row indices of active constraints
  Eigen::VectorXd u(0);                // duals in active order
  Eigen::MatrixXd gia(n, 0);           // columns G^-1 a_i for i in active

  auto violation = [&](int i) { return A.row(i).dot(out.x) - b(i); };
  auto tol_for = [&](int i) { return 1e-10 * (1.0 + std::abs(b(i))); };

  int iter = 0;
  while (true) {
    if (++iter > max_iterations) {
      out.status = QpResult::Status::MaxIterations;
      break;
    }
    // Most violated constraint, lowest index on ties.
    int p = -1;
    double worst = 0.0;
    for (int i = 0; i < m; ++i) {
      const double s = violation(i);
      if (s > tol_for(i) && s > worst + 1e-15) {
        worst = s;
        p = i;
      }
    }
    if (p < 0) {
      out.status = QpResult::Status::Optimal;
      break;
    }

    const Eigen::VectorXd ap = A.row(p).transpose();
    const Eigen::VectorXd gi_ap = llt.solve(ap);
    double up = 0.0;
    bool resolved = false;

    // Inner loop: bring constraint p in, dropping dual-blocking constraints.
    while (!resolved) {
      if (++iter > max_iterations) break;
      const int k = static_cast<int>(active.size());
      Eigen::VectorXd r(k);
      Eigen::VectorXd z;
      if (k > 0) {
        Eigen::MatrixXd M(k, k);
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < k; ++j) {
            M(i, j) = A.row(active[i]).dot(gia.col(j));
          }
        }
        Eigen::VectorXd rhs(k);
        for (int i = 0; i < k; ++i) rhs(i) = A.row(active[i]).dot(gi_ap);
        r = M.ldlt().solve(rhs);
        z = gi_ap - gia * r;
      } else {
        z = gi_ap;
      }

      const double step_rate = ap.dot(z);  // = z'Gz >= 0
      const bool z_zero = step_rate <= 1e-13 * (1.0 + gi_ap.lpNorm<Eigen::Infinity>() *
                                                          ap.lpNorm<Eigen::Infinity>());

      // Dual blocking step.
      double t1 = std::numeric_limits<double>::infinity();
      int drop = -1;
      for (int i = 0; i < k; ++i) {
        if (r(i) > 1e-13) {
          const double cand = u(i) / r(i);
          if (cand < t1) { t1 = cand; drop = i; }
        }
      }

      if (z_zero) {
        if (drop < 0) {
          out.status = QpResult::Status::Infeasible;
          out.iterations = iter;
          return out;  // constraint p can never be satisfied
        }
        // Pure dual step.
        u -= t1 * r;
        up += t1;
      } else {
        const double t2 = violation(p) / step_rate;
        const double t = std::min(t1, t2);
        out.x -= t * z;
        if (k > 0) u -= t * r;
        up += t;
        if (t2 <= t1) {
          // Constraint p becomes active.
          active.push_back(p);
          u.conservativeResize(k + 1);
          u(k) = up;
          gia.conservativeResize(Eigen::NoChange, k + 1);
          gia.col(k) = gi_ap;
          resolved = true;
          continue;
        }
      }
      // Drop the blocking constraint and retry p.
      active.erase(active.begin() + drop);
      const int kk = static_cast<int>(u.size());
      for (int i = drop; i + 1 < kk; ++i) {
        u(i) = u(i + 1);
        gia.col(i) = gia.col(i + 1);
      }
      u.conservativeResize(kk - 1);
      gia.conservativeResize(Eigen::NoChange, kk - 1);
    }
    if (!resolved && iter > max_iterations) {
      out.status = QpResult::Status::MaxIterations;
      break;
    }
  }

  for (size_t i = 0; i < active.size(); ++i) out.duals(active[i]) = u(i);
  out.iterations = iter;
  out.kkt_residual = kkt_residual(G, g0, A, b, out.x, out.duals);
  return out;
}

}  // namespace rmader
