#pragma once

// Exhaustive active-set oracle for the SVM dual on tiny problems.
//
// Every variable is pinned at 0, pinned at its upper bound, or free. For each
// of the 3^n assignments the free block is solved from the equality-constrained
// KKT system; feasible candidates are compared and the smallest objective wins.
// The optimal set of a bounded convex QP has a vertex whose free block is the
// unique solution of its KKT system, so the enumeration reaches the optimum.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace eak::testkit {

struct OracleResult {
  double objective = std::numeric_limits<double>::infinity();
  std::vector<double> alpha;
};

inline double dual_objective(const std::vector<double>& K, const std::vector<int>& y, const std::vector<double>& a) {
  const std::size_t n = y.size();
  double quad = 0, lin = 0;
  for (std::size_t h = 0; h < n; ++h) {
    lin += a[h];
    for (std::size_t k = 0; k < n; ++k) quad += y[h] * y[k] * a[h] * a[k] * K[h * n + k];
  }
  return 0.5 * quad - lin;
}

inline OracleResult brute_force_dual(const std::vector<double>& K, const std::vector<int>& y,
                                     const std::vector<double>& upper) {
  const std::size_t n = y.size();
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= 3;
  OracleResult best;
  std::vector<int> state(n);
  for (std::size_t code = 0; code < combos; ++code) {
    std::size_t c = code;
    std::vector<std::size_t> free_idx;
    std::vector<double> a(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      state[i] = static_cast<int>(c % 3);
      c /= 3;
      if (state[i] == 1) a[i] = upper[i];
      if (state[i] == 2) free_idx.push_back(i);
    }
    const std::size_t f = free_idx.size();
    if (f == 0) {
      double eq = 0;
      for (std::size_t i = 0; i < n; ++i) eq += a[i] * y[i];
      if (std::abs(eq) > 1e-12) continue;
    } else {
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(f + 1), static_cast<Eigen::Index>(f + 1));
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f + 1));
      double fixed_eq = 0;
      for (std::size_t i = 0; i < n; ++i) fixed_eq += a[i] * y[i];
      for (std::size_t p = 0; p < f; ++p) {
        const std::size_t i = free_idx[p];
        double r = 1.0;
        for (std::size_t k = 0; k < n; ++k) r -= y[i] * y[k] * K[i * n + k] * a[k];
        rhs(static_cast<Eigen::Index>(p)) = r;
        for (std::size_t q = 0; q < f; ++q) {
          const std::size_t k = free_idx[q];
          M(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = y[i] * y[k] * K[i * n + k];
        }
        M(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(f)) = y[i];
        M(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(p)) = y[i];
      }
      rhs(static_cast<Eigen::Index>(f)) = -fixed_eq;
      const Eigen::VectorXd sol = M.completeOrthogonalDecomposition().solve(rhs);
      if ((M * sol - rhs).norm() > 1e-9 * (1.0 + rhs.norm())) continue;
      bool feasible = true;
      for (std::size_t p = 0; p < f; ++p) {
        const double v = sol(static_cast<Eigen::Index>(p));
        const std::size_t i = free_idx[p];
        if (v < -1e-12 || v > upper[i] + 1e-12) {
          feasible = false;
          break;
        }
        a[i] = std::clamp(v, 0.0, upper[i]);
      }
      if (!feasible) continue;
    }
    const double obj = dual_objective(K, y, a);
    if (obj < best.objective) {
      best.objective = obj;
      best.alpha = a;
    }
  }
  return best;
}

}  // namespace eak::testkit
