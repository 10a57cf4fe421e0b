#pragma once

// Dense active-set solvers for small convex quadratic programs
//
//   minimize   1/2 x' H x + c' x
//   subject to A x <= b
//
// with H symmetric positive semidefinite (H = 0 gives a linear program).
//
// Two dense active-set methods are provided. The primal method needs a
// feasible starting point and uses Bland's smallest-index rule for both the
// ratio test and constraint removal, so it does not cycle on degenerate
// vertices. The dual method (Goldfarb-Idnani) requires H positive definite,
// starts from the unconstrained minimizer and adds violated rows one at a
// time; it typically needs about as many iterations as there are active rows
// at the solution.

#include "rebal/types.hpp"

#include <vector>

namespace rebal {

struct QpProblem {
  Matrix hessian;  ///< nv x nv, PSD
  Vector linear;   ///< nv
  Matrix a;        ///< rows x nv
  Vector b;        ///< rows
};

enum class QpStatus { Optimal, Unbounded, MaxIterations, InfeasibleStart, Infeasible };

const char* to_string(QpStatus status);

enum class QpMethod {
  Auto,    ///< dual when H is positive definite, primal otherwise
  Primal,
  Dual,
};

struct QpOptions {
  int max_iterations = 20000;
  double feasibility_tol = 1e-9;
  QpMethod method = QpMethod::Auto;
};

struct QpResult {
  QpStatus status = QpStatus::MaxIterations;
  Vector x;
  /// One multiplier per row of A; zero outside the final working set.
  Vector multipliers;
  std::vector<int> working_set;
  int iterations = 0;
  /// max of stationarity, primal and dual infeasibility at the returned point.
  double kkt_residual = 0.0;
  double objective = 0.0;
};

/// Primal method: solves from the feasible point `x0`. `warm_working_set` may
/// list row indices believed active at `x0`; rows that are inactive or
/// dependent are dropped silently. The dual method ignores both.
QpResult solve_qp(const QpProblem& problem, const Vector& x0,
                  const std::vector<int>& warm_working_set = {}, const QpOptions& options = {});

}  // namespace rebal
