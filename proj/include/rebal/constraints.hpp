#pragma once

#include "rebal/types.hpp"

#include <vector>

namespace rebal {

/// Linear constraint family on (reward, input) pairs: a transform input
/// `delta` is feasible for reward `reward` iff P * reward + Q * delta <= 0.
struct LinearConstraintSet {
  Matrix p;  ///< d x m
  Matrix q;  ///< d x n

  LinearConstraintSet() = default;
  LinearConstraintSet(Matrix p_, Matrix q_);
  static LinearConstraintSet empty(int m, int n) { return {Matrix(0, m), Matrix(0, n)}; }

  Index rows() const { return p.rows(); }

  /// Residuals P R + Q delta (feasible when all <= 0).
  Vector residual(const Vector& reward, const Vector& delta) const;
  bool contains(const Vector& reward, const Vector& delta, double tol = 1e-9) const;

  /// Stacks the rows of `other` below this set's rows.
  LinearConstraintSet stacked(const LinearConstraintSet& other) const;
  LinearConstraintSet subset(const std::vector<int>& rows) const;
};

/// Indices of rows that cannot be dropped without enlarging the feasible set
/// {delta : P reward + Q delta <= 0}. Exact duplicates keep their first copy;
/// every other row is tested by maximizing its left-hand side over the
/// remaining rows with the LP solver. `feasible_delta` must satisfy the set.
std::vector<int> nonredundant_rows(const LinearConstraintSet& set, const Vector& reward,
                                   const Vector& feasible_delta, double tol = 1e-9);

}  // namespace rebal
