#include "rebal/constraints.hpp"

#include "rebal/qp.hpp"

#include <algorithm>

namespace rebal {

LinearConstraintSet::LinearConstraintSet(Matrix p_, Matrix q_) : p(std::move(p_)), q(std::move(q_)) {
  if (p.rows() != q.rows()) throw Error(Errc::ShapeMismatch, "P and Q must have equal row counts");
}

Vector LinearConstraintSet::residual(const Vector& reward, const Vector& delta) const {
  if (reward.size() != p.cols() || delta.size() != q.cols()) {
    throw Error(Errc::ShapeMismatch, "constraint set dimensions do not match reward/input");
  }
  return p * reward + q * delta;
}

bool LinearConstraintSet::contains(const Vector& reward, const Vector& delta, double tol) const {
  if (rows() == 0) return true;
  return residual(reward, delta).maxCoeff() <= tol;
}

LinearConstraintSet LinearConstraintSet::stacked(const LinearConstraintSet& other) const {
  if (other.p.cols() != p.cols() || other.q.cols() != q.cols()) {
    throw Error(Errc::ShapeMismatch, "cannot stack constraint sets of different shapes");
  }
  Matrix ps(rows() + other.rows(), p.cols());
  Matrix qs(rows() + other.rows(), q.cols());
  ps << p, other.p;
  qs << q, other.q;
  return {std::move(ps), std::move(qs)};
}

LinearConstraintSet LinearConstraintSet::subset(const std::vector<int>& idx) const {
  Matrix ps(idx.size(), p.cols());
  Matrix qs(idx.size(), q.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    ps.row(r) = p.row(idx[r]);
    qs.row(r) = q.row(idx[r]);
  }
  return {std::move(ps), std::move(qs)};
}

std::vector<int> nonredundant_rows(const LinearConstraintSet& set, const Vector& reward,
                                   const Vector& feasible_delta, double tol) {
  const Index d = set.rows();
  const Index n = set.q.cols();
  // Row l reads q_l . delta <= rhs_l.
  const Vector rhs = -(set.p * reward);

  std::vector<int> keep;
  for (Index l = 0; l < d; ++l) {
    bool duplicate = false;
    for (int k : keep) {
      if ((set.q.row(k) - set.q.row(l)).cwiseAbs().maxCoeff() == 0.0 && rhs[k] <= rhs[l]) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) keep.push_back(static_cast<int>(l));
  }

  std::vector<int> alive = keep;
  for (std::size_t pos = 0; pos < alive.size();) {
    const int l = alive[pos];
    if (set.q.row(l).cwiseAbs().maxCoeff() == 0.0) {
      // Constant row: redundant exactly when it already holds.
      if (rhs[l] >= -tol) {
        alive.erase(alive.begin() + pos);
      } else {
        ++pos;
      }
      continue;
    }
    QpProblem lp;
    lp.hessian = Matrix::Zero(n, n);
    lp.linear = -set.q.row(l).transpose();
    lp.a.resize(static_cast<Index>(alive.size()) - 1, n);
    lp.b.resize(static_cast<Index>(alive.size()) - 1);
    Index r = 0;
    for (int k : alive) {
      if (k == l) continue;
      lp.a.row(r) = set.q.row(k);
      lp.b[r] = rhs[k];
      ++r;
    }
    const QpResult res = solve_qp(lp, feasible_delta);
    const bool redundant =
        res.status == QpStatus::Optimal && set.q.row(l).dot(res.x) <= rhs[l] + tol;
    if (redundant) {
      alive.erase(alive.begin() + pos);
    } else {
      ++pos;
    }
  }
  std::sort(alive.begin(), alive.end());
  return alive;
}

}  // namespace rebal
