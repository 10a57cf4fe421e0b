#include "rebal/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rebal {

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Unbounded: return "unbounded";
    case QpStatus::MaxIterations: return "max_iterations";
    case QpStatus::InfeasibleStart: return "infeasible_start";
    case QpStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

namespace {

// Null-space step for the equality-constrained subproblem on the working set.
struct Step {
  Vector p;
  bool ray = false;  // direction of zero curvature: step length is unbounded
};

class ActiveSetSolver {
public:
  ActiveSetSolver(const QpProblem& qp, const QpOptions& options) : qp_(qp), opt_(options) {
    nv_ = qp.linear.size();
    rows_ = qp.a.rows();
    row_norm_ = qp.a.rowwise().norm();
    // H = kappa * I is the common case (regularized DCA subproblems, LPs).
    const double d0 = nv_ > 0 ? qp.hessian(0, 0) : 0.0;
    scalar_hessian_ = (qp.hessian - d0 * Matrix::Identity(nv_, nv_)).cwiseAbs().maxCoeff() == 0.0;
    kappa_ = d0;
    hess_scale_ = nv_ > 0 ? std::max(1.0, qp.hessian.cwiseAbs().maxCoeff()) : 1.0;
  }

  QpResult run(const Vector& x0, const std::vector<int>& warm) {
    QpResult res;
    x_ = x0;
    res.multipliers = Vector::Zero(rows_);
    if (max_violation(x_) > opt_.feasibility_tol * (1.0 + inf_norm(qp_.b))) {
      res.status = QpStatus::InfeasibleStart;
      res.x = x_;
      return res;
    }
    in_ws_.assign(rows_, false);
    seed_working_set(warm);

    for (res.iterations = 0; res.iterations < opt_.max_iterations; ++res.iterations) {
      const Vector g = gradient(x_);
      factor();
      const Step step = compute_step(g);
      const double xscale = 1.0 + inf_norm(x_);
      if (!step.ray && inf_norm(step.p) <= 1e-13 * xscale) {
        const Vector lambda = working_multipliers(g);
        const double dual_tol = 1e-11 * (1.0 + inf_norm(g));
        int drop = -1;
        for (std::size_t k = 0; k < ws_.size(); ++k) {
          if (lambda[k] < -dual_tol && (drop < 0 || ws_[k] < ws_[drop])) drop = static_cast<int>(k);
        }
        if (drop < 0) {
          res.status = QpStatus::Optimal;
          finish(res, g, lambda);
          return res;
        }
        in_ws_[ws_[drop]] = false;
        ws_.erase(ws_.begin() + drop);
        continue;
      }

      // Ratio test with smallest-index tie-breaking.
      const Vector ap = qp_.a * step.p;
      const double pnorm = step.p.norm();
      ratios_.assign(rows_, std::numeric_limits<double>::infinity());
      double alpha_min = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < rows_; ++i) {
        if (in_ws_[i]) continue;
        if (ap[i] <= 1e-12 * row_norm_[i] * pnorm) continue;
        const double slack = std::max(0.0, qp_.b[i] - qp_.a.row(i).dot(x_));
        ratios_[i] = slack / ap[i];
        alpha_min = std::min(alpha_min, ratios_[i]);
      }
      double alpha = step.ray ? std::numeric_limits<double>::infinity() : 1.0;
      int block = -1;
      if (alpha_min < alpha) {
        alpha = alpha_min;
        const double cut = alpha_min + 1e-14 * (1.0 + alpha_min);
        for (Index i = 0; i < rows_; ++i) {
          if (ratios_[i] <= cut) {
            block = static_cast<int>(i);
            break;
          }
        }
      }
      if (step.ray && block < 0) {
        res.status = QpStatus::Unbounded;
        res.x = x_;
        res.working_set = ws_;
        return res;
      }
      x_ += alpha * step.p;
      if (block >= 0) {
        in_ws_[block] = true;
        ws_.push_back(block);
      }
    }
    res.status = QpStatus::MaxIterations;
    const Vector g = gradient(x_);
    factor();
    finish(res, g, working_multipliers(g));
    return res;
  }

private:
  Vector gradient(const Vector& x) const {
    if (scalar_hessian_) return kappa_ * x + qp_.linear;
    return qp_.hessian * x + qp_.linear;
  }

  double max_violation(const Vector& x) const {
    if (rows_ == 0) return 0.0;
    return (qp_.a * x - qp_.b).maxCoeff();
  }

  bool is_active(Index i) const {
    return std::abs(qp_.a.row(i).dot(x_) - qp_.b[i]) <=
           opt_.feasibility_tol * (1.0 + std::abs(qp_.b[i]));
  }

  void seed_working_set(const std::vector<int>& warm) {
    ws_.clear();
    for (int i : warm) {
      if (i < 0 || i >= rows_ || in_ws_[i] || !is_active(i)) continue;
      Matrix trial(ws_.size() + 1, nv_);
      for (std::size_t k = 0; k < ws_.size(); ++k) trial.row(k) = qp_.a.row(ws_[k]);
      trial.row(ws_.size()) = qp_.a.row(i);
      Eigen::ColPivHouseholderQR<Matrix> qr(trial.transpose());
      qr.setThreshold(1e-10);
      if (qr.rank() == static_cast<Index>(ws_.size()) + 1) {
        ws_.push_back(i);
        in_ws_[i] = true;
      }
    }
  }

  void factor() {
    const Index k = static_cast<Index>(ws_.size());
    if (k == 0) {
      z_ = Matrix::Identity(nv_, nv_);
      return;
    }
    Matrix awt(nv_, k);
    for (Index c = 0; c < k; ++c) awt.col(c) = qp_.a.row(ws_[c]).transpose();
    qr_.compute(awt);
    const Matrix q = qr_.householderQ();
    z_ = q.rightCols(nv_ - k);
  }

  Step compute_step(const Vector& g) const {
    Step s;
    if (z_.cols() == 0) {
      s.p = Vector::Zero(nv_);
      return s;
    }
    const Vector gr = z_.transpose() * g;
    if (scalar_hessian_) {
      if (kappa_ > 0.0) {
        s.p = -(z_ * gr) / kappa_;
        return s;
      }
      if (inf_norm(gr) <= 1e-12 * (1.0 + inf_norm(g))) {
        s.p = Vector::Zero(nv_);
        return s;
      }
      s.p = -(z_ * gr);
      s.p /= inf_norm(s.p);
      s.ray = true;
      return s;
    }
    const Matrix hr = z_.transpose() * qp_.hessian * z_;
    Eigen::SelfAdjointEigenSolver<Matrix> es(hr);
    const Vector& lam = es.eigenvalues();
    const Matrix& v = es.eigenvectors();
    const Vector gv = v.transpose() * gr;
    const double thr = 1e-12 * hess_scale_;
    Vector null_part = Vector::Zero(gv.size());
    Vector newton = Vector::Zero(gv.size());
    for (Index i = 0; i < gv.size(); ++i) {
      if (lam[i] <= thr) {
        null_part[i] = -gv[i];
      } else {
        newton[i] = -gv[i] / lam[i];
      }
    }
    if (inf_norm(null_part) > 1e-12 * (1.0 + inf_norm(g))) {
      s.p = z_ * (v * null_part);
      s.p /= inf_norm(s.p);
      s.ray = true;
      return s;
    }
    s.p = z_ * (v * newton);
    return s;
  }

  Vector working_multipliers(const Vector& g) const {
    if (ws_.empty()) return Vector();
    return qr_.solve(Vector(-g));
  }

  void finish(QpResult& res, const Vector& g, const Vector& lambda) {
    res.x = x_;
    res.working_set = ws_;
    res.multipliers = Vector::Zero(rows_);
    Vector stationarity = g;
    double dual_infeas = 0.0;
    for (std::size_t k = 0; k < ws_.size(); ++k) {
      res.multipliers[ws_[k]] = lambda[k];
      stationarity += lambda[k] * qp_.a.row(ws_[k]).transpose();
      dual_infeas = std::max(dual_infeas, -lambda[k]);
    }
    const double primal = std::max(0.0, max_violation(x_));
    res.kkt_residual = std::max({inf_norm(stationarity), primal, dual_infeas});
    res.objective = 0.5 * x_.dot(scalar_hessian_ ? Vector(kappa_ * x_) : Vector(qp_.hessian * x_)) +
                    qp_.linear.dot(x_);
  }

  const QpProblem& qp_;
  QpOptions opt_;
  Index nv_ = 0;
  Index rows_ = 0;
  Vector row_norm_;
  bool scalar_hessian_ = false;
  double kappa_ = 0.0;
  double hess_scale_ = 1.0;
  Vector x_;
  std::vector<int> ws_;
  std::vector<bool> in_ws_;
  std::vector<double> ratios_;
  Eigen::HouseholderQR<Matrix> qr_;
  Matrix z_;
};

// Goldfarb-Idnani dual method. Rows are handled in the form n' x >= b' with
// n = -a, so the slack of row i is b_i - a_i x. The factorization keeps
// J' N_active = [R; 0] with J = L^{-T} Q for H = L L'.
class DualActiveSetSolver {
public:
  DualActiveSetSolver(const QpProblem& qp, const QpOptions& options) : qp_(qp), opt_(options) {
    nv_ = qp.linear.size();
    rows_ = qp.a.rows();
  }

  /// False if H is not numerically positive definite.
  bool factor_hessian() {
    const double d0 = nv_ > 0 ? qp_.hessian(0, 0) : 0.0;
    const bool scalar = (qp_.hessian - d0 * Matrix::Identity(nv_, nv_)).cwiseAbs().maxCoeff() == 0.0;
    if (scalar) {
      if (!(d0 > 0.0)) return false;
      j_ = Matrix::Identity(nv_, nv_) / std::sqrt(d0);
      x_ = -qp_.linear / d0;
      return true;
    }
    Eigen::LLT<Matrix> llt(qp_.hessian);
    if (llt.info() != Eigen::Success) return false;
    const Matrix l = llt.matrixL();
    const double scale = std::max(1.0, qp_.hessian.cwiseAbs().maxCoeff());
    if (l.diagonal().minCoeff() <= 1e-7 * std::sqrt(scale)) return false;
    j_ = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(nv_, nv_)).transpose();
    x_ = -llt.solve(qp_.linear);
    return true;
  }

  QpResult run() {
    QpResult res;
    r_ = Matrix::Zero(nv_, nv_);
    in_active_.assign(rows_, false);
    active_.clear();
    u_.clear();
    const Vector row_norm = qp_.a.rowwise().norm();

    for (res.iterations = 0; res.iterations < opt_.max_iterations;) {
      // Most violated row, scaled by its norm.
      const Vector slack = qp_.b - qp_.a * x_;
      int p = -1;
      double worst = 0.0;
      for (Index i = 0; i < rows_; ++i) {
        if (in_active_[i]) continue;
        const double tol = 1e-12 * (1.0 + std::abs(qp_.b[i]) + row_norm[i] * inf_norm(x_));
        if (slack[i] >= -tol) continue;
        const double v = slack[i] / std::max(row_norm[i], 1e-300);
        if (v < worst) {
          worst = v;
          p = static_cast<int>(i);
        }
      }
      if (p < 0) {
        res.status = QpStatus::Optimal;
        return finish(res);
      }

      double up = 0.0;
      const Vector np = -qp_.a.row(p).transpose();
      for (;;) {
        ++res.iterations;
        if (res.iterations > opt_.max_iterations) {
          res.status = QpStatus::MaxIterations;
          return finish(res);
        }
        const Index k = static_cast<Index>(active_.size());
        const Vector d = j_.transpose() * np;
        const Vector z = j_.rightCols(nv_ - k) * d.tail(nv_ - k);
        Vector r(k);
        if (k > 0) r = r_.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(d.head(k));

        double t1 = std::numeric_limits<double>::infinity();
        int l = -1;
        for (Index q = 0; q < k; ++q) {
          if (r[q] > 1e-14 * (1.0 + std::abs(u_[q]))) {
            const double ratio = u_[q] / r[q];
            if (ratio < t1 || (ratio == t1 && active_[q] < active_[l])) {
              t1 = ratio;
              l = static_cast<int>(q);
            }
          }
        }
        const double zn = z.dot(np);
        const double sp = qp_.b[p] - qp_.a.row(p).dot(x_);
        double t2 = std::numeric_limits<double>::infinity();
        if (z.norm() > 1e-13 * (1.0 + np.norm()) && zn > 0.0) t2 = std::max(0.0, -sp / zn);

        const double t = std::min(t1, t2);
        if (!std::isfinite(t)) {
          res.status = QpStatus::Infeasible;
          return finish(res);
        }
        for (Index q = 0; q < k; ++q) u_[q] -= t * r[q];
        up += t;
        if (std::isfinite(t2)) x_ += t * z;
        if (t2 <= t1) {
          add_constraint(p, d);
          u_.push_back(up);
          break;
        }
        drop_constraint(l);
      }
    }
    res.status = QpStatus::MaxIterations;
    return finish(res);
  }

private:
  static void givens(double a, double b, double& c, double& s, double& h) {
    h = std::hypot(a, b);
    if (h == 0.0) {
      c = 1.0;
      s = 0.0;
      return;
    }
    c = a / h;
    s = b / h;
  }

  void rotate_columns(Index i, Index j, double c, double s) {
    for (Index row = 0; row < nv_; ++row) {
      const double a = j_(row, i);
      const double b = j_(row, j);
      j_(row, i) = c * a + s * b;
      j_(row, j) = -s * a + c * b;
    }
  }

  void add_constraint(int p, Vector d) {
    const Index k = static_cast<Index>(active_.size());
    for (Index q = nv_ - 1; q > k; --q) {
      if (d[q] == 0.0) continue;
      double c = 0.0, s = 0.0, h = 0.0;
      givens(d[q - 1], d[q], c, s, h);
      d[q - 1] = h;
      d[q] = 0.0;
      rotate_columns(q - 1, q, c, s);
    }
    r_.col(k).head(k + 1) = d.head(k + 1);
    active_.push_back(p);
    in_active_[p] = true;
  }

  void drop_constraint(int l) {
    const Index k = static_cast<Index>(active_.size());
    for (Index c = l; c + 1 < k; ++c) r_.col(c).head(k) = r_.col(c + 1).head(k);
    r_.col(k - 1).setZero();
    for (Index q = l; q + 1 < k; ++q) {
      double c = 0.0, s = 0.0, h = 0.0;
      givens(r_(q, q), r_(q + 1, q), c, s, h);
      for (Index col = q; col + 1 < k; ++col) {
        const double a = r_(q, col);
        const double b = r_(q + 1, col);
        r_(q, col) = c * a + s * b;
        r_(q + 1, col) = -s * a + c * b;
      }
      r_(q + 1, q) = 0.0;
      rotate_columns(q, q + 1, c, s);
    }
    in_active_[active_[l]] = false;
    active_.erase(active_.begin() + l);
    u_.erase(u_.begin() + l);
  }

  QpResult finish(QpResult& res) {
    res.x = x_;
    res.working_set = active_;
    res.multipliers = Vector::Zero(rows_);
    const Vector g = qp_.hessian * x_ + qp_.linear;
    Vector stationarity = g;
    double dual_infeas = 0.0;
    for (std::size_t q = 0; q < active_.size(); ++q) {
      res.multipliers[active_[q]] = u_[q];
      stationarity += u_[q] * qp_.a.row(active_[q]).transpose();
      dual_infeas = std::max(dual_infeas, -u_[q]);
    }
    const double primal = rows_ > 0 ? std::max(0.0, (qp_.a * x_ - qp_.b).maxCoeff()) : 0.0;
    res.kkt_residual = std::max({inf_norm(stationarity), primal, dual_infeas});
    res.objective = 0.5 * x_.dot(qp_.hessian * x_) + qp_.linear.dot(x_);
    return res;
  }

  const QpProblem& qp_;
  QpOptions opt_;
  Index nv_ = 0;
  Index rows_ = 0;
  Matrix j_;
  Matrix r_;
  Vector x_;
  std::vector<int> active_;
  std::vector<double> u_;
  std::vector<bool> in_active_;
};

}  // namespace

QpResult solve_qp(const QpProblem& problem, const Vector& x0, const std::vector<int>& warm_working_set,
                  const QpOptions& options) {
  const Index nv = problem.linear.size();
  if (problem.hessian.rows() != nv || problem.hessian.cols() != nv || problem.a.cols() != nv ||
      problem.a.rows() != problem.b.size() || x0.size() != nv) {
    throw Error(Errc::ShapeMismatch, "inconsistent QP dimensions");
  }
  if (options.method != QpMethod::Primal) {
    DualActiveSetSolver dual(problem, options);
    if (dual.factor_hessian()) return dual.run();
    if (options.method == QpMethod::Dual) {
      throw Error(Errc::ShapeMismatch, "dual QP method needs a positive definite Hessian");
    }
  }
  ActiveSetSolver solver(problem, options);
  return solver.run(x0, warm_working_set);
}

}  // namespace rebal
