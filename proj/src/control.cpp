#include "rebal/control.hpp"

#include "rebal/transforms.hpp"

namespace rebal {

Vector h_max(const Vector& reward, const FiberStructure& fs) {
  if (reward.size() != fs.m()) throw Error(Errc::ShapeMismatch, "reward length must equal m");
  Vector y(fs.n());
  for (int i = 0; i < fs.n(); ++i) y[i] = reward.segment(fs.fiber_begin(i), fs.fiber_size(i)).maxCoeff();
  return y;
}

namespace {

void require_nonpositive(const Vector& reward, double tol) {
  for (Index j = 0; j < reward.size(); ++j) {
    if (reward[j] > tol) {
      throw Error(Errc::PositiveReward, "reward " + std::to_string(j) + " is positive");
    }
  }
}

}  // namespace

bool admissible_contains(const Mdp& mdp, const Vector& delta, double tol) {
  require_nonpositive(mdp.rewards(), tol);
  if (delta.maxCoeff() > tol) return false;
  return apply_transform(mdp, delta).maxCoeff() <= tol;
}

Vector law_ideal(const Mdp& mdp) { return solve_optimal(mdp).value; }

Vector law_output_feedback(const Vector& reward, const FiberStructure& fs) { return h_max(reward, fs); }

Vector law_rbs(const Mdp& mdp) { return law_rbs(mdp, mdp.rewards()); }

Vector law_rbs(const Mdp& mdp, const Vector& reward) {
  const auto& fs = mdp.structure();
  if (reward.size() != fs.m()) throw Error(Errc::ShapeMismatch, "reward length must equal m");
  Vector delta(fs.n());
  for (int i = 0; i < fs.n(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int j = fs.fiber_begin(i); j < fs.fiber_end(i); ++j) {
      best = std::max(best, reward[j] / (1.0 - mdp.gamma() * mdp.transitions()(j, i)));
    }
    delta[i] = best;
  }
  return delta;
}

LinearConstraintSet invariant_set_constraints(const FiberStructure& fs, double gamma) {
  const int n = fs.n();
  const int m = fs.m();
  const int d = n + m * n;
  Matrix p = Matrix::Zero(d, m);
  Matrix q = Matrix::Zero(d, n);
  for (int i = 0; i < n; ++i) q(i, i) = 1.0;
  for (int j = 0; j < m; ++j) {
    const int i = fs.state_of(j);
    for (int k = 0; k < n; ++k) {
      const int row = invariant_set_row(fs, j, k);
      p(row, j) = 1.0;
      q(row, k) += gamma;
      q(row, i) -= 1.0;
    }
  }
  return {std::move(p), std::move(q)};
}

LinearConstraintSet invariant_set_constraints(const Vector& reward, const FiberStructure& fs, double gamma,
                                              double tol) {
  if (reward.size() != fs.m()) throw Error(Errc::ShapeMismatch, "reward length must equal m");
  require_nonpositive(reward, tol);
  return invariant_set_constraints(fs, gamma);
}

bool invariant_set_contains(const Vector& reward, const FiberStructure& fs, double gamma, const Vector& delta,
                            double tol) {
  if (reward.size() != fs.m() || delta.size() != fs.n()) {
    throw Error(Errc::ShapeMismatch, "reward/delta dimensions do not match the fiber structure");
  }
  // Row-by-row evaluation of the set without materializing it.
  if (delta.maxCoeff() > tol) return false;
  const double dmax = delta.maxCoeff();
  for (int j = 0; j < fs.m(); ++j) {
    const int i = fs.state_of(j);
    if (gamma * dmax + reward[j] - delta[i] > tol) return false;
  }
  return true;
}

LinearConstraintSet ideal_constraints(const Mdp& mdp) {
  const int n = mdp.n();
  const int m = mdp.m();
  Matrix p(n + m, m);
  p << Matrix::Zero(n, m), Matrix::Identity(m, m);
  Matrix q(n + m, n);
  q << Matrix::Identity(n, n), input_matrix(mdp);
  return {std::move(p), std::move(q)};
}

bool robust_condition_check(const Vector& reward, const Vector& delta, double alpha, double gamma,
                            const FiberStructure& fs, double tol) {
  if (!invariant_set_contains(reward, fs, gamma, delta, tol)) return false;
  const Vector y = h_max(reward, fs);
  const double rhs_shift = alpha * inf_norm(y);
  const double lhs_shift = gamma * inf_norm(delta);
  for (int i = 0; i < fs.n(); ++i) {
    if (delta[i] + lhs_shift > y[i] + rhs_shift + tol) return false;
  }
  return true;
}

bool output_feedback_feasible(const LinearConstraintSet& set, const Vector& reward, const FiberStructure& fs,
                              double tol) {
  return set.contains(reward, h_max(reward, fs), tol);
}

ModelSource fixed_model(Matrix transitions) {
  return [f = std::move(transitions)](int) { return f; };
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Converged: return "converged";
    case StopReason::StepLimit: return "step_limit";
  }
  return "unknown";
}

Trajectory rollout(const Vector& initial_reward, const FiberStructure& fs, double gamma, const FeedbackLaw& law,
                   const ModelSource& models, const std::string& law_name, const RolloutOptions& options) {
  if (initial_reward.size() != fs.m()) throw Error(Errc::ShapeMismatch, "reward length must equal m");
  require_nonpositive(initial_reward, options.positivity_tol);

  Trajectory traj;
  traj.law = law_name;
  Vector reward = initial_reward;
  Vector y = h_max(reward, fs);
  for (int t = 0;; ++t) {
    if (inf_norm(y) < options.threshold) {
      traj.stop = StopReason::Converged;
      break;
    }
    if (t >= options.max_steps) {
      traj.stop = StopReason::StepLimit;
      break;
    }
    StepRecord rec;
    rec.t = t;
    rec.reward = reward;
    rec.output = y;
    rec.delta = law(reward, t);
    if (rec.delta.size() != fs.n()) throw Error(Errc::ShapeMismatch, "control law returned wrong length");
    rec.transitions = models(t);
    if (rec.transitions.rows() != fs.m() || rec.transitions.cols() != fs.n()) {
      throw Error(Errc::ShapeMismatch, "model source returned wrong shape");
    }
    Vector next = reward + gamma * (rec.transitions * rec.delta);
    for (int j = 0; j < fs.m(); ++j) next[j] -= rec.delta[fs.state_of(j)];
    reward = std::move(next);
    y = h_max(reward, fs);
    traj.steps.push_back(std::move(rec));
  }
  traj.final_reward = reward;
  traj.final_output = y;
  return traj;
}

std::vector<Vector> cumulative_inputs(const Trajectory& trajectory) {
  std::vector<Vector> out;
  out.reserve(trajectory.steps.size());
  for (const auto& s : trajectory.steps) {
    out.push_back(out.empty() ? s.delta : Vector(out.back() + s.delta));
  }
  return out;
}

}  // namespace rebal
