#include "rebal/ocp.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <unordered_map>

namespace rebal {

namespace {

std::string row_key(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::string key(static_cast<std::size_t>(row.size()) * sizeof(double), '\0');
  for (Index c = 0; c < row.size(); ++c) {
    const double v = row[c] + 0.0;  // folds -0.0 into +0.0
    std::memcpy(&key[static_cast<std::size_t>(c) * sizeof(double)], &v, sizeof(double));
  }
  return key;
}

}  // namespace

ScenarioProgram::ScenarioProgram(const FiberStructure& fs, double gamma, const Vector& reward,
                                 const std::vector<std::vector<Matrix>>& models, double epsilon,
                                 const LinearConstraintSet& step_set)
    : fs_(fs), gamma_(gamma), reward_(reward), epsilon_(epsilon) {
  const int n = fs.n();
  const int m = fs.m();
  if (reward.size() != m) throw Error(Errc::ShapeMismatch, "reward length must equal m");
  if (models.empty() || models.front().empty()) {
    throw Error(Errc::ShapeMismatch, "scenario program needs at least one scenario and one step");
  }
  if (epsilon < 0.0) throw Error(Errc::ShapeMismatch, "regularization weight must be nonnegative");
  if (step_set.p.cols() != m || step_set.q.cols() != n) {
    throw Error(Errc::ShapeMismatch, "constraint set does not match the fiber structure");
  }
  scenarios_ = static_cast<int>(models.size());
  horizon_ = static_cast<int>(models.front().size());
  const int nv = n * horizon_;
  const Matrix s = fs.projection();

  gain_.assign(scenarios_, {});
  for (int sg = 0; sg < scenarios_; ++sg) {
    if (static_cast<int>(models[sg].size()) != horizon_) {
      throw Error(Errc::ShapeMismatch, "all scenarios must cover the same horizon");
    }
    auto& g = gain_[sg];
    g.reserve(horizon_ + 1);
    g.push_back(Matrix::Zero(m, nv));
    for (int tau = 0; tau < horizon_; ++tau) {
      const Matrix& f = models[sg][tau];
      if (f.rows() != m || f.cols() != n) throw Error(Errc::ShapeMismatch, "scenario model has wrong shape");
      Matrix next = g.back();
      next.block(0, tau * n, m, n) = gamma * f - s;
      g.push_back(std::move(next));
    }
  }

  const Index d = step_set.rows();
  const Vector rhs = -(step_set.p * reward);
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> bounds;
  std::unordered_map<std::string, std::size_t> seen;
  for (int sg = 0; sg < scenarios_; ++sg) {
    for (int tau = 0; tau < horizon_; ++tau) {
      Matrix block = step_set.p * gain_[sg][tau];
      block.block(0, tau * n, d, n) += step_set.q;
      for (Index r = 0; r < d; ++r) {
        ++raw_rows_;
        if (block.row(r).cwiseAbs().maxCoeff() == 0.0) {
          if (rhs[r] < -1e-9) constant_rows_hold_ = false;
          continue;
        }
        auto key = row_key(block.row(r));
        auto it = seen.find(key);
        if (it != seen.end()) {
          bounds[it->second] = std::min(bounds[it->second], rhs[r]);
          continue;
        }
        seen.emplace(std::move(key), rows.size());
        rows.push_back(block.row(r));
        bounds.push_back(rhs[r]);
      }
    }
  }
  a_.resize(static_cast<Index>(rows.size()), nv);
  b_.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    a_.row(r) = rows[r];
    b_[r] = bounds[r];
  }
}

Vector ScenarioProgram::predicted_reward(int sigma, int tau, const Vector& x) const {
  return reward_ + gain_[sigma][tau] * x;
}

double ScenarioProgram::objective(const Vector& x) const {
  double total = 0.0;
  for (int sg = 0; sg < scenarios_; ++sg) {
    for (int tau = 1; tau <= horizon_; ++tau) {
      const Vector r = predicted_reward(sg, tau, x);
      for (int i = 0; i < fs_.n(); ++i) total -= r.segment(fs_.fiber_begin(i), fs_.fiber_size(i)).maxCoeff();
    }
  }
  return total / scenarios_ + epsilon_ * x.squaredNorm();
}

double ScenarioProgram::max_violation(const Vector& x) const {
  if (a_.rows() == 0) return -std::numeric_limits<double>::infinity();
  return (a_ * x - b_).maxCoeff();
}

void ScenarioProgram::linearize(const Vector& x, Vector& linear, double& constant, std::vector<int>& pattern) const {
  linear = Vector::Zero(variables());
  constant = 0.0;
  pattern.clear();
  const double w = 1.0 / scenarios_;
  for (int sg = 0; sg < scenarios_; ++sg) {
    for (int tau = 1; tau <= horizon_; ++tau) {
      const Vector r = predicted_reward(sg, tau, x);
      for (int i = 0; i < fs_.n(); ++i) {
        Index off = 0;
        r.segment(fs_.fiber_begin(i), fs_.fiber_size(i)).maxCoeff(&off);
        const int j = fs_.fiber_begin(i) + static_cast<int>(off);
        pattern.push_back(j);
        linear -= w * gain_[sg][tau].row(j).transpose();
        constant -= w * reward_[j];
      }
    }
  }
}

std::vector<Vector> ScenarioProgram::split(const Vector& x, int n) {
  std::vector<Vector> out;
  for (Index t = 0; t + n <= x.size(); t += n) out.push_back(x.segment(t, n));
  return out;
}

ScenarioProgram build_scenario_program(const Vector& reward, const std::vector<std::vector<Matrix>>& models,
                                       int horizon, double epsilon, double gamma, const FiberStructure& fs) {
  if (horizon < 1) throw Error(Errc::ShapeMismatch, "horizon must be at least 1");
  for (const auto& sc : models) {
    if (static_cast<int>(sc.size()) != horizon) {
      throw Error(Errc::ShapeMismatch, "each scenario needs one model per step of the horizon");
    }
  }
  return ScenarioProgram(fs, gamma, reward, models, epsilon, invariant_set_constraints(reward, fs, gamma));
}

DcaResult solve_dca(const ScenarioProgram& program, const Vector& initial_guess, const DcaOptions& options) {
  const int nv = program.variables();
  if (initial_guess.size() != nv) throw Error(Errc::ShapeMismatch, "initial guess has wrong length");
  if (!program.constant_rows_hold()) {
    throw Error(Errc::Infeasible, "constraint set is empty for the current reward");
  }
  const double feas_tol = options.qp.feasibility_tol * (1.0 + inf_norm(program.b()));
  if (program.max_violation(initial_guess) > feas_tol) {
    throw Error(Errc::Infeasible, "initial guess violates the program constraints");
  }

  DcaResult res;
  res.x = initial_guess;
  res.objective = program.objective(res.x);
  res.initial_objective = res.objective;
  res.history.push_back(res.objective);

  QpProblem qp;
  qp.hessian = 2.0 * program.epsilon() * Matrix::Identity(nv, nv);
  qp.a = program.a();
  qp.b = program.b();

  std::vector<int> working;
  std::vector<int> pattern;
  std::vector<int> next_pattern;
  double constant = 0.0;
  program.linearize(res.x, qp.linear, constant, pattern);

  bool converged = false;
  while (res.outer_iterations < options.max_outer_iterations) {
    const QpResult sub = solve_qp(qp, res.x, working, options.qp);
    if (sub.status == QpStatus::Unbounded) throw Error(Errc::Unbounded, "convex subproblem is unbounded");
    if (sub.status == QpStatus::InfeasibleStart) throw Error(Errc::Infeasible, "iterate left the feasible set");
    if (sub.status == QpStatus::Infeasible) throw Error(Errc::Infeasible, "convex subproblem is infeasible");
    ++res.outer_iterations;
    res.qp_iterations += sub.iterations;
    res.max_kkt_residual = std::max(res.max_kkt_residual, sub.kkt_residual);

    const double f_new = program.objective(sub.x);
    // The surrogate majorizes the objective, so a rise can only be round-off.
    if (f_new > res.objective + 1e-12 * (1.0 + std::abs(res.objective))) {
      converged = true;
      break;
    }
    const double improvement = res.objective - f_new;
    res.x = sub.x;
    res.objective = f_new;
    res.history.push_back(f_new);
    working = sub.working_set;

    program.linearize(res.x, qp.linear, constant, next_pattern);
    const bool stable = next_pattern == pattern;
    pattern.swap(next_pattern);
    if (stable || improvement < options.outer_tol) {
      converged = true;
      break;
    }
  }
  res.max_iters_exceeded = !converged;
  res.deltas = ScenarioProgram::split(res.x, program.structure().n());
  return res;
}

Vector hmax_warm_start(const ScenarioProgram& program) {
  const auto& fs = program.structure();
  const int n = fs.n();
  Vector x = Vector::Zero(program.variables());
  for (int tau = 0; tau < program.horizon(); ++tau) {
    Vector step = Vector::Constant(n, -std::numeric_limits<double>::infinity());
    for (int sg = 0; sg < program.scenarios(); ++sg) {
      step = step.cwiseMax(h_max(program.predicted_reward(sg, tau, x), fs));
    }
    x.segment(tau * n, n) = step;
  }
  return x;
}

const char* to_string(MpcStart start) {
  switch (start) {
    case MpcStart::Zero: return "zero";
    case MpcStart::Hmax: return "hmax";
    case MpcStart::Best: return "best";
  }
  return "unknown";
}

MpcStart parse_mpc_start(const std::string& name) {
  if (name == "zero") return MpcStart::Zero;
  if (name == "hmax") return MpcStart::Hmax;
  if (name == "best") return MpcStart::Best;
  throw Error(Errc::ParseError, "unknown MPC start '" + name + "' (expected zero, hmax or best)");
}

MpcStepResult mpc_step(const Vector& reward, const FiberStructure& fs, double gamma,
                       const std::function<Matrix()>& draw_model, const MpcConfig& config) {
  if (config.horizon < 1 || config.scenarios < 1) {
    throw Error(Errc::ShapeMismatch, "MPC needs horizon >= 1 and scenarios >= 1");
  }
  std::vector<std::vector<Matrix>> models(config.scenarios);
  for (auto& sc : models) {
    sc.reserve(config.horizon);
    for (int tau = 0; tau < config.horizon; ++tau) sc.push_back(draw_model());
  }
  const ScenarioProgram program =
      build_scenario_program(reward, models, config.horizon, config.epsilon, gamma, fs);
  MpcStepResult out;
  if (config.start == MpcStart::Hmax) {
    out.solve = solve_dca(program, hmax_warm_start(program), config.dca);
  } else {
    out.solve = solve_dca(program, Vector::Zero(program.variables()), config.dca);
    if (config.start == MpcStart::Best) {
      DcaResult warm = solve_dca(program, hmax_warm_start(program), config.dca);
      if (warm.objective < out.solve.objective - 1e-12 * (1.0 + std::abs(out.solve.objective))) {
        out.solve = std::move(warm);
      }
    }
  }
  out.delta = out.solve.deltas.front();
  return out;
}

OcpResult solve_deterministic_ocp(const Mdp& mdp, const Vector& initial_reward, int horizon,
                                  const LinearConstraintSet& step_set, const DcaOptions& options) {
  if (horizon < 1) throw Error(Errc::ShapeMismatch, "horizon must be at least 1");
  const auto& fs = mdp.structure();
  for (Index j = 0; j < initial_reward.size(); ++j) {
    if (initial_reward[j] > 1e-9) throw Error(Errc::PositiveReward, "initial reward must be nonpositive");
  }
  const std::vector<std::vector<Matrix>> models{std::vector<Matrix>(horizon, mdp.transitions())};
  const ScenarioProgram program(fs, mdp.gamma(), initial_reward, models, 0.0, step_set);

  OcpResult out;
  out.solve = solve_dca(program, Vector::Zero(program.variables()), options);
  out.cost = out.solve.objective;

  Trajectory& traj = out.trajectory;
  traj.law = "ocp";
  for (int t = 0; t < horizon; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.reward = program.predicted_reward(0, t, out.solve.x);
    rec.output = h_max(rec.reward, fs);
    rec.delta = out.solve.deltas[t];
    rec.transitions = mdp.transitions();
    traj.steps.push_back(std::move(rec));
  }
  traj.final_reward = program.predicted_reward(0, horizon, out.solve.x);
  traj.final_output = h_max(traj.final_reward, fs);
  traj.stop = inf_norm(traj.final_output) < RolloutOptions{}.threshold ? StopReason::Converged : StopReason::StepLimit;
  return out;
}

}  // namespace rebal
