#pragma once

// Finite-horizon normalization problems over a stacked input sequence
// x = [delta_0; ...; delta_{T-1}] in R^{nT}:
//
//   minimize  (1/N) sum_sigma sum_tau -sum_i max_{j in fiber i} R_{sigma,tau+1}^j
//             + eps * |x|^2
//   s.t.      P R_{sigma,tau} + Q delta_tau <= 0
//             R_{sigma,tau+1} = R_{sigma,tau} + B_{sigma,tau} delta_tau,  R_{sigma,0} = R
//
// Every R_{sigma,tau} is affine in x, so the constraints are linear and the
// objective is concave piecewise-linear plus convex quadratic. It is solved
// by a difference-of-convex iteration that fixes the fiber argmax indices and
// solves the remaining QP exactly.

#include "rebal/constraints.hpp"
#include "rebal/control.hpp"
#include "rebal/mdp.hpp"
#include "rebal/qp.hpp"

#include <functional>
#include <string>
#include <vector>

namespace rebal {

class ScenarioProgram {
public:
  /// `models[sigma][tau]` is the transition matrix of scenario sigma at step tau.
  /// `step_set` is instantiated for every (sigma, tau); exact duplicate rows
  /// are merged and rows without decision coefficients are checked then dropped.
  ScenarioProgram(const FiberStructure& fs, double gamma, const Vector& reward,
                  const std::vector<std::vector<Matrix>>& models, double epsilon,
                  const LinearConstraintSet& step_set);

  int horizon() const { return horizon_; }
  int scenarios() const { return scenarios_; }
  int variables() const { return fs_.n() * horizon_; }
  double epsilon() const { return epsilon_; }
  double gamma() const { return gamma_; }
  const FiberStructure& structure() const { return fs_; }
  const Vector& initial_reward() const { return reward_; }

  /// Stacked constraints A x <= b.
  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }
  /// Sum of constraint rows before merging.
  int raw_rows() const { return raw_rows_; }
  /// False if some decision-free row is violated by the initial reward.
  bool constant_rows_hold() const { return constant_rows_hold_; }

  /// R_{sigma,tau} for tau in 0..T.
  Vector predicted_reward(int sigma, int tau, const Vector& x) const;
  /// Objective value at x.
  double objective(const Vector& x) const;
  /// max(A x - b), or -inf with no rows.
  double max_violation(const Vector& x) const;

  /// Linear coefficient and constant of the surrogate obtained by fixing the
  /// fiber argmax (lowest index on ties) at `x`; also returns the index pattern.
  void linearize(const Vector& x, Vector& linear, double& constant, std::vector<int>& pattern) const;

  static std::vector<Vector> split(const Vector& x, int n);

private:
  FiberStructure fs_;
  double gamma_;
  Vector reward_;
  int horizon_;
  int scenarios_;
  double epsilon_;
  // gain_[sigma][tau] maps x to R_{sigma,tau} - R (m x nT), tau in 0..T.
  std::vector<std::vector<Matrix>> gain_;
  Matrix a_;
  Vector b_;
  int raw_rows_ = 0;
  bool constant_rows_hold_ = true;
};

/// Scenario program with the model-invariant set instantiated per (sigma, tau).
/// Throws PositiveReward unless reward <= 1e-9.
ScenarioProgram build_scenario_program(const Vector& reward, const std::vector<std::vector<Matrix>>& models,
                                       int horizon, double epsilon, double gamma, const FiberStructure& fs);

struct DcaOptions {
  double outer_tol = 1e-9;
  int max_outer_iterations = 50;
  double kkt_tol = 1e-8;
  QpOptions qp;
};

struct DcaResult {
  Vector x;
  std::vector<Vector> deltas;
  double objective = 0.0;
  double initial_objective = 0.0;
  /// Objective after every outer iteration, starting with the initial guess.
  std::vector<double> history;
  int outer_iterations = 0;
  bool max_iters_exceeded = false;
  double max_kkt_residual = 0.0;
  int qp_iterations = 0;
};

/// Throws Infeasible if the initial guess violates the constraints (or a
/// decision-free row fails) and Unbounded if a subproblem has no minimizer.
DcaResult solve_dca(const ScenarioProgram& program, const Vector& initial_guess, const DcaOptions& options = {});

/// Sequence delta_tau = max over scenarios of h_max(R_{sigma,tau}), built step
/// by step. It lies in the model-invariant set of every scenario.
Vector hmax_warm_start(const ScenarioProgram& program);

/// Initial guesses for the DC iteration in an MPC step.
enum class MpcStart {
  Zero,  ///< zero sequence
  Hmax,  ///< hmax_warm_start
  Best,  ///< both, keeping the lower objective (zero wins ties)
};

const char* to_string(MpcStart start);
/// Accepts zero | hmax | best; throws ParseError otherwise.
MpcStart parse_mpc_start(const std::string& name);

struct MpcConfig {
  int horizon = 20;
  int scenarios = 4;
  double epsilon = 2.0;
  MpcStart start = MpcStart::Best;
  DcaOptions dca;
};

struct MpcStepResult {
  Vector delta;
  DcaResult solve;
};

/// Draws horizon * scenarios models from `draw_model`, scenario by scenario,
/// solves the scenario program and returns its first input.
MpcStepResult mpc_step(const Vector& reward, const FiberStructure& fs, double gamma,
                       const std::function<Matrix()>& draw_model, const MpcConfig& config);

struct OcpResult {
  Trajectory trajectory;  ///< planned steps on the true model
  double cost = 0.0;      ///< sum_{t=1..T} -sum_i max_j R_t^j
  DcaResult solve;
};

/// Single-scenario program on the true model with the given per-step set and
/// eps = 0, started from the zero sequence.
OcpResult solve_deterministic_ocp(const Mdp& mdp, const Vector& initial_reward, int horizon,
                                  const LinearConstraintSet& step_set, const DcaOptions& options = {});

}  // namespace rebal
