#pragma once

// Normalizing control laws for the reward dynamics R_{t+1} = R_t + B_t delta_t,
// the admissible and model-invariant constraint sets, and closed-loop rollout.

#include "rebal/constraints.hpp"
#include "rebal/mdp.hpp"

#include <functional>
#include <string>
#include <vector>

namespace rebal {

/// Per-fiber maximum of the reward.
Vector h_max(const Vector& reward, const FiberStructure& fs);

/// delta <= tol and R + B delta <= tol. Throws PositiveReward unless R <= tol.
bool admissible_contains(const Mdp& mdp, const Vector& delta, double tol = 1e-9);

/// delta = V*.
Vector law_ideal(const Mdp& mdp);

/// delta = h_max(R).
Vector law_output_feedback(const Vector& reward, const FiberStructure& fs);

/// delta^i = max_{j in fiber i} R^j / (1 - gamma F(j, i)) for the model's own reward.
Vector law_rbs(const Mdp& mdp);
/// Same law for an arbitrary reward on the model of `mdp`.
Vector law_rbs(const Mdp& mdp, const Vector& reward);

/// Model-invariant set as rows of P R + Q delta <= 0:
///   delta^i <= 0                       (rows 0 .. n-1)
///   gamma delta^k + R^j - delta^i <= 0 (row n + j*n + k, where i owns j)
/// The rows do not depend on R.
LinearConstraintSet invariant_set_constraints(const FiberStructure& fs, double gamma);
/// Checks R <= tol (PositiveReward otherwise) before building the rows.
LinearConstraintSet invariant_set_constraints(const Vector& reward, const FiberStructure& fs, double gamma,
                                              double tol = 1e-9);

/// Row index of the triple (owner of j, j, k) in invariant_set_constraints.
inline int invariant_set_row(const FiberStructure& fs, int action, int state_k) {
  return fs.n() + action * fs.n() + state_k;
}

bool invariant_set_contains(const Vector& reward, const FiberStructure& fs, double gamma, const Vector& delta,
                            double tol = 1e-9);

/// Admissible set as constraint rows: P = [0; I_m], Q = [I_n; B].
LinearConstraintSet ideal_constraints(const Mdp& mdp);

/// delta in T(R) and delta^i + gamma |delta|_inf <= h_max^i(R) + alpha |h_max(R)|_inf for all i.
bool robust_condition_check(const Vector& reward, const Vector& delta, double alpha, double gamma,
                            const FiberStructure& fs, double tol = 1e-9);

/// P R + Q h_max(R) <= tol: output feedback is feasible for the constraint set.
bool output_feedback_feasible(const LinearConstraintSet& set, const Vector& reward, const FiberStructure& fs,
                              double tol = 1e-9);

// ---------------------------------------------------------------------------
// Rollout

/// Control input as a function of the current reward and the step index.
using FeedbackLaw = std::function<Vector(const Vector& reward, int t)>;
/// Transition matrix used to update the reward at step t.
using ModelSource = std::function<Matrix(int t)>;

ModelSource fixed_model(Matrix transitions);

enum class StopReason { Converged, StepLimit };

const char* to_string(StopReason reason);

struct StepRecord {
  int t = 0;
  Vector reward;       ///< R_t
  Vector delta;        ///< delta_t
  Vector output;       ///< y_t = h_max(R_t)
  Matrix transitions;  ///< F_t actually used; B_t = gamma F_t - S
};

struct Trajectory {
  std::string law;
  std::vector<StepRecord> steps;
  Vector final_reward;
  Vector final_output;
  StopReason stop = StopReason::StepLimit;

  int length() const { return static_cast<int>(steps.size()); }
};

struct RolloutOptions {
  double threshold = 1e-3;
  int max_steps = 10000;
  double positivity_tol = 1e-9;
};

/// Iterates R_{t+1} = R_t + (gamma F_t - S) delta_t until |h_max(R_t)|_inf < threshold
/// or max_steps inputs have been applied. Throws PositiveReward unless R_0 <= tol.
Trajectory rollout(const Vector& initial_reward, const FiberStructure& fs, double gamma, const FeedbackLaw& law,
                   const ModelSource& models, const std::string& law_name, const RolloutOptions& options = {});

/// Running sums sum_{tau <= t} delta_tau, one entry per recorded step.
std::vector<Vector> cumulative_inputs(const Trajectory& trajectory);

}  // namespace rebal
