#pragma once

// Reward updates under sampled transition models, their deviation from the
// nominal update, and the Monte-Carlo harness.

#include "rebal/control.hpp"
#include "rebal/mdp.hpp"
#include "rebal/ocp.hpp"
#include "rebal/sampling.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rebal {

/// R_hat + (gamma F_hat - S) delta.
Vector perturbed_update(const Vector& reward, const Matrix& sampled, const Vector& delta, double gamma,
                        const FiberStructure& fs);

/// V_{pi,r} - delta + gamma (I - gamma F_pi)^{-1} (F_hat_pi - F_pi) delta: the value,
/// under the true model, of the reward transformed with the sampled model.
Vector cross_model_value_shift(const Mdp& mdp, const Matrix& sampled, const Vector& delta, const Policy& policy);

/// Largest singular value.
double spectral_norm(const Matrix& a);

/// eps2 sqrt(n) gamma / (1 - gamma) |delta|_2.
double deviation_bound(int n, double gamma, double model_error, const Vector& delta);

struct MartingaleTrace {
  std::vector<Vector> values;      ///< M_0 = 0, ..., M_T
  std::vector<Vector> increments;  ///< gamma (F_hat_t - F) delta_t
  /// max_t |F_hat_t - F|_inf over the trajectory.
  double mu_observed = 0.0;
};

MartingaleTrace martingale_track(const Trajectory& trajectory, const Matrix& nominal, double gamma);

enum class BoundLaw { Generic, Hmax };

struct ProbabilityBound {
  double eps_min = 0.0;
  double probability = 1.0;
  /// eps < eps_min: the bound says nothing and probability is 1.
  bool below_threshold = false;
};

/// Tail bound on sup_t |R_hat_t - R_t|_inf. For BoundLaw::Hmax, alpha is
/// taken as gamma and the 1/(1 - gamma) input-decay factor is dropped.
ProbabilityBound probability_bound(double gamma, double alpha, double mu, double h0, double eps, BoundLaw law);

// ---------------------------------------------------------------------------
// Monte-Carlo harness

enum class LawKind { Ideal, OutputFeedback, Rbs, Mpc };

const char* to_string(LawKind law);
/// Accepts ideal | output_feedback | rbs | mpc; throws ParseError otherwise.
LawKind parse_law(const std::string& name);

enum class ModelMode { Exact, FixedWrong, Sampled };

struct McConfig {
  LawKind law = LawKind::OutputFeedback;
  ModelMode model = ModelMode::Sampled;
  /// Used when model == FixedWrong.
  Matrix wrong_model;
  double dev = 0.2;
  MpcConfig mpc;
  RolloutOptions rollout;
  int runs = 500;
  std::uint64_t seed = 1;
  /// 0 selects the hardware concurrency.
  int threads = 0;
};

struct McRun {
  bool failed = false;
  std::string error;
  bool optimal = false;
  StopReason stop = StopReason::StepLimit;
  int steps = 0;
  std::vector<int> final_choices;
  std::vector<double> y_inf;      ///< |y_t|_inf for t = 0..steps (final included)
  std::vector<double> delta_inf;  ///< |delta_t|_inf for t = 0..steps-1
  double mu_observed = 0.0;
};

struct Quantiles {
  double q10 = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
};

struct McSummary {
  std::string law;
  int scenarios = 0;  ///< N for MPC, 0 otherwise
  int runs = 0;
  int failures = 0;
  int step_limited = 0;
  int optimal = 0;
  double pct_optimal = 0.0;  ///< over runs that did not fail
  double mean_steps = 0.0;
  std::vector<Quantiles> y_quantiles;
  std::vector<Quantiles> delta_quantiles;
  /// Final greedy policy (choices) -> run count.
  std::map<std::vector<int>, int> policy_counts;
  double mu_bound = 0.0;
  double mu_observed = 0.0;
  int truncated_rows = 0;
  std::vector<McRun> details;
};

/// Single seeded closed-loop run; exceptions are caught and recorded as a failure.
McRun run_once(const Mdp& mdp, const Policy& optimal, const ModelSampler& sampler, const McConfig& config,
               std::uint64_t seed);

/// Independent runs seeded from config.seed; results are reduced in run order.
/// The MDP reward must be nonpositive.
McSummary monte_carlo(const Mdp& mdp, const McConfig& config);

/// Linear-interpolation quantile of unsorted data (q in [0, 1]).
double quantile(std::vector<double> data, double q);

struct BoundsRow {
  double eps = 0.0;
  double eps_min = 0.0;
  double theory_prob = 1.0;
  double empirical_freq = 0.0;
  bool below_threshold = false;
};

struct BoundsReport {
  std::vector<BoundsRow> rows;
  std::vector<double> sup_deviation;  ///< per run
  double h0 = 0.0;
  double mu = 0.0;
  double mu_observed = 0.0;
  int truncated_rows = 0;
};

/// Runs the output-feedback law on sampled models next to the nominal update
/// and compares sup_t |R_hat_t - R_t|_inf with the h_max-specialized bound,
/// evaluated with the sampler's a-priori mu.
BoundsReport run_bounds(const Mdp& mdp, const McConfig& config, const std::vector<double>& eps_grid);

/// `points` values eps_min * (1 + k * step), k = 1..points.
std::vector<double> default_eps_grid(double eps_min, int points = 10, double step = 0.1);

}  // namespace rebal
