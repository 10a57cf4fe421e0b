#pragma once

// Fibered finite MDPs: every state owns a contiguous block ("fiber") of the
// action index space, so rewards are vectors of length m and transitions are
// row-stochastic m x n matrices.

#include "rebal/types.hpp"

#include <functional>
#include <vector>

namespace rebal {

class FiberStructure {
public:
  FiberStructure() = default;

  /// Throws Errc::EmptyFiber if any fiber has no actions.
  explicit FiberStructure(std::vector<int> fiber_sizes);

  int n() const { return static_cast<int>(sizes_.size()); }
  int m() const { return m_; }
  int fiber_size(int state) const { return sizes_[state]; }
  int fiber_begin(int state) const { return offsets_[state]; }
  int fiber_end(int state) const { return offsets_[state + 1]; }
  int state_of(int action) const { return owner_[action]; }
  const std::vector<int>& sizes() const { return sizes_; }
  const std::vector<int>& offsets() const { return offsets_; }

  /// Block-diagonal projection matrix S = diag{1_{m_i}} of shape m x n.
  Matrix projection() const;

  bool operator==(const FiberStructure& other) const { return sizes_ == other.sizes_; }

private:
  std::vector<int> sizes_;
  std::vector<int> offsets_{0};
  std::vector<int> owner_;
  int m_ = 0;
};

/// Deterministic stationary policy: one action per state, stored as the
/// offset inside the state's fiber.
struct Policy {
  std::vector<int> choices;

  int global_action(const FiberStructure& fs, int state) const {
    return fs.fiber_begin(state) + choices[state];
  }
  /// Selection matrix Pi (n x m); satisfies Pi * S = I.
  Matrix matrix(const FiberStructure& fs) const;

  bool operator==(const Policy& other) const = default;
};

/// Unvalidated MDP fields as they come from a file or a caller.
struct RawMdp {
  int n = 0;
  std::vector<int> fibers;
  double gamma = 0.0;
  std::vector<double> rewards;
  std::vector<std::vector<double>> transitions;
};

class Mdp {
public:
  /// Validates and constructs. Rows within 1e-9 of stochastic are renormalized.
  Mdp(FiberStructure structure, double gamma, Vector rewards, Matrix transitions);

  const FiberStructure& structure() const { return structure_; }
  double gamma() const { return gamma_; }
  const Vector& rewards() const { return rewards_; }
  const Matrix& transitions() const { return transitions_; }
  int n() const { return structure_.n(); }
  int m() const { return structure_.m(); }

  /// Same model, different reward vector.
  Mdp with_rewards(const Vector& rewards) const;
  /// Same reward, different transition matrix (validated).
  Mdp with_transitions(const Matrix& transitions) const;

private:
  FiberStructure structure_;
  double gamma_;
  Vector rewards_;
  Matrix transitions_;
};

inline constexpr double kStochasticTol = 1e-9;

Mdp validate_mdp(const RawMdp& raw);

/// Checks row-stochasticity of an m x n matrix; throws NonStochasticRow naming the row.
void check_row_stochastic(const Matrix& f, double tol = kStochasticTol);

/// V = (I - gamma F_pi)^{-1} R_pi by dense LU.
Vector policy_evaluate(const Mdp& mdp, const Policy& policy);

/// Q = (I_m - gamma F Pi)^{-1} R.
Vector q_evaluate(const Mdp& mdp, const Policy& policy);

/// A(u) = R(u) + gamma F(u,:) V_pi - V_pi(s(u)).
Vector advantage(const Mdp& mdp, const Policy& policy);

/// (T V)_i = max_{j in fiber i} R_j + gamma F(j,:) V.
Vector bellman_optimal_operator(const Mdp& mdp, const Vector& value);

/// Per-fiber argmax of `reward`, lowest index on ties.
Policy greedy_policy(const Vector& reward, const FiberStructure& fs);

struct OptimalSolution {
  Policy policy;
  Vector value;
  /// True when some fiber has more than one optimal action.
  bool multiple_optima = false;
  int iterations = 0;
};

/// Value iteration until the greedy policy is stable for two sweeps and the
/// sup-norm step is below `tol`, then exact evaluation plus policy-improvement
/// polishing so that the returned value is a fixed point to machine precision.
OptimalSolution solve_optimal(const Mdp& mdp, double tol = 1e-10);

/// Total number of deterministic stationary policies (product of fiber sizes).
long long policy_count(const FiberStructure& fs);

/// Visits every deterministic stationary policy in lexicographic order.
void for_each_policy(const FiberStructure& fs, const std::function<void(const Policy&)>& visit);

}  // namespace rebal
