#pragma once

// Advantage-preserving reward transforms R -> R + B delta with B = gamma F - S,
// the normal-form predicate and projection, orbit membership, and
// permutation-symmetry checks.

#include "rebal/constraints.hpp"
#include "rebal/mdp.hpp"

#include <optional>
#include <vector>

namespace rebal {

/// B = gamma F - S (m x n).
Matrix input_matrix(const Mdp& mdp);

/// R + B delta for the model's own reward.
Vector apply_transform(const Mdp& mdp, const Vector& delta);
/// R + B delta for an arbitrary reward on the same model.
Vector apply_transform(const Mdp& mdp, const Vector& reward, const Vector& delta);

/// Every fiber maximum lies in [-tol, tol] and every entry is <= tol.
bool is_normal(const Vector& reward, const FiberStructure& fs, double tol = 1e-9);

struct ShiftResult {
  Vector reward;
  Vector delta;
};

/// Constant shift delta = max(R) / (1 - gamma) * 1, making the reward nonpositive.
ShiftResult shift_nonpositive(const Mdp& mdp);

struct NormalForm {
  Vector reward;  ///< normal representative R + B V*
  Vector value;   ///< V*, the offset that identifies the orbit point
  Policy policy;
  bool multiple_optima = false;
};

NormalForm normalize_exact(const Mdp& mdp);

/// Least-squares solve of B delta = reward2 - reward1; returns delta when the
/// residual sup-norm is at most `tol`.
std::optional<Vector> same_orbit(const Vector& reward1, const Vector& reward2, const Mdp& model,
                                 double tol = 1e-8);

/// Pair of permutations acting by (P v)[i] = v[perm[i]].
struct PermutationPair {
  std::vector<int> state_perm;
  std::vector<int> action_perm;
};

/// v permuted as (P v)[i] = v[perm[i]].
Vector permute(const std::vector<int>& perm, const Vector& v);

/// Throws ShapeMismatch for malformed permutations and IncompatibleFibers when
/// the action permutation does not carry fiber i onto fiber state_perm[i].
void check_fiber_compatible(const PermutationPair& pair, const FiberStructure& fs);

/// A_u R = R and A_u F A_x^T = F within `tol` for every pair.
bool check_g_invariance(const Mdp& mdp, const std::vector<PermutationPair>& perms, double tol = 1e-12);

/// Rows +-(A_x - I) delta <= 0 with zero reward coefficients; zero and
/// duplicate rows are dropped, so the identity contributes nothing.
LinearConstraintSet invariance_constraints(const std::vector<PermutationPair>& perms, const FiberStructure& fs);

}  // namespace rebal
