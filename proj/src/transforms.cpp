#include "rebal/transforms.hpp"

#include <algorithm>
#include <string>

namespace rebal {

Matrix input_matrix(const Mdp& mdp) {
  return mdp.gamma() * mdp.transitions() - mdp.structure().projection();
}

Vector apply_transform(const Mdp& mdp, const Vector& delta) {
  return apply_transform(mdp, mdp.rewards(), delta);
}

Vector apply_transform(const Mdp& mdp, const Vector& reward, const Vector& delta) {
  if (delta.size() != mdp.n()) throw Error(Errc::ShapeMismatch, "delta length must equal n");
  if (reward.size() != mdp.m()) throw Error(Errc::ShapeMismatch, "reward length must equal m");
  // R + gamma F delta - S delta, without forming S.
  Vector out = reward + mdp.gamma() * (mdp.transitions() * delta);
  const auto& fs = mdp.structure();
  for (int j = 0; j < fs.m(); ++j) out[j] -= delta[fs.state_of(j)];
  return out;
}

bool is_normal(const Vector& reward, const FiberStructure& fs, double tol) {
  if (reward.size() != fs.m()) throw Error(Errc::ShapeMismatch, "reward length must equal m");
  for (int i = 0; i < fs.n(); ++i) {
    const double top = reward.segment(fs.fiber_begin(i), fs.fiber_size(i)).maxCoeff();
    if (top > tol || top < -tol) return false;
  }
  return true;
}

ShiftResult shift_nonpositive(const Mdp& mdp) {
  const double top = mdp.rewards().maxCoeff();
  ShiftResult out;
  out.delta = Vector::Constant(mdp.n(), top / (1.0 - mdp.gamma()));
  out.reward = mdp.rewards().array() - top;
  return out;
}

NormalForm normalize_exact(const Mdp& mdp) {
  const OptimalSolution opt = solve_optimal(mdp);
  NormalForm out;
  out.value = opt.value;
  out.policy = opt.policy;
  out.multiple_optima = opt.multiple_optima;
  out.reward = apply_transform(mdp, opt.value);
  return out;
}

std::optional<Vector> same_orbit(const Vector& reward1, const Vector& reward2, const Mdp& model, double tol) {
  if (reward1.size() != model.m() || reward2.size() != model.m()) {
    throw Error(Errc::ShapeMismatch, "reward length must equal m");
  }
  const Matrix b = input_matrix(model);
  const Vector diff = reward2 - reward1;
  const Vector delta = b.colPivHouseholderQr().solve(diff);
  if (inf_norm(Vector(b * delta - diff)) > tol) return std::nullopt;
  return delta;
}

Vector permute(const std::vector<int>& perm, const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = v[perm[i]];
  return out;
}

namespace {

void check_permutation(const std::vector<int>& perm, int size, const char* what) {
  if (static_cast<int>(perm.size()) != size) {
    throw Error(Errc::ShapeMismatch, std::string(what) + " permutation has wrong length");
  }
  std::vector<bool> seen(size, false);
  for (int p : perm) {
    if (p < 0 || p >= size || seen[p]) {
      throw Error(Errc::ShapeMismatch, std::string(what) + " permutation is not a bijection");
    }
    seen[p] = true;
  }
}

}  // namespace

void check_fiber_compatible(const PermutationPair& pair, const FiberStructure& fs) {
  check_permutation(pair.state_perm, fs.n(), "state");
  check_permutation(pair.action_perm, fs.m(), "action");
  for (int j = 0; j < fs.m(); ++j) {
    const int i = fs.state_of(j);
    if (fs.state_of(pair.action_perm[j]) != pair.state_perm[i]) {
      throw Error(Errc::IncompatibleFibers, "action " + std::to_string(j) + " of state " + std::to_string(i) +
                                                " is not mapped into the fiber of state " +
                                                std::to_string(pair.state_perm[i]));
    }
  }
}

bool check_g_invariance(const Mdp& mdp, const std::vector<PermutationPair>& perms, double tol) {
  const auto& fs = mdp.structure();
  const Matrix& f = mdp.transitions();
  const Vector& r = mdp.rewards();
  for (const auto& g : perms) check_fiber_compatible(g, fs);
  for (const auto& g : perms) {
    for (int j = 0; j < fs.m(); ++j) {
      const int gj = g.action_perm[j];
      if (std::abs(r[gj] - r[j]) > tol) return false;
      for (int k = 0; k < fs.n(); ++k) {
        if (std::abs(f(gj, g.state_perm[k]) - f(j, k)) > tol) return false;
      }
    }
  }
  return true;
}

LinearConstraintSet invariance_constraints(const std::vector<PermutationPair>& perms, const FiberStructure& fs) {
  std::vector<Vector> rows;
  auto add = [&rows](const Vector& row) {
    for (const auto& r : rows) {
      if (r == row) return;
    }
    rows.push_back(row);
  };
  for (const auto& g : perms) {
    check_fiber_compatible(g, fs);
    for (int i = 0; i < fs.n(); ++i) {
      if (g.state_perm[i] == i) continue;
      Vector row = Vector::Zero(fs.n());
      row[g.state_perm[i]] += 1.0;
      row[i] -= 1.0;
      add(row);
      add(-row);
    }
  }
  Matrix q(rows.size(), fs.n());
  for (std::size_t r = 0; r < rows.size(); ++r) q.row(r) = rows[r].transpose();
  return {Matrix::Zero(rows.size(), fs.m()), std::move(q)};
}

}  // namespace rebal
