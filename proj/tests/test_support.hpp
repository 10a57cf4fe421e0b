#pragma once

#include "rebal/io.hpp"
#include "rebal/mdp.hpp"

#include <random>
#include <string>
#include <vector>

namespace testing {

using rebal::Matrix;
using rebal::Vector;

inline std::string data_path(const std::string& name) { return std::string(REBAL_DATA_DIR) + "/" + name; }

inline rebal::Mdp load_fixture(const std::string& name) { return rebal::read_mdp_file(data_path(name)); }

/// Uniform point of the probability simplex of dimension n.
inline Vector random_simplex(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> e(1.0);
  Vector p(n);
  for (int k = 0; k < n; ++k) p[k] = e(rng);
  return p / p.sum();
}

inline Matrix random_stochastic(std::mt19937_64& rng, int rows, int cols) {
  Matrix f(rows, cols);
  for (int j = 0; j < rows; ++j) f.row(j) = random_simplex(rng, cols).transpose();
  return f;
}

struct RandomMdpOptions {
  int max_states = 5;
  int max_actions = 4;
  int min_states = 1;
  double gamma = -1.0;  ///< < 0 draws from [0.3, 0.95]
  double reward_lo = -5.0;
  double reward_hi = 5.0;
};

inline rebal::Mdp random_mdp(std::mt19937_64& rng, const RandomMdpOptions& opt = {}) {
  std::uniform_int_distribution<int> ns(opt.min_states, opt.max_states);
  std::uniform_int_distribution<int> as(1, opt.max_actions);
  std::uniform_real_distribution<double> rw(opt.reward_lo, opt.reward_hi);
  std::uniform_real_distribution<double> gm(0.3, 0.95);
  const int n = ns(rng);
  std::vector<int> fibers(n);
  for (auto& f : fibers) f = as(rng);
  rebal::FiberStructure fs(fibers);
  Vector r(fs.m());
  for (int j = 0; j < fs.m(); ++j) r[j] = rw(rng);
  const double gamma = opt.gamma >= 0.0 ? opt.gamma : gm(rng);
  return rebal::Mdp(fs, gamma, r, random_stochastic(rng, fs.m(), n));
}

/// Same MDP with rewards shifted to be nonpositive.
inline rebal::Mdp nonpositive(const rebal::Mdp& mdp) {
  return mdp.with_rewards(Vector(mdp.rewards().array() - mdp.rewards().maxCoeff()));
}

/// Exhaustive optimum: componentwise max of V_pi over every deterministic policy.
inline Vector brute_force_optimal_value(const rebal::Mdp& mdp) {
  Vector best = Vector::Constant(mdp.n(), -std::numeric_limits<double>::infinity());
  rebal::for_each_policy(mdp.structure(), [&](const rebal::Policy& p) {
    best = best.cwiseMax(rebal::policy_evaluate(mdp, p));
  });
  return best;
}

inline Vector random_vector(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (int k = 0; k < n; ++k) v[k] = u(rng);
  return v;
}

}  // namespace testing
