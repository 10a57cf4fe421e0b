#include "rebal/mdp.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace rebal {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::NonStochasticRow: return "NonStochasticRow";
    case Errc::BadGamma: return "BadGamma";
    case Errc::EmptyFiber: return "EmptyFiber";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::ParseError: return "ParseError";
    case Errc::PositiveReward: return "PositiveReward";
    case Errc::IncompatibleFibers: return "IncompatibleFibers";
    case Errc::StepLimitExceeded: return "StepLimitExceeded";
    case Errc::Infeasible: return "Infeasible";
    case Errc::Unbounded: return "Unbounded";
    case Errc::MaxItersExceeded: return "MaxItersExceeded";
  }
  return "Unknown";
}

FiberStructure::FiberStructure(std::vector<int> fiber_sizes) : sizes_(std::move(fiber_sizes)) {
  offsets_.assign(1, 0);
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i] < 1) {
      throw Error(Errc::EmptyFiber, "state " + std::to_string(i) + " has an empty action fiber");
    }
    offsets_.push_back(offsets_.back() + sizes_[i]);
    for (int a = 0; a < sizes_[i]; ++a) owner_.push_back(static_cast<int>(i));
  }
  m_ = offsets_.back();
}

Matrix FiberStructure::projection() const {
  Matrix s = Matrix::Zero(m_, n());
  for (int j = 0; j < m_; ++j) s(j, owner_[j]) = 1.0;
  return s;
}

Matrix Policy::matrix(const FiberStructure& fs) const {
  Matrix pi = Matrix::Zero(fs.n(), fs.m());
  for (int i = 0; i < fs.n(); ++i) pi(i, global_action(fs, i)) = 1.0;
  return pi;
}

void check_row_stochastic(const Matrix& f, double tol) {
  for (Index j = 0; j < f.rows(); ++j) {
    for (Index k = 0; k < f.cols(); ++k) {
      const double p = f(j, k);
      if (!std::isfinite(p) || p < -tol || p > 1.0 + tol) {
        std::ostringstream msg;
        msg << "transition row " << j << " has entry " << p << " outside [0,1] at column " << k;
        throw Error(Errc::NonStochasticRow, msg.str());
      }
    }
    const double sum = f.row(j).sum();
    if (std::abs(sum - 1.0) > tol) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "transition row " << j << " sums to " << sum;
      throw Error(Errc::NonStochasticRow, msg.str());
    }
  }
}

Mdp::Mdp(FiberStructure structure, double gamma, Vector rewards, Matrix transitions)
    : structure_(std::move(structure)), gamma_(gamma), rewards_(std::move(rewards)),
      transitions_(std::move(transitions)) {
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) {
    std::ostringstream msg;
    msg << "discount factor " << gamma_ << " is outside [0,1)";
    throw Error(Errc::BadGamma, msg.str());
  }
  const int m = structure_.m();
  if (rewards_.size() != m) {
    throw Error(Errc::ShapeMismatch, "rewards has length " + std::to_string(rewards_.size()) +
                                         ", expected " + std::to_string(m));
  }
  if (transitions_.rows() != m || transitions_.cols() != structure_.n()) {
    throw Error(Errc::ShapeMismatch,
                "transitions is " + std::to_string(transitions_.rows()) + "x" +
                    std::to_string(transitions_.cols()) + ", expected " + std::to_string(m) + "x" +
                    std::to_string(structure_.n()));
  }
  for (Index j = 0; j < rewards_.size(); ++j) {
    if (!std::isfinite(rewards_[j])) {
      throw Error(Errc::ShapeMismatch, "reward " + std::to_string(j) + " is not finite");
    }
  }
  check_row_stochastic(transitions_);
  transitions_ = transitions_.cwiseMax(0.0);
  // Rows already stochastic to rounding are kept bit-for-bit, so loading a
  // serialized model reproduces it exactly.
  const double exact = 16.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(transitions_.cols());
  for (Index j = 0; j < transitions_.rows(); ++j) {
    const double sum = transitions_.row(j).sum();
    if (std::abs(sum - 1.0) > exact) transitions_.row(j) /= sum;
  }
}

Mdp Mdp::with_rewards(const Vector& rewards) const {
  return Mdp(structure_, gamma_, rewards, transitions_);
}

Mdp Mdp::with_transitions(const Matrix& transitions) const {
  return Mdp(structure_, gamma_, rewards_, transitions);
}

Mdp validate_mdp(const RawMdp& raw) {
  if (raw.n < 1) throw Error(Errc::ShapeMismatch, "n must be positive");
  if (static_cast<int>(raw.fibers.size()) != raw.n) {
    throw Error(Errc::ShapeMismatch, "fibers has " + std::to_string(raw.fibers.size()) +
                                         " entries, expected n = " + std::to_string(raw.n));
  }
  FiberStructure fs(raw.fibers);
  if (static_cast<int>(raw.rewards.size()) != fs.m()) {
    throw Error(Errc::ShapeMismatch, "rewards has " + std::to_string(raw.rewards.size()) +
                                         " entries, expected m = " + std::to_string(fs.m()));
  }
  if (static_cast<int>(raw.transitions.size()) != fs.m()) {
    throw Error(Errc::ShapeMismatch, "transitions has " + std::to_string(raw.transitions.size()) +
                                         " rows, expected m = " + std::to_string(fs.m()));
  }
  Matrix f(fs.m(), fs.n());
  for (int j = 0; j < fs.m(); ++j) {
    if (static_cast<int>(raw.transitions[j].size()) != fs.n()) {
      throw Error(Errc::ShapeMismatch, "transition row " + std::to_string(j) + " has " +
                                           std::to_string(raw.transitions[j].size()) +
                                           " entries, expected n = " + std::to_string(fs.n()));
    }
    for (int k = 0; k < fs.n(); ++k) f(j, k) = raw.transitions[j][k];
  }
  Vector r = Eigen::Map<const Vector>(raw.rewards.data(), fs.m());
  return Mdp(std::move(fs), raw.gamma, std::move(r), std::move(f));
}

namespace {

Matrix policy_transitions(const Mdp& mdp, const Policy& policy) {
  const auto& fs = mdp.structure();
  Matrix fp(fs.n(), fs.n());
  for (int i = 0; i < fs.n(); ++i) fp.row(i) = mdp.transitions().row(policy.global_action(fs, i));
  return fp;
}

void check_policy(const FiberStructure& fs, const Policy& policy) {
  if (static_cast<int>(policy.choices.size()) != fs.n()) {
    throw Error(Errc::ShapeMismatch, "policy length does not match state count");
  }
  for (int i = 0; i < fs.n(); ++i) {
    if (policy.choices[i] < 0 || policy.choices[i] >= fs.fiber_size(i)) {
      throw Error(Errc::ShapeMismatch, "policy choice out of range at state " + std::to_string(i));
    }
  }
}

// Q-values of every action against a state value vector.
Vector one_step_lookahead(const Mdp& mdp, const Vector& value) {
  return mdp.rewards() + mdp.gamma() * (mdp.transitions() * value);
}

}  // namespace

Vector policy_evaluate(const Mdp& mdp, const Policy& policy) {
  const auto& fs = mdp.structure();
  check_policy(fs, policy);
  Vector rp(fs.n());
  for (int i = 0; i < fs.n(); ++i) rp[i] = mdp.rewards()[policy.global_action(fs, i)];
  const Matrix a = Matrix::Identity(fs.n(), fs.n()) - mdp.gamma() * policy_transitions(mdp, policy);
  return a.partialPivLu().solve(rp);
}

Vector q_evaluate(const Mdp& mdp, const Policy& policy) {
  const auto& fs = mdp.structure();
  check_policy(fs, policy);
  const Matrix a =
      Matrix::Identity(fs.m(), fs.m()) - mdp.gamma() * mdp.transitions() * policy.matrix(fs);
  return a.partialPivLu().solve(mdp.rewards());
}

Vector advantage(const Mdp& mdp, const Policy& policy) {
  const Vector v = policy_evaluate(mdp, policy);
  Vector a = one_step_lookahead(mdp, v);
  const auto& fs = mdp.structure();
  for (int j = 0; j < fs.m(); ++j) a[j] -= v[fs.state_of(j)];
  return a;
}

Vector bellman_optimal_operator(const Mdp& mdp, const Vector& value) {
  const auto& fs = mdp.structure();
  if (value.size() != fs.n()) throw Error(Errc::ShapeMismatch, "value length must equal n");
  const Vector q = one_step_lookahead(mdp, value);
  Vector out(fs.n());
  for (int i = 0; i < fs.n(); ++i) out[i] = q.segment(fs.fiber_begin(i), fs.fiber_size(i)).maxCoeff();
  return out;
}

Policy greedy_policy(const Vector& reward, const FiberStructure& fs) {
  if (reward.size() != fs.m()) throw Error(Errc::ShapeMismatch, "reward length must equal m");
  Policy p;
  p.choices.resize(fs.n());
  for (int i = 0; i < fs.n(); ++i) {
    int best = 0;
    for (int a = 1; a < fs.fiber_size(i); ++a) {
      if (reward[fs.fiber_begin(i) + a] > reward[fs.fiber_begin(i) + best]) best = a;
    }
    p.choices[i] = best;
  }
  return p;
}

OptimalSolution solve_optimal(const Mdp& mdp, double tol) {
  const auto& fs = mdp.structure();
  OptimalSolution out;
  Vector v = Vector::Zero(fs.n());
  Policy prev = greedy_policy(one_step_lookahead(mdp, v), fs);
  int stable = 0;
  // Iteration cap: enough sweeps for gamma^k * span to drop below tol.
  const double span = std::max(1.0, inf_norm(mdp.rewards()) / (1.0 - mdp.gamma()));
  const int cap = 100 + static_cast<int>(std::ceil(std::log(tol / span) /
                                                   std::log(std::max(mdp.gamma(), 1e-3))));
  for (int it = 0; it < cap; ++it) {
    const Vector q = one_step_lookahead(mdp, v);
    const Policy greedy = greedy_policy(q, fs);
    Vector next(fs.n());
    for (int i = 0; i < fs.n(); ++i) next[i] = q[greedy.global_action(fs, i)];
    const double step = inf_norm(Vector(next - v));
    v = std::move(next);
    stable = (greedy == prev) ? stable + 1 : 0;
    prev = greedy;
    ++out.iterations;
    if (stable >= 2 && step <= tol) break;
  }

  // Exact finish: policy iteration from the value-iteration policy.
  Policy policy = prev;
  for (int guard = 0; guard < 1000; ++guard) {
    v = policy_evaluate(mdp, policy);
    const Vector q = one_step_lookahead(mdp, v);
    const double scale = 1.0 + inf_norm(v);
    bool changed = false;
    for (int i = 0; i < fs.n(); ++i) {
      const int cur = policy.global_action(fs, i);
      int best = cur;
      for (int j = fs.fiber_begin(i); j < fs.fiber_end(i); ++j) {
        if (q[j] > q[best] + 1e-12 * scale) best = j;
      }
      if (best != cur) {
        policy.choices[i] = best - fs.fiber_begin(i);
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Canonical lowest-index representative among tied optimal actions.
  const Vector q = one_step_lookahead(mdp, v);
  const double scale = 1.0 + inf_norm(v);
  Policy canonical = policy;
  for (int i = 0; i < fs.n(); ++i) {
    const double best = q.segment(fs.fiber_begin(i), fs.fiber_size(i)).maxCoeff();
    int count = 0;
    int first = -1;
    for (int a = 0; a < fs.fiber_size(i); ++a) {
      if (q[fs.fiber_begin(i) + a] >= best - 1e-10 * scale) {
        ++count;
        if (first < 0) first = a;
      }
    }
    canonical.choices[i] = first;
    if (count > 1) out.multiple_optima = true;
  }
  out.policy = canonical;
  out.value = (canonical == policy) ? v : policy_evaluate(mdp, canonical);
  return out;
}

long long policy_count(const FiberStructure& fs) {
  long long total = 1;
  for (int s : fs.sizes()) total *= s;
  return total;
}

void for_each_policy(const FiberStructure& fs, const std::function<void(const Policy&)>& visit) {
  Policy p;
  p.choices.assign(fs.n(), 0);
  while (true) {
    visit(p);
    int i = fs.n() - 1;
    while (i >= 0 && ++p.choices[i] == fs.fiber_size(i)) {
      p.choices[i] = 0;
      --i;
    }
    if (i < 0) return;
  }
}

}  // namespace rebal
