#pragma once

#include "rebal/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace rebal {

/// Random transition models around a nominal row-stochastic matrix F.
///
/// Each row gets an independent zero-sum perturbation p drawn approximately
/// uniformly from {p : sum p = 0, max(-dev, -F_k) <= p_k <= min(dev, 1 - F_k)}
/// by hit-and-run started at p = 0. With two free coordinates the polytope is
/// a segment and one step is an exact uniform draw.
class ModelSampler {
public:
  /// Throws ShapeMismatch unless dev is in [0, 1].
  ModelSampler(Matrix nominal, double dev);

  Matrix sample(std::mt19937_64& rng) const;

  const Matrix& nominal() const { return nominal_; }
  double dev() const { return dev_; }
  /// A-priori cap on |F_hat - F|_inf: min(2, 2 floor(n/2) dev).
  double mu_bound() const { return mu_bound_; }
  /// Rows whose feasible box is not symmetric about 0 (mean may drift).
  const std::vector<int>& truncated_rows() const { return truncated_; }
  /// Rows with fewer than two free coordinates; returned unchanged.
  const std::vector<int>& degenerate_rows() const { return degenerate_; }
  int walk_steps() const { return steps_; }

private:
  struct Row {
    std::vector<int> free;  // coordinates with lo < hi
    Vector lo;
    Vector hi;
  };

  Matrix nominal_;
  double dev_;
  double mu_bound_;
  int steps_;
  std::vector<Row> rows_;
  std::vector<int> truncated_;
  std::vector<int> degenerate_;
};

/// Entrywise mean of F_hat - F over `samples` draws.
Matrix sample_mean_offset(const ModelSampler& sampler, int samples, std::mt19937_64& rng);

/// Seed of run `index` derived from a master seed (splitmix64 finalizer).
std::uint64_t run_seed(std::uint64_t master, std::uint64_t index);

}  // namespace rebal
