#include "rebal/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rebal {

ModelSampler::ModelSampler(Matrix nominal, double dev) : nominal_(std::move(nominal)), dev_(dev) {
  if (!(dev >= 0.0 && dev <= 1.0)) throw Error(Errc::ShapeMismatch, "deviation must lie in [0, 1]");
  const Index n = nominal_.cols();
  mu_bound_ = std::min(2.0, 2.0 * static_cast<double>(n / 2) * dev);
  steps_ = n <= 2 ? 1 : static_cast<int>(10 * n * n);
  rows_.resize(nominal_.rows());
  for (Index j = 0; j < nominal_.rows(); ++j) {
    Row& row = rows_[j];
    row.lo.resize(n);
    row.hi.resize(n);
    bool symmetric = true;
    for (Index k = 0; k < n; ++k) {
      row.lo[k] = std::max(-dev, -nominal_(j, k));
      row.hi[k] = std::min(dev, 1.0 - nominal_(j, k));
      if (row.hi[k] > row.lo[k]) row.free.push_back(static_cast<int>(k));
      if (std::abs(row.hi[k] + row.lo[k]) > 1e-12) symmetric = false;
    }
    if (row.free.size() < 2) {
      degenerate_.push_back(static_cast<int>(j));
    } else if (!symmetric) {
      truncated_.push_back(static_cast<int>(j));
    }
  }
}

Matrix ModelSampler::sample(std::mt19937_64& rng) const {
  Matrix out = nominal_;
  if (dev_ == 0.0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t j = 0; j < rows_.size(); ++j) {
    const Row& row = rows_[j];
    const std::size_t f = row.free.size();
    if (f < 2) continue;
    Vector p = Vector::Zero(static_cast<Index>(f));
    Vector dir(static_cast<Index>(f));
    for (int step = 0; step < steps_; ++step) {
      for (std::size_t k = 0; k < f; ++k) dir[k] = normal(rng);
      dir.array() -= dir.mean();
      const double norm = dir.norm();
      if (norm == 0.0) continue;
      dir /= norm;
      double tmin = -std::numeric_limits<double>::infinity();
      double tmax = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < f; ++k) {
        const int c = row.free[k];
        if (dir[k] > 0.0) {
          tmin = std::max(tmin, (row.lo[c] - p[k]) / dir[k]);
          tmax = std::min(tmax, (row.hi[c] - p[k]) / dir[k]);
        } else if (dir[k] < 0.0) {
          tmin = std::max(tmin, (row.hi[c] - p[k]) / dir[k]);
          tmax = std::min(tmax, (row.lo[c] - p[k]) / dir[k]);
        }
      }
      if (!(tmax > tmin)) continue;
      p += (tmin + (tmax - tmin) * unit(rng)) * dir;
    }
    // Clamp round-off and restore the exact zero sum on the widest coordinate.
    double sum = 0.0;
    for (std::size_t k = 0; k < f; ++k) {
      const int c = row.free[k];
      p[k] = std::clamp(p[k], row.lo[c], row.hi[c]);
      sum += p[k];
    }
    std::size_t fix = 0;
    double room = -1.0;
    for (std::size_t k = 0; k < f; ++k) {
      const int c = row.free[k];
      const double r = std::min(p[k] - row.lo[c], row.hi[c] - p[k]);
      if (r > room) {
        room = r;
        fix = k;
      }
    }
    p[fix] -= sum;
    for (std::size_t k = 0; k < f; ++k) out(static_cast<Index>(j), row.free[k]) += p[k];
  }
  return out;
}

Matrix sample_mean_offset(const ModelSampler& sampler, int samples, std::mt19937_64& rng) {
  Matrix acc = Matrix::Zero(sampler.nominal().rows(), sampler.nominal().cols());
  for (int s = 0; s < samples; ++s) acc += sampler.sample(rng) - sampler.nominal();
  return samples > 0 ? Matrix(acc / samples) : acc;
}

std::uint64_t run_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace rebal
