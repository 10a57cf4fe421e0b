#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rebal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Failure categories surfaced by the library.
enum class Errc {
  NonStochasticRow,
  BadGamma,
  EmptyFiber,
  ShapeMismatch,
  ParseError,
  PositiveReward,
  IncompatibleFibers,
  StepLimitExceeded,
  Infeasible,
  Unbounded,
  MaxItersExceeded,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

/// Infinity norm of a vector; zero for empty vectors.
inline double inf_norm(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

/// Induced infinity norm (max absolute row sum) of a matrix.
inline double inf_norm(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace rebal
