#pragma once

#include <Eigen/Core>

#include <random>
#include <stdexcept>
#include <string>

namespace stcluster {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using MatrixXi = Mat<int>;
using VectorXd = Vec<double>;
using VectorXi = Vec<int>;

/// Per-chain random engine. Never shared between chains.
using Rng = std::mt19937_64;

enum class ErrorCode {
  InvalidArgument,
  InvalidEdge,
  RhoOutOfRange,
  MissingCentroids,
  MissingCell,
  NonPositiveExpected,
  NegativeCount,
  MalformedInput,
  DegenerateT,
  VariantMismatch,
  OrderingViolated,
  NonFiniteLogPosterior,
  ShapeMismatch,
  MissingArtifacts,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stcluster
