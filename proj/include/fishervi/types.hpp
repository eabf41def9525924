#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace fishervi {

using Scalar = double;
using Mat = Eigen::MatrixXd;  // rows = buyers, cols = goods
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// Iterates are clamped to this floor before evaluating fractional-power
// gradients (x^(rho-1) diverges at zero).
inline constexpr Scalar kXFloor = 1e-9;

// Smallest admissible directional-derivative sum in the VI map denominator.
inline constexpr Scalar kDenomFloor = 1e-12;

// Allocation entries above this count as active in KKT residuals.
inline constexpr Scalar kActiveTol = 1e-7;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error {
  using Error::Error;
};

struct DegenerateMarket : Error {
  using Error::Error;
};

struct SingularDenominator : Error {
  using Error::Error;
};

struct InnerSolverDiverged : Error {
  using Error::Error;
};

struct EigensolverStalled : Error {
  using Error::Error;
};

struct WrongFamily : Error {
  using Error::Error;
};

struct TooLarge : Error {
  using Error::Error;
};

struct SchemaError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct InvariantViolation : Error {
  using Error::Error;
};

}  // namespace fishervi
