#pragma once

#include <stdexcept>
#include <string>

namespace optima {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Excess returns are not in the range of the volatility matrix.
struct NoRiskPriceError : Error {
  using Error::Error;
};

// A coefficient or estimate evaluated to NaN or infinity.
struct NonFiniteError : Error {
  using Error::Error;
};

// Argument outside the mathematical domain of the operation.
struct DomainError : Error {
  using Error::Error;
};

// Iterative solver exhausted its iteration budget.
struct ConvergenceError : Error {
  using Error::Error;
};

// Operation needs a closed-form preference family.
struct UnsupportedFamily : Error {
  using Error::Error;
};

// Signal: initial wealth at or below the endowment floor. The solver
// catches this and switches to the floor branch.
struct FloorRegion : Error {
  using Error::Error;
};

// Preference structure failed the homogeneity gate.
struct NotHomogeneous : Error {
  using Error::Error;
};

// sigma * sigma' is numerically singular.
struct SingularCovariance : Error {
  using Error::Error;
};

// Malformed configuration file or option.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace optima
