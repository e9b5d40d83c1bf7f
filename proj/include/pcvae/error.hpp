#pragma once

#include <stdexcept>
#include <string>

namespace pcvae {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file (CSV cell, ragged row, bad mask value, ...).
struct ParseError : Error {
  using Error::Error;
};

/// Invalid run configuration (bad field, unknown key, infeasible split, ...).
struct ConfigError : Error {
  using Error::Error;
};

/// Tensor/layer shape mismatch.
struct DimensionError : Error {
  using Error::Error;
};

/// Violated call contract (non-scalar loss, P not a subset of Q, ...).
struct ContractError : Error {
  using Error::Error;
};

/// Dataset-level problem (empty column, missing ground truth, ...).
struct DataError : Error {
  using Error::Error;
};

/// Non-finite value where finiteness is promised (loss, gradient, log-det).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace pcvae
