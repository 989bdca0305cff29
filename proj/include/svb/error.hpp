#pragma once

#include <stdexcept>
#include <string>

namespace svb {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched or invalid tensor/layer shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Non-finite values or degenerate numeric state where finiteness is required.
struct NumericError : Error {
  using Error::Error;
};

// Iterative solver exceeded its sweep budget.
struct ConvergenceError : Error {
  using Error::Error;
};

// Caller violated a documented precondition.
struct InputError : Error {
  using Error::Error;
};

// Malformed file contents (dataset, checkpoint).
struct FormatError : Error {
  using Error::Error;
};

// Bad configuration file or CLI usage.
struct ConfigError : Error {
  using Error::Error;
};

// Training produced a non-finite loss or gradient.
struct DivergenceError : Error {
  DivergenceError(const std::string& what, long iteration)
      : Error(what), iteration(iteration) {}
  long iteration;
};

}  // namespace svb
