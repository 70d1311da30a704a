#pragma once

#include <stdexcept>
#include <string>

namespace tsgen {

// Contract violation: a caller handed us arguments that can never be valid
// (bad shapes, non-increasing times, negative sizes, ...).
class value_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor shape mismatch; message names both shapes.
class shape_error : public value_error {
 public:
  using value_error::value_error;
};

// Filesystem / parse failures.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric breakdown at runtime: NaN/Inf in a solver or a loss, step-count
// explosion, divergent optimisation. `iteration` is -1 when not applicable.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg, long iteration = -1)
      : std::runtime_error(msg), iteration(iteration) {}
  long iteration;
};

}  // namespace tsgen
