#pragma once

#include <stdexcept>
#include <string>

namespace igd {

// Invalid input data or arguments (bad files, unknown ids, violated
// preconditions). Mapped to exit code 3 by the CLI.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failures while running an operation on valid inputs (I/O, numerics).
// Mapped to exit code 4 by the CLI.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace igd
