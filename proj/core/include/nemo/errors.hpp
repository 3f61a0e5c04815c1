#pragma once

#include <stdexcept>
#include <string>

namespace nemo {

// Invalid configuration, arguments, or malformed input data.
// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure at runtime (divergent training, degenerate path speed).
// The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nemo
