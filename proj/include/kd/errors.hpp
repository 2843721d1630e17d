#pragma once

#include <stdexcept>
#include <string>

namespace kd {

// Bad input data or schema violations. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure at runtime (divergence, non-finite values, no
// convergence). The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kd
