#pragma once

#include <stdexcept>
#include <string>

namespace vistree {

// A computation produced or encountered a non-finite value, or a required
// factorization broke down. CLI maps this to exit code 4.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Input data could not be read or does not satisfy the documented format.
// CLI maps this to exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vistree
