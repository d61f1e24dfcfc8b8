#pragma once

#include <cmath>
#include <stdexcept>

namespace vistree {

// Scalar activations used throughout the tree and posterior code. All are
// overflow-safe for |x| up to at least 1e3.

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without underflow at large |x|.
inline double log_sigmoid(double x) {
  if (x >= 0.0) {
    return -std::log1p(std::exp(-x));
  }
  return x - std::log1p(std::exp(x));
}

// softplus(x) = log(1 + exp(x)), strictly positive.
inline double softplus(double x) {
  if (x > 30.0) {
    return x + std::log1p(std::exp(-x));
  }
  return std::log1p(std::exp(x));
}

// Inverse of softplus. Defined for y > 0 only.
inline double inverse_softplus(double y) {
  if (!(y > 0.0)) {
    throw std::invalid_argument("inverse_softplus: input must be positive");
  }
  if (y > 30.0) {
    return y + std::log1p(-std::exp(-y));
  }
  return std::log(std::expm1(y));
}

}  // namespace vistree
