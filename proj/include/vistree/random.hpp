#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string_view>

namespace vistree {

// Derives a 64-bit stream key from a base seed and a label. All randomness in
// the project flows from one user seed through named streams ("train",
// "eval", "bandit", ...), so adding draws to one phase never perturbs another.
std::uint64_t stream_key(std::uint64_t seed, std::string_view label);
std::uint64_t stream_key(std::uint64_t seed, std::string_view label, std::uint64_t index);

// Deterministic random stream. The variate transforms are implemented here
// rather than via std:: distributions so that sequences are reproducible
// independent of the standard library in use.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : engine_(key) {}
  RandomStream(std::uint64_t seed, std::string_view label) : engine_(stream_key(seed, label)) {}

  // Uniform on [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  // Fisher-Yates shuffle of [0, n) index vector.
  std::vector<Eigen::Index> permutation(Eigen::Index n);

  // Gamma(shape, 1) via Marsaglia-Tsang; requires shape > 0.
  double gamma(double shape);

  // Child stream derived from this stream's remaining entropy plus a label.
  RandomStream substream(std::string_view label);

 private:
  std::mt19937_64 engine_;
};

}  // namespace vistree
