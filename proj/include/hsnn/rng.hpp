#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "hsnn/tensor.hpp"

namespace hsnn {

/// Seeded generator whose streams are identical across standard libraries.
/// std::mt19937_64 output is fully specified; the distributions below are
/// written out because the <random> distributions are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  double normal() {
    // Box-Muller; the second variate is discarded to keep the stream simple.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <class T>
  Tensor<T> uniform_tensor(Shape s, double lo, double hi) {
    Tensor<T> t(std::move(s));
    for (auto& v : t.data()) v = static_cast<T>(uniform(lo, hi));
    return t;
  }

  template <class T>
  Tensor<T> normal_tensor(Shape s, double stddev = 1.0) {
    Tensor<T> t(std::move(s));
    for (auto& v : t.data()) v = static_cast<T>(stddev * normal());
    return t;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hsnn
