#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "s2p/tensor.hpp"

namespace s2p {

// Seeded generator; identical seed yields an identical draw sequence.
struct RngState {
  std::uint64_t seed = 0;
  std::mt19937_64 gen;

  explicit RngState(std::uint64_t s = 0) : seed(s), gen(s) {}

  float uniform(float lo, float hi) {
    std::uniform_real_distribution<float> d(lo, hi);
    return d(gen);
  }

  double uniform_d(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen);
  }

  double normal(double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(gen);
  }

  std::uint64_t next_u64() { return gen(); }
};

// Linear-layer init: Uniform(+-1/sqrt(fan_in)). Biases stay zero.
inline void init_linear(Tensor& w, int fan_in, RngState& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  for (std::size_t i = 0; i < w.size(); ++i) w.at(i) = rng.uniform(-bound, bound);
}

}  // namespace s2p
