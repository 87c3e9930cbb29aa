#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pbooth/nn/tensor.h"

namespace pbooth::nn {

// Explicitly seeded random source. Nothing in the library draws from ambient
// global state; every stochastic routine takes one of these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(Mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1).
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  double Normal();
  bool Bernoulli(double p) { return Uniform() < p; }
  // Uniform integer in [0, n).
  std::size_t Index(std::size_t n);

  template <typename T>
  Tensor<T> NormalTensor(const Shape& shape);

  // Derives an independent generator for a numbered sub-stream.
  Rng Fork(std::uint64_t stream) const { return Rng(Mix(seed_ ^ Mix(stream + 0x632be59bd9b4e019ULL))); }

  static std::uint64_t Mix(std::uint64_t x);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

template <typename T>
Tensor<T> Rng::NormalTensor(const Shape& shape) {
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(Normal());
  return t;
}

// Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> Permutation(std::size_t n, Rng& rng);

}  // namespace pbooth::nn
