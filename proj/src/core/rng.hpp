/*
 * Copyright 2026 The mialab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MIALAB_CORE_RNG_HPP_
#define MIALAB_CORE_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>

namespace mialab {

// SplitMix64 (Steele, Lea, Flood 2014). State advances by the golden-ratio
// increment 0x9E3779B97F4A7C15; output is the standard 30/27/31 xor-shift
// multiply finalizer. Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

inline constexpr std::uint64_t kSeedMixer = 0x9E3779B97F4A7C15ULL;

// stage_seed = global_seed XOR (stage_index * kSeedMixer), wrapping mod 2^64.
constexpr std::uint64_t DeriveSeed(std::uint64_t global_seed,
                                   std::uint64_t stage_index) {
  return global_seed ^ (stage_index * kSeedMixer);
}

// Seeded random source used by every stochastic component. Uniform draws and
// index draws are computed directly from the SplitMix64 stream; Gaussian and
// gamma draws go through the standard library distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform in [0, n), rejection-sampled so there is no modulo bias.
  std::size_t Index(std::size_t n);

  double Gaussian() { return normal_(engine_); }
  double Gaussian(double mean, double stddev) {
    return mean + stddev * Gaussian();
  }

  // Beta(a, b) as G_a / (G_a + G_b) with independent unit-scale gammas.
  double Beta(double a, double b);

  bool Bernoulli(double p) { return Uniform() < p; }

  // Fisher-Yates, iterating from the back.
  template <typename T>
  void Shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = Index(i);
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  SplitMix64& engine() { return engine_; }

 private:
  SplitMix64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mialab

#endif  // MIALAB_CORE_RNG_HPP_
