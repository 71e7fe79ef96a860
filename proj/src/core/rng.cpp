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

#include "rng.hpp"

#include "errors.hpp"

namespace mialab {

std::size_t Rng::Index(std::size_t n) {
  if (n == 0) throw ParameterError("Rng::Index: empty range");
  const std::uint64_t bound = n;
  // Largest multiple of n that fits; draws above it are rejected.
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return static_cast<std::size_t>(draw % bound);
}

double Rng::Beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ParameterError("Rng::Beta: shape parameters must be positive");
  }
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(engine_);
  const double y = gb(engine_);
  const double sum = x + y;
  // Both gammas can underflow to zero for tiny shapes; split evenly at random.
  if (sum <= 0.0) return Uniform() < 0.5 ? 0.0 : 1.0;
  return x / sum;
}

}  // namespace mialab
