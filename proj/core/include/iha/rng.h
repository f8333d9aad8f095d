/*
 * Copyright 2026 The IHA Audit Authors
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

#ifndef IHA_RNG_H_
#define IHA_RNG_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace iha {

// SplitMix64 finalizer. Bijective on 64-bit words.
std::uint64_t Mix64(std::uint64_t x);

// Derives an independent seed for a named sub-stream (model index, record
// index, trial index, ...). Stable across platforms and releases.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream);

// Uniform double in [0, 1) that depends only on (key, counter).
double CounterUniform(std::uint64_t key, std::uint64_t counter);

// Counter-based generator: the i-th draw is a pure function of (seed, i).
// Distributions are implemented here rather than with <random> so results are
// bit-identical across standard library implementations.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed) : key_(Mix64(seed)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return NextU64(); }

  std::uint64_t NextU64();
  // Uniform in [0, 1) with 53 bits of precision.
  double NextUnit();
  // Uniform integer in [0, bound); bound must be positive.
  std::uint64_t NextBelow(std::uint64_t bound);
  double NextGaussian();
  bool NextBernoulli(double p) { return NextUnit() < p; }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// In-place Fisher-Yates shuffle.
void Shuffle(std::span<std::size_t> values, CounterRng& rng);

// k distinct indices from [0, n), in draw order. Requires k <= n.
std::vector<std::size_t> SampleWithoutReplacement(std::size_t n, std::size_t k,
                                                  CounterRng& rng);

}  // namespace iha

#endif  // IHA_RNG_H_
