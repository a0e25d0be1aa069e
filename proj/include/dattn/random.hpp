// Copyright 2026 The dattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dattn {

class RngCursor;

/// Counter-based generator: every draw is a pure function of (key, counter).
/// Streams never share state, so dropout masks and dataset samples can be
/// regenerated independently and in any order.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key, std::uint64_t stream = 0) noexcept
      : key_(mix(key ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  /// Raw 64-bit value at position `counter`.
  [[nodiscard]] constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix(key_ + (counter + 1) * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  [[nodiscard]] constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on two consecutive counters.
  [[nodiscard]] double normal(std::uint64_t counter) const noexcept {
    const double u1 = 1.0 - uniform(2 * counter);  // (0, 1]
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Derive an independent generator for a sub-stream.
  [[nodiscard]] constexpr CounterRng split(std::uint64_t stream) const noexcept {
    return CounterRng(key_, stream);
  }

  /// Sequential reader starting at counter 0.
  [[nodiscard]] constexpr RngCursor cursor() const noexcept;

 private:
  // splitmix64 finalizer
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
};

/// Sequential convenience wrapper over a counter position.
class RngCursor {
 public:
  constexpr explicit RngCursor(const CounterRng& rng) noexcept : rng_(rng) {}
  double uniform() noexcept { return rng_.uniform(next_++); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept { return rng_.normal(next_++); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

constexpr RngCursor CounterRng::cursor() const noexcept { return RngCursor(*this); }

}  // namespace dattn
