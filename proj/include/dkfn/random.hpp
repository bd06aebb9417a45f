// Copyright 2026 The dkfnewton Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DKFN_RANDOM_HPP
#define DKFN_RANDOM_HPP

// Counter-based random streams (Philox4x32-10, Salmon et al. SC'11).
// A stream is addressed by (seed, trial, purpose); draws are a pure
// function of that address and the draw position, so trials can run on any
// thread in any order.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace dkfn {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

// Purpose tags keep the streams used for different jobs disjoint.
enum class StreamPurpose : std::uint32_t {
  kData = 1,
  kBatches = 2,
  kTest = 3,
};

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint32_t trial, StreamPurpose purpose)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        trial_(trial),
        purpose_(static_cast<std::uint32_t>(purpose)) {}

  explicit RandomStream(std::uint64_t seed)
      : RandomStream(seed, 0, StreamPurpose::kTest) {}

  std::uint32_t next_u32() {
    if (lane_ == 4) refill();
    return block_[lane_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform on (0, 1]: 53 random bits, never zero.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Uniform on {0, ..., n-1} without modulo bias (Lemire's method).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n <= 1) return 0;
    if (n <= 0xFFFFFFFFull) {
      const auto bound = static_cast<std::uint32_t>(n);
      std::uint64_t m = static_cast<std::uint64_t>(next_u32()) * bound;
      auto low = static_cast<std::uint32_t>(m);
      if (low < bound) {
        const std::uint32_t threshold = static_cast<std::uint32_t>(-bound) % bound;
        while (low < threshold) {
          m = static_cast<std::uint64_t>(next_u32()) * bound;
          low = static_cast<std::uint32_t>(m);
        }
      }
      return m >> 32;
    }
    // 64-bit ranges: plain rejection.
    const std::uint64_t limit = ~0ull - (~0ull % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

  bool bernoulli(double p) { return uniform() <= p; }

  std::uint64_t blocks_consumed() const { return counter_; }

 private:
  void refill() {
    block_ = philox4x32_10({static_cast<std::uint32_t>(counter_),
                            static_cast<std::uint32_t>(counter_ >> 32), trial_, purpose_},
                           key_);
    ++counter_;
    lane_ = 0;
  }

  Philox4x32Key key_;
  std::uint32_t trial_;
  std::uint32_t purpose_;
  std::uint64_t counter_ = 0;
  Philox4x32Counter block_{};
  int lane_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dkfn

#endif  // DKFN_RANDOM_HPP
