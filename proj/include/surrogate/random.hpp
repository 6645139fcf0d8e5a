// Copyright 2026 The Surrogate Authors
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

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Key = 64-bit seed. Counter words 0-1 hold the draw index, words 2-3 the
// stream id, so every (seed, stream) pair owns an independent sequence and
// the i-th value of a stream is computable without touching the others.

#pragma once

#include <array>
#include <cstdint>

namespace surrogate {

class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr const char* kName = "philox4x32-10";

  static constexpr Block generate(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Sequential uniform doubles from one (seed, stream) pair.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    if (used_ == 2) refill();
    const std::uint64_t hi = block_[2 * used_];
    const std::uint64_t lo = block_[2 * used_ + 1];
    ++used_;
    return double(((hi << 32) | lo) >> 11) * 0x1.0p-53;
  }

 private:
  void refill() {
    block_ = Philox4x32::generate(
        {static_cast<std::uint32_t>(counter_),
         static_cast<std::uint32_t>(counter_ >> 32),
         static_cast<std::uint32_t>(stream_),
         static_cast<std::uint32_t>(stream_ >> 32)},
        key_);
    ++counter_;
    used_ = 0;
  }

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  Philox4x32::Block block_{};
  int used_ = 2;
};

}  // namespace surrogate
