// Copyright 2026 The callfuse authors
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

#ifndef CALLFUSE_RNG_HPP
#define CALLFUSE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

namespace callfuse {

/// Counter-style random stream built on splitmix64.
///
/// A stream is fully determined by (seed, stream_id): the same pair yields
/// the same value sequence on every platform, independent of how other
/// streams are consumed. Stream ids are derived from stable keys (record
/// ids, operator names, copy indices) so that records can be processed in
/// any order without changing the draws each one sees.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : state_(mix(mix(seed + 0x9E3779B97F4A7C15ULL) ^
                   mix(stream_id + 0xBF58476D1CE4E5B9ULL))) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform double in [0, 1), 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal draw via Box-Muller; consumes two words per call.
  double gaussian() {
    // Guard against log(0): shift u1 into (0, 1].
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  /// FNV-1a hash for deriving stream ids from stable string keys.
  static std::uint64_t hash_key(std::string_view key) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : key) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return h;
  }

  /// Combines stream-id components (e.g. record hash, operator id, copy index).
  static std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
    return mix(a + 0x9E3779B97F4A7C15ULL * (b + 1));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace callfuse

#endif  // CALLFUSE_RNG_HPP
