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

#ifndef CALLFUSE_AUGMENT_HPP
#define CALLFUSE_AUGMENT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "callfuse/dataio.hpp"
#include "callfuse/rng.hpp"

namespace callfuse {

/// Parameters and multiplicities for the four augmentation operators.
/// Every operator is a pure function of (input, params, stream): the same
/// policy seed reproduces the same expanded dataset bit for bit.
struct AugmentPolicy {
  double noise_sigma = 0.005;                    // waveform units
  std::vector<double> speed_factors = {0.9, 1.1};
  double mask_rate = 0.05;                       // fraction of samples zeroed
  std::size_t mask_max_width = 800;              // 100 ms at 8 kHz
  double homophone_prob = 0.10;
  std::size_t audio_multiplicity = 2;
  std::size_t text_multiplicity = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// out[i] = in[i] + N(0, sigma^2). sigma = 0 is the identity.
std::vector<double> gaussian_noise(const std::vector<double>& wave, double sigma,
                                   RngStream& rng);

/// Pitch-preserving time stretch by waveform-similarity overlap-add
/// (25 ms Hann windows, 50% hop at 8 kHz). factor > 1 speeds playback up;
/// the output has round(len / factor) samples. factor must lie in
/// [0.5, 2.0]; factor 1 returns the input unchanged.
std::vector<double> speed_perturb(const std::vector<double>& wave, double factor,
                                  RngStream& rng);

/// Zeroes non-overlapping spans of at most `max_width` samples until at
/// least rate * len samples are silent (or nothing is left to mask). The
/// zeroed count lands in [rate * len, rate * len + max_width].
std::vector<double> random_mask(const std::vector<double>& wave, double rate,
                                std::size_t max_width, RngStream& rng);

/// Character -> homophones table. Plain-text file, one entry per line:
/// "char TAB homophone1 homophone2 ...", UTF-8, '#' comments allowed.
struct HomophoneDict {
  std::map<char32_t, std::vector<char32_t>> entries;

  static HomophoneDict load(const std::string& path);
  bool contains(char32_t c) const { return entries.count(c) != 0; }
};

/// Each character present in the dictionary is independently replaced with
/// probability p by a uniformly chosen homophone; everything else passes
/// through. Length is preserved.
std::vector<char32_t> homophone_substitute(const std::vector<char32_t>& chars,
                                           const HomophoneDict& dict, double p,
                                           RngStream& rng);

/// Expands a training split: per call, the original plus audio_multiplicity
/// noise+speed+mask copies and text_multiplicity homophone copies.
/// Augmented waveforms are written under `out_dir`; labels, call ids, and
/// segment order are never altered (copies carry an `augment` tag).
/// Refuses records from non-train splits. Per-record streams are derived
/// from (policy.seed, call id, copy index, segment index), so results do
/// not depend on processing order.
std::vector<CallRecord> expand_dataset(const std::vector<CallRecord>& records,
                                       const AugmentPolicy& policy,
                                       const HomophoneDict& dict,
                                       const std::string& in_base_dir,
                                       const std::string& out_dir);

}  // namespace callfuse

#endif  // CALLFUSE_AUGMENT_HPP
