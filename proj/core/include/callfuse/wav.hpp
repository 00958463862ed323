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

#ifndef CALLFUSE_WAV_HPP
#define CALLFUSE_WAV_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace callfuse {

/// Mono waveform with samples normalized to [-1, 1).
struct Waveform {
  std::vector<double> samples;
  std::uint32_t sample_rate = 8000;
};

/// Reads a mono 16-bit PCM WAV file. Anything else (stereo, other bit
/// depths, compressed formats) is rejected.
Waveform read_wav(const std::string& path);

/// Writes mono 16-bit PCM; samples are clamped to [-1, 1].
void write_wav(const std::string& path, const Waveform& wave);

}  // namespace callfuse

#endif  // CALLFUSE_WAV_HPP
