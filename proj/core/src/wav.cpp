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

#include "callfuse/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "callfuse/error.hpp"

namespace callfuse {

namespace {

template <typename T>
T get(std::ifstream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated WAV file: " + path);
  return v;
}

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open WAV file: " + path);

  char riff[4], wave_tag[4];
  is.read(riff, 4);
  get<std::uint32_t>(is, path);  // overall size, unused
  is.read(wave_tag, 4);
  if (!is || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave_tag, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file: " + path);
  }

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  Waveform out;
  while (is) {
    char chunk_id[4];
    is.read(chunk_id, 4);
    if (!is) break;
    const auto chunk_size = get<std::uint32_t>(is, path);
    if (std::memcmp(chunk_id, "fmt ", 4) == 0) {
      const auto format = get<std::uint16_t>(is, path);
      channels = get<std::uint16_t>(is, path);
      sample_rate = get<std::uint32_t>(is, path);
      get<std::uint32_t>(is, path);  // byte rate
      get<std::uint16_t>(is, path);  // block align
      bits = get<std::uint16_t>(is, path);
      if (chunk_size > 16) is.seekg(chunk_size - 16, std::ios::cur);
      if (format != 1) throw IoError("WAV is not uncompressed PCM: " + path);
      if (channels != 1) throw IoError("WAV must be mono: " + path);
      if (bits != 16) throw IoError("WAV must be 16-bit: " + path);
      have_fmt = true;
    } else if (std::memcmp(chunk_id, "data", 4) == 0) {
      if (!have_fmt) throw IoError("WAV data chunk before fmt chunk: " + path);
      const std::size_t n = chunk_size / 2;
      std::vector<std::int16_t> raw(n);
      is.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(chunk_size));
      if (!is) throw IoError("truncated WAV data: " + path);
      out.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        out.samples[i] = static_cast<double>(raw[i]) / 32768.0;
      }
      out.sample_rate = sample_rate;
      return out;
    } else {
      // Skip unknown chunks (LIST, fact, ...), honoring word alignment.
      is.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw IoError("WAV file has no data chunk: " + path);
}

void write_wav(const std::string& path, const Waveform& wave) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open WAV for writing: " + path);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  os.write("RIFF", 4);
  put<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put<std::uint32_t>(os, 16);
  put<std::uint16_t>(os, 1);  // PCM
  put<std::uint16_t>(os, 1);  // mono
  put<std::uint32_t>(os, wave.sample_rate);
  put<std::uint32_t>(os, wave.sample_rate * 2);
  put<std::uint16_t>(os, 2);
  put<std::uint16_t>(os, 16);
  os.write("data", 4);
  put<std::uint32_t>(os, data_bytes);
  for (double s : wave.samples) {
    const double clamped = std::clamp(s, -1.0, 0x7FFF / 32768.0);
    const auto v = static_cast<std::int16_t>(std::lround(clamped * 32768.0));
    put<std::int16_t>(os, v);
  }
  if (!os) throw IoError("WAV write failed: " + path);
}

}  // namespace callfuse
