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

#ifndef CALLFUSE_DATAIO_HPP
#define CALLFUSE_DATAIO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "callfuse/model.hpp"
#include "callfuse/tensor.hpp"
#include "callfuse/wav.hpp"

namespace callfuse {

// Feature ingestion contract: 40 s at 8 kHz, framed into 999 vectors of
// width 768; transcripts capped at 199 tokens of width 768.
inline constexpr std::uint32_t kSampleRate = 8000;
inline constexpr std::size_t kAudioSamples = 320000;
inline constexpr std::size_t kAudioFrames = 999;
inline constexpr std::size_t kFrameWidth = 400;
inline constexpr std::size_t kFrameHop = 320;
inline constexpr std::size_t kMaxTokens = 199;
inline constexpr std::size_t kFeatureDim = 768;

// ---------------------------------------------------------------------------
// Manifest model
// ---------------------------------------------------------------------------

/// One conversation round. Exactly one of `wav_path` / `audio_features_path`
/// must be set; the transcript is required unless `text_features_path` is
/// set. Paths are kept verbatim and resolved against the manifest directory.
struct SegmentRecord {
  int index = 0;  // 1-based, gapless within a call
  std::string text;
  std::string salesperson_text;  // optional role split
  std::string customer_text;
  std::string wav_path;
  std::string audio_features_path;
  std::string text_features_path;
};

struct CallRecord {
  std::string call_id;
  int label = -1;  // 0..4 = A..E; -1 when absent
  std::string domain;
  std::string split;    // train / val / test
  std::string augment;  // "", "audio" or "text"
  std::vector<SegmentRecord> segments;
};

int label_from_letter(const std::string& letter);
std::string label_to_letter(int label);

/// Line-delimited JSON, one call per line. Validates structure, label
/// presence, gapless segment indices, referenced file existence, and blob
/// shape sanity; problems are itemized per call id in the error message.
/// An empty file yields an empty list.
std::vector<CallRecord> load_manifest(const std::string& path);

void save_manifest(const std::string& path, const std::vector<CallRecord>& records);

std::string resolve_path(const std::string& base_dir, const std::string& path);

// ---------------------------------------------------------------------------
// Padding / truncation (the ingestion shape contract)
// ---------------------------------------------------------------------------

struct PaddedAudio {
  std::vector<double> samples;  // exactly kAudioSamples
  std::size_t valid_len = 0;
};

struct PaddedTokens {
  std::vector<char32_t> tokens;  // exactly kMaxTokens
  std::size_t valid_len = 0;
};

/// Truncates to 320,000 samples or zero-pads up to it. Rejects empty input
/// and any sample rate other than 8 kHz (no silent resampling).
PaddedAudio pad_or_truncate_audio(const Waveform& wave);

/// Truncates to 199 tokens or pads with U+0000. Rejects empty input.
PaddedTokens pad_or_truncate_tokens(const std::vector<char32_t>& tokens);

/// Number of analysis frames that touch valid samples.
std::size_t audio_frame_count(std::size_t valid_len);

/// Drops runs longer than 300 ms whose 25 ms frames all stay below 2% of
/// the peak amplitude. Supports the silence-removal preprocessing ablation;
/// the default pipeline keeps silence.
std::vector<double> remove_silence(const std::vector<double>& samples);

// ---------------------------------------------------------------------------
// Stub encoders (deterministic stand-ins honoring the contract shapes)
// ---------------------------------------------------------------------------

/// Frames the padded waveform (400-sample windows, hop 320 -> 999 frames)
/// and projects each frame by a fixed seeded random matrix. [999 x 768].
Tensor stub_encode_audio(const PaddedAudio& audio, std::uint64_t seed);

/// Per-character hashed embedding lookup into a seeded table; identical
/// characters share rows, padding rows are zero. [199 x 768].
Tensor stub_encode_text(const PaddedTokens& tokens, std::uint64_t seed);

// ---------------------------------------------------------------------------
// UTF-8 helpers (character-level tokenization)
// ---------------------------------------------------------------------------

std::vector<char32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<char32_t>& chars);

// ---------------------------------------------------------------------------
// Record preparation (manifest -> model inputs)
// ---------------------------------------------------------------------------

struct PrepareOptions {
  std::string base_dir;       // manifest directory for relative paths
  bool remove_silence = false;
  std::uint64_t feature_seed = 42;  // stub-encoder seed
};

/// Loads, encodes, and trims one call to per-segment valid-prefix features.
PreparedCall prepare_call(const CallRecord& record, const PrepareOptions& opts);

// ---------------------------------------------------------------------------
// Synthetic dataset (desk-scale, separable by construction)
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t train_calls = 16;
  std::size_t val_calls = 20;
  std::size_t test_calls = 20;
  std::size_t segments_per_call = 3;
  double signal = 2.0;  // 0 plants no label information
  std::uint64_t seed = 7;
  std::size_t audio_rows = 12;  // feature rows per segment (< kAudioFrames)
  std::size_t text_rows = 8;

  void validate() const;
};

struct SynthResult {
  std::string train_manifest;
  std::string val_manifest;
  std::string test_manifest;
};

/// Writes feature blobs plus train/val/test manifests under `out_dir`.
/// Labels are balanced (counts within 1 of n/5); each class carries a
/// planted, segment-position-dependent bias along a class direction in both
/// feature channels, scaled by `signal`.
SynthResult synth_dataset(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace callfuse

#endif  // CALLFUSE_DATAIO_HPP
