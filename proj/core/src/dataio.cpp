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

#include "callfuse/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "callfuse/blob.hpp"

namespace callfuse {

namespace fs = std::filesystem;
using nlohmann::json;

int label_from_letter(const std::string& letter) {
  if (letter.size() == 1 && letter[0] >= 'A' && letter[0] <= 'E') {
    return letter[0] - 'A';
  }
  throw ValueError("label must be one of A..E, got '" + letter + "'");
}

std::string label_to_letter(int label) {
  if (label < 0 || label >= static_cast<int>(kNumBaseLabels)) {
    throw ValueError("label index " + std::to_string(label) + " out of range");
  }
  return std::string(1, static_cast<char>('A' + label));
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  fs::path p(path);
  if (p.is_absolute() || base_dir.empty()) return path;
  return (fs::path(base_dir) / p).string();
}

// ---------------------------------------------------------------------------
// Manifest parsing
// ---------------------------------------------------------------------------

namespace {

SegmentRecord segment_from_json(const json& j) {
  SegmentRecord seg;
  seg.index = j.at("index").get<int>();
  seg.text = j.value("text", "");
  seg.salesperson_text = j.value("salesperson_text", "");
  seg.customer_text = j.value("customer_text", "");
  seg.wav_path = j.value("wav", "");
  seg.audio_features_path = j.value("audio_features", "");
  seg.text_features_path = j.value("text_features", "");
  return seg;
}

json segment_to_json(const SegmentRecord& seg) {
  json j;
  j["index"] = seg.index;
  if (!seg.text.empty()) j["text"] = seg.text;
  if (!seg.salesperson_text.empty()) j["salesperson_text"] = seg.salesperson_text;
  if (!seg.customer_text.empty()) j["customer_text"] = seg.customer_text;
  if (!seg.wav_path.empty()) j["wav"] = seg.wav_path;
  if (!seg.audio_features_path.empty()) j["audio_features"] = seg.audio_features_path;
  if (!seg.text_features_path.empty()) j["text_features"] = seg.text_features_path;
  return j;
}

/// Appends every problem found with `record` to `problems`.
void validate_record(const CallRecord& record, const std::string& base_dir,
                     std::vector<std::string>& problems) {
  auto complain = [&](const std::string& msg) {
    problems.push_back("call " + (record.call_id.empty() ? "<missing id>" : record.call_id) +
                       ": " + msg);
  };
  if (record.call_id.empty()) complain("missing call_id");
  if (record.split != "train" && record.split != "val" && record.split != "test") {
    complain("split must be train/val/test, got '" + record.split + "'");
  }
  if (record.label < 0) complain("missing label");
  if (!record.augment.empty() && record.augment != "audio" && record.augment != "text") {
    complain("augment tag must be empty, 'audio' or 'text'");
  }
  if (record.segments.empty()) complain("call has no segments");
  for (std::size_t i = 0; i < record.segments.size(); ++i) {
    const SegmentRecord& seg = record.segments[i];
    const std::string where = "segment " + std::to_string(seg.index);
    if (seg.index != static_cast<int>(i) + 1) {
      complain("segment indices must be 1..l with no gaps (saw " +
               std::to_string(seg.index) + " at position " + std::to_string(i + 1) + ")");
    }
    const bool has_wav = !seg.wav_path.empty();
    const bool has_afeat = !seg.audio_features_path.empty();
    if (has_wav == has_afeat) {
      complain(where + ": exactly one of wav / audio_features must be set");
      continue;
    }
    if (seg.text.empty() && seg.text_features_path.empty()) {
      complain(where + ": needs a transcript or text_features");
    }
    if (has_wav) {
      const std::string path = resolve_path(base_dir, seg.wav_path);
      if (!fs::exists(path)) {
        complain(where + ": missing WAV file " + seg.wav_path);
      } else {
        try {
          Waveform w = read_wav(path);
          if (w.sample_rate != kSampleRate) {
            complain(where + ": WAV sample rate " + std::to_string(w.sample_rate) +
                     ", expected " + std::to_string(kSampleRate));
          }
          if (w.samples.empty()) complain(where + ": WAV has no samples");
        } catch (const Error& e) {
          complain(where + ": " + e.what());
        }
      }
    } else {
      const std::string path = resolve_path(base_dir, seg.audio_features_path);
      if (!fs::exists(path)) {
        complain(where + ": missing feature blob " + seg.audio_features_path);
      } else {
        try {
          Shape shape = read_blob_shape(path);
          if (shape.size() != 2 || shape[0] > kAudioFrames || shape[1] != kFeatureDim) {
            complain(where + ": audio features must be [<=999 x 768], got " +
                     shape_str(shape));
          }
        } catch (const Error& e) {
          complain(where + ": " + e.what());
        }
      }
    }
    if (!seg.text_features_path.empty()) {
      const std::string path = resolve_path(base_dir, seg.text_features_path);
      if (!fs::exists(path)) {
        complain(where + ": missing feature blob " + seg.text_features_path);
      } else {
        try {
          Shape shape = read_blob_shape(path);
          if (shape.size() != 2 || shape[0] > kMaxTokens || shape[1] != kFeatureDim) {
            complain(where + ": text features must be [<=199 x 768], got " +
                     shape_str(shape));
          }
        } catch (const Error& e) {
          complain(where + ": " + e.what());
        }
      }
    }
  }
}

}  // namespace

std::vector<CallRecord> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  const std::string base_dir = fs::path(path).parent_path().string();

  std::vector<CallRecord> records;
  std::vector<std::string> problems;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      problems.push_back("line " + std::to_string(line_no) + ": unparsable JSON (" +
                         e.what() + ")");
      continue;
    }
    CallRecord rec;
    try {
      rec.call_id = j.value("call_id", "");
      if (j.contains("label")) rec.label = label_from_letter(j.at("label").get<std::string>());
      rec.domain = j.value("domain", "");
      rec.split = j.value("split", "");
      rec.augment = j.value("augment", "");
      for (const auto& sj : j.value("segments", json::array())) {
        rec.segments.push_back(segment_from_json(sj));
      }
    } catch (const json::exception& e) {
      problems.push_back("line " + std::to_string(line_no) + ": malformed record (" +
                         e.what() + ")");
      continue;
    } catch (const Error& e) {
      problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
      continue;
    }
    validate_record(rec, base_dir, problems);
    records.push_back(std::move(rec));
  }
  if (!problems.empty()) {
    std::string msg = "manifest validation failed for " + path + ":";
    for (const std::string& p : problems) msg += "\n  - " + p;
    throw ValueError(msg);
  }
  return records;
}

void save_manifest(const std::string& path, const std::vector<CallRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open manifest for writing: " + path);
  for (const CallRecord& rec : records) {
    json j;
    j["call_id"] = rec.call_id;
    if (rec.label >= 0) j["label"] = label_to_letter(rec.label);
    if (!rec.domain.empty()) j["domain"] = rec.domain;
    j["split"] = rec.split;
    if (!rec.augment.empty()) j["augment"] = rec.augment;
    json segs = json::array();
    for (const SegmentRecord& seg : rec.segments) segs.push_back(segment_to_json(seg));
    j["segments"] = std::move(segs);
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("manifest write failed: " + path);
}

// ---------------------------------------------------------------------------
// Padding / truncation
// ---------------------------------------------------------------------------

PaddedAudio pad_or_truncate_audio(const Waveform& wave) {
  if (wave.samples.empty()) throw ValueError("cannot pad an empty waveform");
  if (wave.sample_rate != kSampleRate) {
    throw ValueError("waveform sampled at " + std::to_string(wave.sample_rate) +
                     " Hz, expected " + std::to_string(kSampleRate) +
                     " Hz (no silent resampling)");
  }
  PaddedAudio out;
  out.valid_len = std::min(wave.samples.size(), kAudioSamples);
  out.samples.assign(kAudioSamples, 0.0);
  std::copy_n(wave.samples.begin(), out.valid_len, out.samples.begin());
  return out;
}

PaddedTokens pad_or_truncate_tokens(const std::vector<char32_t>& tokens) {
  if (tokens.empty()) throw ValueError("cannot pad an empty token sequence");
  PaddedTokens out;
  out.valid_len = std::min(tokens.size(), kMaxTokens);
  out.tokens.assign(kMaxTokens, U'\0');
  std::copy_n(tokens.begin(), out.valid_len, out.tokens.begin());
  return out;
}

std::size_t audio_frame_count(std::size_t valid_len) {
  const std::size_t frames = (valid_len + kFrameHop - 1) / kFrameHop;
  return std::min(frames, kAudioFrames);
}

std::vector<double> remove_silence(const std::vector<double>& samples) {
  // 25 ms frames; a run of more than 12 low frames (> 300 ms) is dropped.
  constexpr std::size_t kFrame = 200;
  constexpr std::size_t kMinRunFrames = 12;
  double peak = 0.0;
  for (double s : samples) peak = std::max(peak, std::fabs(s));
  if (peak == 0.0) return samples;
  const double threshold = 0.02 * peak;

  const std::size_t n_frames = samples.size() / kFrame;
  std::vector<bool> low(n_frames, false);
  for (std::size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < kFrame; ++i) {
      const double s = samples[f * kFrame + i];
      acc += s * s;
    }
    low[f] = std::sqrt(acc / kFrame) < threshold;
  }

  std::vector<double> out;
  out.reserve(samples.size());
  std::size_t f = 0;
  while (f < n_frames) {
    if (!low[f]) {
      out.insert(out.end(), samples.begin() + f * kFrame, samples.begin() + (f + 1) * kFrame);
      ++f;
      continue;
    }
    std::size_t run = f;
    while (run < n_frames && low[run]) ++run;
    if (run - f <= kMinRunFrames) {
      out.insert(out.end(), samples.begin() + f * kFrame, samples.begin() + run * kFrame);
    }
    f = run;
  }
  // Trailing partial frame is always kept.
  out.insert(out.end(), samples.begin() + n_frames * kFrame, samples.end());
  return out;
}

// ---------------------------------------------------------------------------
// Stub encoders
// ---------------------------------------------------------------------------

Tensor stub_encode_audio(const PaddedAudio& audio, std::uint64_t seed) {
  if (audio.samples.size() != kAudioSamples) {
    throw ValueError("stub_encode_audio expects exactly " +
                     std::to_string(kAudioSamples) + " samples, got " +
                     std::to_string(audio.samples.size()));
  }
  RngStream rng(seed, RngStream::hash_key("stub-audio-proj"));
  const double std_p = 1.0 / std::sqrt(static_cast<double>(kFrameWidth));
  std::vector<double> proj(kFrameWidth * kFeatureDim);
  for (double& v : proj) v = std_p * rng.gaussian();

  std::vector<double> out(kAudioFrames * kFeatureDim, 0.0);
  for (std::size_t f = 0; f < kAudioFrames; ++f) {
    const double* frame = audio.samples.data() + f * kFrameHop;
    double* orow = out.data() + f * kFeatureDim;
    for (std::size_t i = 0; i < kFrameWidth; ++i) {
      const double s = frame[i];
      if (s == 0.0) continue;
      const double* prow = proj.data() + i * kFeatureDim;
      for (std::size_t j = 0; j < kFeatureDim; ++j) orow[j] += s * prow[j];
    }
  }
  return Tensor::from({kAudioFrames, kFeatureDim}, std::move(out));
}

Tensor stub_encode_text(const PaddedTokens& tokens, std::uint64_t seed) {
  if (tokens.tokens.size() != kMaxTokens) {
    throw ValueError("stub_encode_text expects exactly " + std::to_string(kMaxTokens) +
                     " tokens, got " + std::to_string(tokens.tokens.size()));
  }
  const std::uint64_t table_id = RngStream::hash_key("stub-text-embed");
  std::vector<double> out(kMaxTokens * kFeatureDim, 0.0);
  for (std::size_t t = 0; t < tokens.valid_len; ++t) {
    RngStream rng(seed, RngStream::combine(table_id,
                                           static_cast<std::uint64_t>(tokens.tokens[t])));
    double* orow = out.data() + t * kFeatureDim;
    for (std::size_t j = 0; j < kFeatureDim; ++j) orow[j] = rng.gaussian();
  }
  return Tensor::from({kMaxTokens, kFeatureDim}, std::move(out));
}

// ---------------------------------------------------------------------------
// UTF-8
// ---------------------------------------------------------------------------

std::vector<char32_t> utf8_decode(const std::string& s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      extra = 2;
    } else if ((c & 0xF8) == 0xF0) {
      cp = c & 0x07;
      extra = 3;
    } else {
      throw ValueError("invalid UTF-8 byte at offset " + std::to_string(i));
    }
    if (i + extra >= s.size()) throw ValueError("truncated UTF-8 sequence");
    for (std::size_t k = 1; k <= extra; ++k) {
      const unsigned char cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) throw ValueError("invalid UTF-8 continuation byte");
      cp = (cp << 6) | (cc & 0x3F);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string utf8_encode(const std::vector<char32_t>& chars) {
  std::string out;
  out.reserve(chars.size() * 3);
  for (char32_t cp : chars) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preparation
// ---------------------------------------------------------------------------

PreparedCall prepare_call(const CallRecord& record, const PrepareOptions& opts) {
  PreparedCall call;
  call.call_id = record.call_id;
  call.label = record.label;
  call.segments.reserve(record.segments.size());
  for (const SegmentRecord& seg : record.segments) {
    SegmentFeatures f;
    if (!seg.audio_features_path.empty()) {
      Tensor blob = read_blob_file(resolve_path(opts.base_dir, seg.audio_features_path));
      if (blob.rank() != 2 || blob.rows() > kAudioFrames || blob.cols() != kFeatureDim) {
        throw ValueError("call " + record.call_id + ": audio features must be "
                         "[<=999 x 768], got " + shape_str(blob.shape()));
      }
      f.audio = blob;
    } else {
      Waveform wave = read_wav(resolve_path(opts.base_dir, seg.wav_path));
      if (opts.remove_silence) wave.samples = remove_silence(wave.samples);
      PaddedAudio padded = pad_or_truncate_audio(wave);
      Tensor full = stub_encode_audio(padded, opts.feature_seed);
      f.audio = slice_rows(full, 0, audio_frame_count(padded.valid_len)).detach();
    }
    if (!seg.text_features_path.empty()) {
      Tensor blob = read_blob_file(resolve_path(opts.base_dir, seg.text_features_path));
      if (blob.rank() != 2 || blob.rows() > kMaxTokens || blob.cols() != kFeatureDim) {
        throw ValueError("call " + record.call_id + ": text features must be "
                         "[<=199 x 768], got " + shape_str(blob.shape()));
      }
      f.text = blob;
    } else {
      PaddedTokens padded = pad_or_truncate_tokens(utf8_decode(seg.text));
      Tensor full = stub_encode_text(padded, opts.feature_seed);
      f.text = slice_rows(full, 0, padded.valid_len).detach();
    }
    call.segments.push_back(std::move(f));
  }
  return call;
}

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  auto check_split = [](std::size_t n, const char* name) {
    if (n != 0 && n < kNumBaseLabels) {
      throw ValueError(std::string("synth ") + name + " split needs at least " +
                       std::to_string(kNumBaseLabels) + " calls (one per class)");
    }
  };
  check_split(train_calls, "train");
  check_split(val_calls, "val");
  check_split(test_calls, "test");
  if (segments_per_call == 0) throw ValueError("segments_per_call must be positive");
  if (signal < 0.0) throw ValueError("signal strength must be non-negative");
  if (audio_rows == 0 || audio_rows > kAudioFrames || text_rows == 0 ||
      text_rows > kMaxTokens) {
    throw ValueError("synth feature rows out of range");
  }
}

namespace {

/// Class directions are fixed by the seed; the bias each segment receives
/// depends on its position so that context order carries information too.
struct SynthDirections {
  std::vector<double> audio;  // [5 x kFeatureDim]
  std::vector<double> text;
};

SynthDirections synth_directions(std::uint64_t seed) {
  SynthDirections d;
  d.audio.resize(kNumBaseLabels * kFeatureDim);
  d.text.resize(kNumBaseLabels * kFeatureDim);
  RngStream rng(seed, RngStream::hash_key("synth-directions"));
  for (double& v : d.audio) v = rng.gaussian();
  for (double& v : d.text) v = rng.gaussian();
  return d;
}

double position_factor(std::size_t segment_index) {
  return (segment_index % 2 == 0) ? 1.0 : 0.5;
}

Tensor synth_features(std::size_t rows, const double* direction, double signal,
                      std::size_t segment_index, RngStream& rng) {
  std::vector<double> data(rows * kFeatureDim);
  const double bias_scale = signal * position_factor(segment_index);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < kFeatureDim; ++j) {
      data[r * kFeatureDim + j] = 0.5 * rng.gaussian() + bias_scale * direction[j];
    }
  }
  return Tensor::from({rows, kFeatureDim}, std::move(data));
}

}  // namespace

SynthResult synth_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(fs::path(out_dir) / "blobs");
  const SynthDirections dirs = synth_directions(cfg.seed);
  const char* domains[] = {"dental", "beauty", "courses"};

  SynthResult result;
  auto make_split = [&](const std::string& split, std::size_t n_calls) -> std::string {
    std::vector<CallRecord> records;
    records.reserve(n_calls);
    for (std::size_t i = 0; i < n_calls; ++i) {
      const std::size_t label = i % kNumBaseLabels;
      CallRecord rec;
      rec.call_id = split + "-c" + std::to_string(i);
      rec.label = static_cast<int>(label);
      rec.domain = domains[i % 3];
      rec.split = split;
      for (std::size_t s = 0; s < cfg.segments_per_call; ++s) {
        const std::uint64_t base = RngStream::combine(
            RngStream::hash_key(rec.call_id), static_cast<std::uint64_t>(s));
        RngStream rng_a(cfg.seed, RngStream::combine(base, RngStream::hash_key("a")));
        RngStream rng_t(cfg.seed, RngStream::combine(base, RngStream::hash_key("t")));
        Tensor audio = synth_features(cfg.audio_rows,
                                      dirs.audio.data() + label * kFeatureDim,
                                      cfg.signal, s, rng_a);
        Tensor text = synth_features(cfg.text_rows,
                                     dirs.text.data() + label * kFeatureDim,
                                     cfg.signal, s, rng_t);
        const std::string stem = rec.call_id + "_s" + std::to_string(s + 1);
        const std::string a_rel = "blobs/" + stem + "_a.tensor";
        const std::string t_rel = "blobs/" + stem + "_t.tensor";
        write_blob_file((fs::path(out_dir) / a_rel).string(), audio);
        write_blob_file((fs::path(out_dir) / t_rel).string(), text);
        SegmentRecord seg;
        seg.index = static_cast<int>(s) + 1;
        seg.audio_features_path = a_rel;
        seg.text_features_path = t_rel;
        rec.segments.push_back(std::move(seg));
      }
      records.push_back(std::move(rec));
    }
    const std::string manifest = (fs::path(out_dir) / (split + ".jsonl")).string();
    save_manifest(manifest, records);
    return manifest;
  };

  result.train_manifest = make_split("train", cfg.train_calls);
  result.val_manifest = make_split("val", cfg.val_calls);
  result.test_manifest = make_split("test", cfg.test_calls);
  return result;
}

}  // namespace callfuse
