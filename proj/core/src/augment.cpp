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

#include "callfuse/augment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace callfuse {

namespace fs = std::filesystem;

void AugmentPolicy::validate() const {
  if (noise_sigma < 0.0) throw ValueError("noise_sigma must be non-negative");
  if (mask_rate < 0.0 || mask_rate > 1.0) throw ValueError("mask_rate must lie in [0, 1]");
  if (mask_max_width == 0) throw ValueError("mask_max_width must be at least 1");
  if (homophone_prob < 0.0 || homophone_prob > 1.0) {
    throw ValueError("homophone_prob must lie in [0, 1]");
  }
  if (speed_factors.empty()) throw ValueError("speed_factors must not be empty");
  for (double f : speed_factors) {
    if (f < 0.5 || f > 2.0) {
      throw ValueError("speed factor " + std::to_string(f) + " outside [0.5, 2.0]");
    }
  }
}

std::vector<double> gaussian_noise(const std::vector<double>& wave, double sigma,
                                   RngStream& rng) {
  if (sigma < 0.0) throw ValueError("gaussian_noise: sigma must be non-negative");
  for (double s : wave) {
    if (!std::isfinite(s)) throw ValueError("gaussian_noise: non-finite input sample");
  }
  if (sigma == 0.0) return wave;
  std::vector<double> out(wave.size());
  for (std::size_t i = 0; i < wave.size(); ++i) out[i] = wave[i] + sigma * rng.gaussian();
  return out;
}

// ---------------------------------------------------------------------------
// WSOLA time stretch
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kWsolaWindow = 200;  // 25 ms at 8 kHz
constexpr std::size_t kWsolaHop = 100;     // 50% overlap
constexpr std::size_t kWsolaSeek = 60;     // alignment search radius

/// Normalized cross-correlation over the overlap region.
double alignment_score(const double* a, const double* b, std::size_t n) {
  double dot = 0.0, ea = 0.0, eb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    ea += a[i] * a[i];
    eb += b[i] * b[i];
  }
  return dot / std::sqrt(ea * eb + 1e-12);
}

/// Fallback for inputs shorter than two analysis windows: plain linear
/// interpolation. Tonal fidelity is meaningless at that scale anyway.
std::vector<double> resample_linear(const std::vector<double>& wave, std::size_t out_len) {
  std::vector<double> out(out_len);
  if (wave.size() == 1) {
    std::fill(out.begin(), out.end(), wave[0]);
    return out;
  }
  const double step = static_cast<double>(wave.size() - 1) /
                      static_cast<double>(std::max<std::size_t>(out_len - 1, 1));
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = i * step;
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), wave.size() - 2);
    const double frac = pos - static_cast<double>(lo);
    out[i] = wave[lo] * (1.0 - frac) + wave[lo + 1] * frac;
  }
  return out;
}

}  // namespace

std::vector<double> speed_perturb(const std::vector<double>& wave, double factor,
                                  RngStream& /*rng*/) {
  if (factor < 0.5 || factor > 2.0) {
    throw ValueError("speed factor " + std::to_string(factor) + " outside [0.5, 2.0]");
  }
  if (factor == 1.0) return wave;
  if (wave.empty()) return wave;

  const std::size_t len = wave.size();
  const std::size_t out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(len) / factor));
  if (out_len == 0) return {};
  if (len < 2 * kWsolaWindow) return resample_linear(wave, out_len);

  std::vector<double> window(kWsolaWindow);
  for (std::size_t i = 0; i < kWsolaWindow; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * 3.141592653589793 * static_cast<double>(i) /
                                     static_cast<double>(kWsolaWindow));
  }

  std::vector<double> out(out_len + kWsolaWindow, 0.0);
  std::vector<double> wsum(out_len + kWsolaWindow, 0.0);
  const std::size_t overlap = kWsolaWindow - kWsolaHop;
  std::size_t prev_src = 0;

  for (std::size_t k = 0;; ++k) {
    const std::size_t out_pos = k * kWsolaHop;
    if (out_pos >= out_len) break;
    std::size_t src;
    if (k == 0) {
      src = 0;
    } else {
      const auto nominal = static_cast<long long>(
          std::llround(static_cast<double>(out_pos) * factor));
      const long long hi_bound = static_cast<long long>(len - kWsolaWindow);
      long long lo = std::max<long long>(0, nominal - static_cast<long long>(kWsolaSeek));
      long long hi = std::min<long long>(hi_bound, nominal + static_cast<long long>(kWsolaSeek));
      if (lo > hi_bound) break;  // source exhausted
      if (hi < lo) hi = lo;
      // The natural continuation of the previous frame is the reference the
      // candidate start must line up with.
      const std::size_t cont = std::min(prev_src + kWsolaHop, len - overlap);
      double best = -2.0;
      src = static_cast<std::size_t>(lo);
      for (long long s = lo; s <= hi; ++s) {
        const double score =
            alignment_score(wave.data() + s, wave.data() + cont, overlap);
        if (score > best) {
          best = score;
          src = static_cast<std::size_t>(s);
        }
      }
    }
    for (std::size_t i = 0; i < kWsolaWindow; ++i) {
      out[out_pos + i] += window[i] * wave[src + i];
      wsum[out_pos + i] += window[i];
    }
    prev_src = src;
  }

  out.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    if (wsum[i] > 1e-9) out[i] /= wsum[i];
  }
  return out;
}

std::vector<double> random_mask(const std::vector<double>& wave, double rate,
                                std::size_t max_width, RngStream& rng) {
  if (rate < 0.0 || rate > 1.0) throw ValueError("mask rate must lie in [0, 1]");
  if (max_width == 0) throw ValueError("mask max_width must be at least 1");
  std::vector<double> out = wave;
  const std::size_t len = wave.size();
  const auto target = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(len)));
  if (target == 0 || len == 0) return out;

  std::vector<bool> zeroed(len, false);
  std::size_t zero_count = 0;
  std::size_t free_count = len;
  while (zero_count < target && free_count > 0) {
    // Pick the r-th still-free sample as the span start, then extend right
    // through free samples only, so spans never overlap.
    std::size_t r = rng.below(free_count);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < len; ++i) {
      if (!zeroed[i]) {
        if (r == 0) {
          pos = i;
          break;
        }
        --r;
      }
    }
    const std::size_t want = 1 + static_cast<std::size_t>(rng.below(max_width));
    std::size_t w = 0;
    while (w < want && pos + w < len && !zeroed[pos + w]) ++w;
    for (std::size_t i = 0; i < w; ++i) {
      zeroed[pos + i] = true;
      out[pos + i] = 0.0;
    }
    zero_count += w;
    free_count -= w;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Homophone substitution
// ---------------------------------------------------------------------------

HomophoneDict HomophoneDict::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open homophone dictionary: " + path);
  HomophoneDict dict;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValueError("homophone dictionary " + path + " line " +
                       std::to_string(line_no) + ": missing TAB separator");
    }
    const std::vector<char32_t> key = utf8_decode(line.substr(0, tab));
    if (key.size() != 1) {
      throw ValueError("homophone dictionary " + path + " line " +
                       std::to_string(line_no) + ": key must be a single character");
    }
    std::vector<char32_t> homophones;
    std::istringstream rest(line.substr(tab + 1));
    std::string token;
    while (rest >> token) {
      const std::vector<char32_t> h = utf8_decode(token);
      if (h.size() != 1) {
        throw ValueError("homophone dictionary " + path + " line " +
                         std::to_string(line_no) +
                         ": homophones must be single characters");
      }
      homophones.push_back(h[0]);
    }
    if (homophones.empty()) {
      throw ValueError("homophone dictionary " + path + " line " +
                       std::to_string(line_no) + ": character maps to an empty list");
    }
    if (homophones.size() == 1 && homophones[0] == key[0]) {
      throw ValueError("homophone dictionary " + path + " line " +
                       std::to_string(line_no) +
                       ": character lists itself as its only homophone");
    }
    if (!dict.entries.emplace(key[0], std::move(homophones)).second) {
      throw ValueError("homophone dictionary " + path + " line " +
                       std::to_string(line_no) + ": duplicate entry");
    }
  }
  return dict;
}

std::vector<char32_t> homophone_substitute(const std::vector<char32_t>& chars,
                                           const HomophoneDict& dict, double p,
                                           RngStream& rng) {
  if (p < 0.0 || p > 1.0) throw ValueError("homophone probability must lie in [0, 1]");
  if (p == 0.0) return chars;
  std::vector<char32_t> out = chars;
  for (char32_t& c : out) {
    auto it = dict.entries.find(c);
    if (it == dict.entries.end()) continue;
    if (rng.uniform() < p) {
      c = it->second[rng.below(it->second.size())];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset expansion
// ---------------------------------------------------------------------------

namespace {

std::uint64_t record_stream(const AugmentPolicy& policy, const std::string& call_id,
                            const char* op, std::size_t copy, std::size_t segment) {
  std::uint64_t id = RngStream::hash_key(call_id);
  id = RngStream::combine(id, RngStream::hash_key(op));
  id = RngStream::combine(id, copy);
  id = RngStream::combine(id, segment);
  (void)policy;
  return id;
}

}  // namespace

std::vector<CallRecord> expand_dataset(const std::vector<CallRecord>& records,
                                       const AugmentPolicy& policy,
                                       const HomophoneDict& dict,
                                       const std::string& in_base_dir,
                                       const std::string& out_dir) {
  policy.validate();
  for (const CallRecord& rec : records) {
    if (rec.split != "train") {
      throw ValueError("expand_dataset: refusing to augment non-train record '" +
                       rec.call_id + "' (split '" + rec.split + "')");
    }
  }
  fs::create_directories(fs::path(out_dir) / "aug");

  std::vector<CallRecord> out;
  out.reserve(records.size() * (1 + policy.audio_multiplicity + policy.text_multiplicity));
  for (const CallRecord& rec : records) {
    // The original, with paths re-anchored so the expanded manifest can live
    // in out_dir.
    CallRecord original = rec;
    for (SegmentRecord& seg : original.segments) {
      if (!seg.wav_path.empty())
        seg.wav_path = fs::absolute(resolve_path(in_base_dir, seg.wav_path)).string();
      if (!seg.audio_features_path.empty())
        seg.audio_features_path =
            fs::absolute(resolve_path(in_base_dir, seg.audio_features_path)).string();
      if (!seg.text_features_path.empty())
        seg.text_features_path =
            fs::absolute(resolve_path(in_base_dir, seg.text_features_path)).string();
    }
    out.push_back(original);

    for (std::size_t c = 1; c <= policy.audio_multiplicity; ++c) {
      CallRecord copy = original;
      copy.augment = "audio";
      for (std::size_t s = 0; s < copy.segments.size(); ++s) {
        SegmentRecord& seg = copy.segments[s];
        if (seg.wav_path.empty()) {
          throw ValueError("expand_dataset: call '" + rec.call_id + "' segment " +
                           std::to_string(seg.index) +
                           " has no waveform; audio augmentation needs WAV sources");
        }
        Waveform wave = read_wav(seg.wav_path);
        RngStream rng(policy.seed, record_stream(policy, rec.call_id, "audio", c, s));
        std::vector<double> samples =
            gaussian_noise(wave.samples, policy.noise_sigma, rng);
        const double factor = policy.speed_factors[rng.below(policy.speed_factors.size())];
        samples = speed_perturb(samples, factor, rng);
        samples = random_mask(samples, policy.mask_rate, policy.mask_max_width, rng);
        const std::string rel = "aug/" + rec.call_id + "_a" + std::to_string(c) + "_s" +
                                std::to_string(seg.index) + ".wav";
        write_wav((fs::path(out_dir) / rel).string(),
                  Waveform{std::move(samples), wave.sample_rate});
        seg.wav_path = rel;
      }
      out.push_back(std::move(copy));
    }

    for (std::size_t c = 1; c <= policy.text_multiplicity; ++c) {
      CallRecord copy = original;
      copy.augment = "text";
      for (std::size_t s = 0; s < copy.segments.size(); ++s) {
        SegmentRecord& seg = copy.segments[s];
        if (seg.text.empty()) {
          throw ValueError("expand_dataset: call '" + rec.call_id + "' segment " +
                           std::to_string(seg.index) +
                           " has no transcript; text augmentation needs transcripts");
        }
        RngStream rng(policy.seed, record_stream(policy, rec.call_id, "text", c, s));
        seg.text = utf8_encode(
            homophone_substitute(utf8_decode(seg.text), dict, policy.homophone_prob, rng));
      }
      out.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace callfuse
