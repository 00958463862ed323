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

#ifndef CALLFUSE_TESTS_TESTUTIL_HPP
#define CALLFUSE_TESTS_TESTUTIL_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "callfuse/attention.hpp"
#include "callfuse/tensor.hpp"

namespace testutil {

// ---------------------------------------------------------------------------
// Scratch directories
// ---------------------------------------------------------------------------

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    path_ = (base / ("callfuse_" + tag + "_" + std::to_string(rd()))).string();
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (std::filesystem::path(path_) / name).string();
  }

 private:
  std::string path_;
};

inline std::uint64_t file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char c;
  while (is.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Max absolute difference helpers
// ---------------------------------------------------------------------------

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return 1e300;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::fabs(a[i] - b[i]));
  }
  return worst;
}

inline double max_abs_diff(const callfuse::Tensor& a, const callfuse::Tensor& b) {
  return max_abs_diff(a.values(), b.values());
}

inline bool bit_identical(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Straight-line re-implementations used as independent oracles. These use
// plain double loops on raw values and never touch the tape ops they check.
// ---------------------------------------------------------------------------

inline std::vector<double> naive_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b, std::size_t m,
                                        std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (std::size_t kk = 0; kk < k; ++kk)
        acc += static_cast<long double>(a[i * k + kk]) * b[kk * n + j];
      out[i * n + j] = static_cast<double>(acc);
    }
  return out;
}

inline std::vector<double> naive_softmax_row(const std::vector<double>& x,
                                             const std::vector<double>& mask) {
  long double mx = -1e400L;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i] != 0.0 && x[i] > mx) mx = x[i];
  std::vector<long double> e(x.size(), 0.0L);
  long double sum = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i] != 0.0) {
      e[i] = expl(static_cast<long double>(x[i]) - mx);
      sum += e[i];
    }
  }
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
  return out;
}

inline std::vector<double> naive_layer_norm(const std::vector<double>& x,
                                            const std::vector<double>& gain,
                                            const std::vector<double>& offset,
                                            std::size_t rows, std::size_t d,
                                            double eps = 1e-5) {
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    long double mean = 0.0L;
    for (std::size_t i = 0; i < d; ++i) mean += x[r * d + i];
    mean /= d;
    long double var = 0.0L;
    for (std::size_t i = 0; i < d; ++i) {
      const long double c = x[r * d + i] - mean;
      var += c * c;
    }
    var /= d;
    const long double inv = 1.0L / sqrtl(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      out[r * d + i] =
          static_cast<double>((x[r * d + i] - mean) * inv * gain[i] + offset[i]);
    }
  }
  return out;
}

/// Multi-head attention by the direct formula, given the projected inputs.
inline std::vector<double> naive_multihead_attention(
    const callfuse::AttentionBlockParams& p, const std::vector<double>& q_in,
    const std::vector<double>& k_in, const std::vector<double>& v_in, std::size_t lq,
    std::size_t lk, const std::vector<double>& key_mask) {
  const std::size_t d = p.d_model;
  const std::size_t dk = p.head_dim();
  auto project = [&](const std::vector<double>& x, std::size_t rows,
                     const callfuse::Tensor& w, const callfuse::Tensor& b) {
    std::vector<double> y = naive_matmul(x, w.values(), rows, d, d);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) y[r * d + j] += b.values()[j];
    return y;
  };
  const std::vector<double> q = project(q_in, lq, p.w_q, p.b_q);
  const std::vector<double> k = project(k_in, lk, p.w_k, p.b_k);
  const std::vector<double> v = project(v_in, lk, p.w_v, p.b_v);

  std::vector<double> merged(lq * d, 0.0);
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    for (std::size_t i = 0; i < lq; ++i) {
      std::vector<double> scores(lk);
      for (std::size_t j = 0; j < lk; ++j) {
        long double acc = 0.0L;
        for (std::size_t c = 0; c < dk; ++c)
          acc += static_cast<long double>(q[i * d + h * dk + c]) *
                 k[j * d + h * dk + c];
        scores[j] = static_cast<double>(acc / sqrtl(static_cast<long double>(dk)));
      }
      const std::vector<double> w = naive_softmax_row(scores, key_mask);
      for (std::size_t c = 0; c < dk; ++c) {
        long double acc = 0.0L;
        for (std::size_t j = 0; j < lk; ++j) acc += w[j] * v[j * d + h * dk + c];
        merged[i * d + h * dk + c] = static_cast<double>(acc);
      }
    }
  }
  std::vector<double> out = naive_matmul(merged, p.w_o.values(), lq, d, d);
  for (std::size_t r = 0; r < lq; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += p.b_o.values()[j];
  return out;
}

/// The full pre-norm self-attention block by the direct formula, including
/// the exact zeroing of masked rows.
inline std::vector<double> naive_self_block(const callfuse::AttentionBlockParams& p,
                                            const std::vector<double>& x, std::size_t l,
                                            const std::vector<double>& mask) {
  const std::size_t d = p.d_model;
  const std::vector<double> y =
      naive_layer_norm(x, p.ln1_gain.values(), p.ln1_offset.values(), l, d);
  const std::vector<double> attn = naive_multihead_attention(p, y, y, y, l, l, mask);
  std::vector<double> h(l * d);
  for (std::size_t i = 0; i < l * d; ++i) h[i] = x[i] + attn[i];
  const std::vector<double> z =
      naive_layer_norm(h, p.ln2_gain.values(), p.ln2_offset.values(), l, d);
  std::vector<double> f1 = naive_matmul(z, p.ffn_w1.values(), l, d, p.d_ff);
  for (std::size_t r = 0; r < l; ++r)
    for (std::size_t j = 0; j < p.d_ff; ++j) {
      f1[r * p.d_ff + j] += p.ffn_b1.values()[j];
      f1[r * p.d_ff + j] = std::max(0.0, f1[r * p.d_ff + j]);
    }
  std::vector<double> f2 = naive_matmul(f1, p.ffn_w2.values(), l, p.d_ff, d);
  std::vector<double> out(l * d);
  for (std::size_t r = 0; r < l; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      out[r * d + j] = (h[r * d + j] + f2[r * d + j] + p.ffn_b2.values()[j]) * mask[r];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral oracle for the time stretcher
// ---------------------------------------------------------------------------

inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.141592653589793238 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> t = a[i + j + len / 2] * w;
        a[i + j] = u + t;
        a[i + j + len / 2] = u - t;
        w *= wl;
      }
    }
  }
}

/// Dominant frequency of a Hann-windowed slice from the middle of `x`.
inline double dominant_frequency(const std::vector<double>& x, double sample_rate) {
  std::size_t n = 1;
  while (n * 2 <= x.size() && n < 8192) n *= 2;
  const std::size_t start = (x.size() - n) / 2;
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w =
        0.5 - 0.5 * std::cos(2.0 * 3.141592653589793 * static_cast<double>(i) /
                             static_cast<double>(n));
    buf[i] = x[start + i] * w;
  }
  fft_inplace(buf);
  std::size_t best = 1;
  double best_mag = 0.0;
  for (std::size_t i = 1; i < n / 2; ++i) {
    const double mag = std::abs(buf[i]);
    if (mag > best_mag) {
      best_mag = mag;
      best = i;
    }
  }
  return static_cast<double>(best) * sample_rate / static_cast<double>(n);
}

inline std::vector<double> sine_wave(double freq, double sample_rate, std::size_t n,
                                     double amplitude = 0.5) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = amplitude * std::sin(2.0 * 3.141592653589793 * freq *
                                  static_cast<double>(i) / sample_rate);
  }
  return out;
}

}  // namespace testutil

#endif  // CALLFUSE_TESTS_TESTUTIL_HPP
