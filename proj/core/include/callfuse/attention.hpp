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

#ifndef CALLFUSE_ATTENTION_HPP
#define CALLFUSE_ATTENTION_HPP

#include <cstddef>
#include <string>

#include "callfuse/context.hpp"
#include "callfuse/tensor.hpp"

namespace callfuse {

/// Parameters of one attention block: multi-head attention projections plus
/// a pointwise feed-forward sublayer, with pre-norm layer norms. Cross
/// blocks carry an extra norm for the key/value stream.
struct AttentionBlockParams {
  std::size_t d_model = 0;
  std::size_t n_heads = 0;
  std::size_t d_ff = 0;
  bool cross = false;

  Tensor w_q, w_k, w_v, w_o;  // [d_model x d_model]
  Tensor b_q, b_k, b_v, b_o;  // [d_model]
  Tensor ffn_w1, ffn_b1;      // [d_model x d_ff], [d_ff]
  Tensor ffn_w2, ffn_b2;      // [d_ff x d_model], [d_model]
  Tensor ln1_gain, ln1_offset;
  Tensor ln2_gain, ln2_offset;
  Tensor ln_kv_gain, ln_kv_offset;  // cross blocks only

  /// n_heads must divide d_model; weights drawn from N(0, 1/d_model).
  static AttentionBlockParams init(std::size_t d_model, std::size_t n_heads,
                                   std::size_t d_ff, bool cross, RngStream& rng);

  std::size_t head_dim() const { return d_model / n_heads; }
  void register_into(ParamRegistry& reg, const std::string& prefix) const;
};

/// Multi-head scaled dot-product attention: projects the three streams,
/// splits heads, applies softmax_masked(Q K^T / sqrt(d_k)) per head over the
/// key axis, concatenates heads, and output-projects. `key_mask` is a 0/1
/// rank-1 tensor over key positions; masked keys carry exactly zero weight.
Tensor scaled_dot_attention(const AttentionBlockParams& p, const Tensor& q_in,
                            const Tensor& k_in, const Tensor& v_in,
                            const Tensor& key_mask);

/// Pre-norm self-attention block with residual connections:
///   h = x + dropout(attn(ln1(x)));  y = h + dropout(ffn(ln2(h)))
/// Masked (padded) rows are zeroed on output so they can never leak.
Tensor self_attention_block(const AttentionBlockParams& p, const Tensor& x,
                            const Tensor& mask, const ForwardCtx& ctx);

/// Pre-norm cross-attention block: queries come from the text stream, keys
/// and values from the audio stream. The residual path stays on the text
/// stream; a pointwise feed-forward sublayer follows. Output length equals
/// the query length.
Tensor cross_attention_block(const AttentionBlockParams& p, const Tensor& text,
                             const Tensor& audio, const Tensor& audio_mask,
                             const ForwardCtx& ctx);

}  // namespace callfuse

#endif  // CALLFUSE_ATTENTION_HPP
