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

#include "callfuse/attention.hpp"

#include <cmath>

namespace callfuse {

AttentionBlockParams AttentionBlockParams::init(std::size_t d_model,
                                                std::size_t n_heads, std::size_t d_ff,
                                                bool cross, RngStream& rng) {
  if (d_model == 0 || n_heads == 0 || d_ff == 0) {
    throw ValueError("attention block dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ValueError("n_heads " + std::to_string(n_heads) + " must divide d_model " +
                     std::to_string(d_model));
  }
  const double std_w = 1.0 / std::sqrt(static_cast<double>(d_model));
  AttentionBlockParams p;
  p.d_model = d_model;
  p.n_heads = n_heads;
  p.d_ff = d_ff;
  p.cross = cross;
  auto w = [&](std::size_t r, std::size_t c) {
    return Tensor::randn({r, c}, rng, std_w).set_requires_grad(true);
  };
  auto b = [&](std::size_t n) { return Tensor::zeros({n}).set_requires_grad(true); };
  p.w_q = w(d_model, d_model);
  p.w_k = w(d_model, d_model);
  p.w_v = w(d_model, d_model);
  p.w_o = w(d_model, d_model);
  p.b_q = b(d_model);
  p.b_k = b(d_model);
  p.b_v = b(d_model);
  p.b_o = b(d_model);
  p.ffn_w1 = w(d_model, d_ff);
  p.ffn_b1 = b(d_ff);
  p.ffn_w2 = Tensor::randn({d_ff, d_model}, rng, 1.0 / std::sqrt(static_cast<double>(d_ff)))
                 .set_requires_grad(true);
  p.ffn_b2 = b(d_model);
  p.ln1_gain = Tensor::ones({d_model}).set_requires_grad(true);
  p.ln1_offset = b(d_model);
  p.ln2_gain = Tensor::ones({d_model}).set_requires_grad(true);
  p.ln2_offset = b(d_model);
  if (cross) {
    p.ln_kv_gain = Tensor::ones({d_model}).set_requires_grad(true);
    p.ln_kv_offset = b(d_model);
  }
  return p;
}

void AttentionBlockParams::register_into(ParamRegistry& reg,
                                         const std::string& prefix) const {
  reg.add(prefix + ".w_q", w_q);
  reg.add(prefix + ".w_k", w_k);
  reg.add(prefix + ".w_v", w_v);
  reg.add(prefix + ".w_o", w_o);
  reg.add(prefix + ".b_q", b_q);
  reg.add(prefix + ".b_k", b_k);
  reg.add(prefix + ".b_v", b_v);
  reg.add(prefix + ".b_o", b_o);
  reg.add(prefix + ".ffn_w1", ffn_w1);
  reg.add(prefix + ".ffn_b1", ffn_b1);
  reg.add(prefix + ".ffn_w2", ffn_w2);
  reg.add(prefix + ".ffn_b2", ffn_b2);
  reg.add(prefix + ".ln1_gain", ln1_gain);
  reg.add(prefix + ".ln1_offset", ln1_offset);
  reg.add(prefix + ".ln2_gain", ln2_gain);
  reg.add(prefix + ".ln2_offset", ln2_offset);
  if (cross) {
    reg.add(prefix + ".ln_kv_gain", ln_kv_gain);
    reg.add(prefix + ".ln_kv_offset", ln_kv_offset);
  }
}

Tensor scaled_dot_attention(const AttentionBlockParams& p, const Tensor& q_in,
                            const Tensor& k_in, const Tensor& v_in,
                            const Tensor& key_mask) {
  if (q_in.cols() != p.d_model || k_in.cols() != p.d_model ||
      v_in.cols() != p.d_model) {
    throw ShapeError("attention inputs must have width " + std::to_string(p.d_model) +
                     ": Q " + shape_str(q_in.shape()) + ", K " +
                     shape_str(k_in.shape()) + ", V " + shape_str(v_in.shape()));
  }
  if (k_in.rows() != v_in.rows()) {
    throw ShapeError("K and V must share length: " + shape_str(k_in.shape()) + " vs " +
                     shape_str(v_in.shape()));
  }
  Tensor q = add(matmul(q_in, p.w_q), p.b_q);
  Tensor k = add(matmul(k_in, p.w_k), p.b_k);
  Tensor v = add(matmul(v_in, p.w_v), p.b_v);

  const std::size_t dk = p.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor heads;
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
    Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
    Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
    Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt_dk);
    Tensor weights = softmax_masked(scores, key_mask);
    Tensor zh = matmul(weights, vh);
    heads = heads.defined() ? concat_cols(heads, zh) : zh;
  }
  return add(matmul(heads, p.w_o), p.b_o);
}

namespace {

Tensor feed_forward(const AttentionBlockParams& p, const Tensor& x) {
  return add(matmul(relu(add(matmul(x, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);
}

}  // namespace

Tensor self_attention_block(const AttentionBlockParams& p, const Tensor& x,
                            const Tensor& mask, const ForwardCtx& ctx) {
  if (x.rows() == 0) throw ShapeError("self_attention_block: empty input");
  Tensor y = layer_norm(x, p.ln1_gain, p.ln1_offset);
  Tensor attn = scaled_dot_attention(p, y, y, y, mask);
  Tensor h = add(x, dropout(attn, ctx.dropout, ctx.training, ctx.rng));
  Tensor f = feed_forward(p, layer_norm(h, p.ln2_gain, p.ln2_offset));
  Tensor out = add(h, dropout(f, ctx.dropout, ctx.training, ctx.rng));
  // Padded rows are pinned to zero so masked positions cannot influence
  // anything downstream, not even through their own residual path.
  return scale_rows(out, mask);
}

Tensor cross_attention_block(const AttentionBlockParams& p, const Tensor& text,
                             const Tensor& audio, const Tensor& audio_mask,
                             const ForwardCtx& ctx) {
  if (!p.cross) {
    throw ValueError("cross_attention_block needs params built with cross=true");
  }
  if (text.cols() != audio.cols()) {
    throw ShapeError("cross_attention_block width mismatch: text " +
                     shape_str(text.shape()) + " vs audio " + shape_str(audio.shape()));
  }
  Tensor yq = layer_norm(text, p.ln1_gain, p.ln1_offset);
  Tensor ykv = layer_norm(audio, p.ln_kv_gain, p.ln_kv_offset);
  Tensor attn = scaled_dot_attention(p, yq, ykv, ykv, audio_mask);
  Tensor h = add(text, dropout(attn, ctx.dropout, ctx.training, ctx.rng));
  Tensor f = feed_forward(p, layer_norm(h, p.ln2_gain, p.ln2_offset));
  return add(h, dropout(f, ctx.dropout, ctx.training, ctx.rng));
}

}  // namespace callfuse
