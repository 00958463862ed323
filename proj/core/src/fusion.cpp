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

#include "callfuse/fusion.hpp"

#include <cmath>

namespace callfuse {

PathwayStack PathwayStack::init(std::size_t depth, std::size_t d_model,
                                std::size_t n_heads, std::size_t d_ff, RngStream& rng) {
  PathwayStack s;
  s.blocks.reserve(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    s.blocks.push_back(AttentionBlockParams::init(d_model, n_heads, d_ff, false, rng));
  }
  return s;
}

void PathwayStack::register_into(ParamRegistry& reg, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].register_into(reg, prefix + ".block" + std::to_string(i));
  }
}

Tensor run_stack(const PathwayStack& stack, Tensor x, const Tensor& mask,
                 const ForwardCtx& ctx) {
  for (const AttentionBlockParams& block : stack.blocks) {
    x = self_attention_block(block, x, mask, ctx);
  }
  return x;
}

PathwayParams PathwayParams::init(std::size_t d_audio, std::size_t d_text,
                                  std::size_t d_model, std::size_t n_heads,
                                  std::size_t d_ff, std::size_t depth,
                                  std::size_t max_audio_len, std::size_t max_text_len,
                                  bool use_positional, RngStream& rng) {
  PathwayParams p;
  p.use_positional = use_positional;
  const double std_a = 1.0 / std::sqrt(static_cast<double>(d_audio));
  const double std_t = 1.0 / std::sqrt(static_cast<double>(d_text));
  p.audio_proj_w = Tensor::randn({d_audio, d_model}, rng, std_a).set_requires_grad(true);
  p.audio_proj_b = Tensor::zeros({d_model}).set_requires_grad(true);
  p.text_proj_w = Tensor::randn({d_text, d_model}, rng, std_t).set_requires_grad(true);
  p.text_proj_b = Tensor::zeros({d_model}).set_requires_grad(true);
  if (use_positional) {
    p.audio_pos = Tensor::randn({max_audio_len, d_model}, rng, 0.02).set_requires_grad(true);
    p.text_pos = Tensor::randn({max_text_len, d_model}, rng, 0.02).set_requires_grad(true);
  }
  p.text_stack = PathwayStack::init(depth, d_model, n_heads, d_ff, rng);
  p.cross_block = AttentionBlockParams::init(d_model, n_heads, d_ff, true, rng);
  p.fused_stack = PathwayStack::init(depth, d_model, n_heads, d_ff, rng);
  return p;
}

void PathwayParams::register_into(ParamRegistry& reg, const std::string& prefix) const {
  reg.add(prefix + ".audio_proj_w", audio_proj_w);
  reg.add(prefix + ".audio_proj_b", audio_proj_b);
  reg.add(prefix + ".text_proj_w", text_proj_w);
  reg.add(prefix + ".text_proj_b", text_proj_b);
  if (use_positional) {
    reg.add(prefix + ".audio_pos", audio_pos);
    reg.add(prefix + ".text_pos", text_pos);
  }
  text_stack.register_into(reg, prefix + ".text_stack");
  cross_block.register_into(reg, prefix + ".cross");
  fused_stack.register_into(reg, prefix + ".fused_stack");
}

std::size_t mask_prefix_len(const Tensor& mask, const char* what) {
  std::size_t v = 0;
  bool closed = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.values()[i] != 0.0) {
      if (closed) {
        throw ValueError(std::string(what) +
                         ": mask must be a valid prefix (1s followed by 0s)");
      }
      ++v;
    } else {
      closed = true;
    }
  }
  if (v == 0) throw ValueError(std::string(what) + ": mask has no valid positions");
  return v;
}

std::pair<Tensor, Tensor> segment_pathways_trimmed(const PathwayParams& p,
                                                   const Tensor& audio_valid,
                                                   const Tensor& text_valid,
                                                   const ForwardCtx& ctx) {
  const std::size_t va = audio_valid.rows();
  const std::size_t vt = text_valid.rows();
  Tensor a = add(matmul(audio_valid, p.audio_proj_w), p.audio_proj_b);
  Tensor x = add(matmul(text_valid, p.text_proj_w), p.text_proj_b);
  if (p.use_positional) {
    if (va > p.audio_pos.rows() || vt > p.text_pos.rows()) {
      throw ShapeError("segment longer than configured positional table: audio " +
                       std::to_string(va) + "/" + std::to_string(p.audio_pos.rows()) +
                       ", text " + std::to_string(vt) + "/" +
                       std::to_string(p.text_pos.rows()));
    }
    a = add(a, slice_rows(p.audio_pos, 0, va));
    x = add(x, slice_rows(p.text_pos, 0, vt));
  }
  Tensor ones_a = Tensor::ones({va});
  Tensor ones_t = Tensor::ones({vt});
  Tensor t = run_stack(p.text_stack, x, ones_t, ctx);
  Tensor m = cross_attention_block(p.cross_block, x, a, ones_a, ctx);
  Tensor t_m = run_stack(p.fused_stack, m, ones_t, ctx);
  return {t, t_m};
}

std::pair<Tensor, Tensor> segment_pathways(const PathwayParams& p,
                                           const Tensor& audio_feat,
                                           const Tensor& audio_mask,
                                           const Tensor& text_feat,
                                           const Tensor& text_mask,
                                           const ForwardCtx& ctx) {
  const std::size_t va = mask_prefix_len(audio_mask, "segment_pathways audio");
  const std::size_t vt = mask_prefix_len(text_mask, "segment_pathways text");
  Tensor audio_valid =
      va == audio_feat.rows() ? audio_feat : slice_rows(audio_feat, 0, va);
  Tensor text_valid = vt == text_feat.rows() ? text_feat : slice_rows(text_feat, 0, vt);
  auto [t, t_m] = segment_pathways_trimmed(p, audio_valid, text_valid, ctx);
  return {pad_rows(t, text_feat.rows()), pad_rows(t_m, text_feat.rows())};
}

BottleneckState bottleneck_layer_with(const BottleneckState& s,
                                      const ChannelTransform& text_transform,
                                      const ChannelTransform& fused_transform) {
  const std::size_t len = s.text.rows();
  const std::size_t n = s.tokens.rows();
  if (s.fused.rows() != len || s.fused.cols() != s.text.cols()) {
    throw ShapeError("bottleneck channels disagree: " + shape_str(s.text.shape()) +
                     " vs " + shape_str(s.fused.shape()));
  }
  // Token positions are always attendable; the text mask keeps padded
  // positions dark after concatenation.
  Tensor ext_mask = concat_vec(s.text_mask, Tensor::ones({n}));

  Tensor text_out = text_transform(concat_rows(s.text, s.tokens), ext_mask);
  Tensor fused_out = fused_transform(concat_rows(s.fused, s.tokens), ext_mask);
  if (text_out.rows() != len + n || fused_out.rows() != len + n) {
    throw ShapeError("bottleneck transform changed sequence length");
  }
  BottleneckState next;
  next.text = slice_rows(text_out, 0, len);
  next.fused = slice_rows(fused_out, 0, len);
  Tensor tokens_text = slice_rows(text_out, len, len + n);
  Tensor tokens_fused = slice_rows(fused_out, len, len + n);
  next.tokens = scale(add(tokens_text, tokens_fused), 0.5);
  next.text_mask = s.text_mask;
  return next;
}

BottleneckParams BottleneckParams::init(std::size_t n_layers, std::size_t n_tokens,
                                        std::size_t d_model, std::size_t n_heads,
                                        std::size_t d_ff, bool share_weights,
                                        RngStream& rng) {
  if (n_tokens == 0) throw ValueError("bottleneck needs at least one token");
  BottleneckParams p;
  p.tokens = Tensor::randn({n_tokens, d_model}, rng, 0.02).set_requires_grad(true);
  p.layers.reserve(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    BottleneckLayerParams layer;
    layer.text_channel = AttentionBlockParams::init(d_model, n_heads, d_ff, false, rng);
    layer.fused_channel =
        share_weights ? layer.text_channel
                      : AttentionBlockParams::init(d_model, n_heads, d_ff, false, rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void BottleneckParams::register_into(ParamRegistry& reg, const std::string& prefix,
                                     bool share_weights) const {
  reg.add(prefix + ".tokens", tokens);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = prefix + ".layer" + std::to_string(i);
    layers[i].text_channel.register_into(reg, base + ".text");
    if (!share_weights) {
      layers[i].fused_channel.register_into(reg, base + ".fused");
    }
  }
}

BottleneckState bottleneck_layer(const BottleneckLayerParams& p, const BottleneckState& s,
                                 const ForwardCtx& ctx) {
  auto text_fn = [&](const Tensor& seq, const Tensor& mask) {
    return self_attention_block(p.text_channel, seq, mask, ctx);
  };
  auto fused_fn = [&](const Tensor& seq, const Tensor& mask) {
    return self_attention_block(p.fused_channel, seq, mask, ctx);
  };
  return bottleneck_layer_with(s, text_fn, fused_fn);
}

std::pair<Tensor, Tensor> bottleneck_stack(const BottleneckParams& p, const Tensor& text,
                                           const Tensor& fused, const Tensor& text_mask,
                                           const ForwardCtx& ctx) {
  BottleneckState state{text, fused, p.tokens, text_mask};
  for (const BottleneckLayerParams& layer : p.layers) {
    state = bottleneck_layer(layer, state, ctx);
  }
  return {state.text, state.tokens};
}

Tensor segment_pool(const Tensor& t_final, const Tensor& text_mask) {
  return mean_rows_masked(t_final, text_mask);
}

}  // namespace callfuse
