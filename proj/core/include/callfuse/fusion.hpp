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

#ifndef CALLFUSE_FUSION_HPP
#define CALLFUSE_FUSION_HPP

#include <functional>
#include <utility>
#include <vector>

#include "callfuse/attention.hpp"
#include "callfuse/context.hpp"
#include "callfuse/tensor.hpp"

namespace callfuse {

/// A stack of self-attention blocks applied in sequence.
struct PathwayStack {
  std::vector<AttentionBlockParams> blocks;

  static PathwayStack init(std::size_t depth, std::size_t d_model, std::size_t n_heads,
                           std::size_t d_ff, RngStream& rng);
  void register_into(ParamRegistry& reg, const std::string& prefix) const;
};

Tensor run_stack(const PathwayStack& stack, Tensor x, const Tensor& mask,
                 const ForwardCtx& ctx);

/// Parameters of the two segment pathways: input projections, optional
/// learned positional embeddings, the text backbone stack, and the
/// cross-attention + self-attention fused stack.
struct PathwayParams {
  Tensor audio_proj_w, audio_proj_b;  // [d_audio x d_model], [d_model]
  Tensor text_proj_w, text_proj_b;    // [d_text x d_model], [d_model]
  Tensor audio_pos, text_pos;         // [max_len x d_model] when positional on
  bool use_positional = true;
  PathwayStack text_stack;
  AttentionBlockParams cross_block;
  PathwayStack fused_stack;

  static PathwayParams init(std::size_t d_audio, std::size_t d_text,
                            std::size_t d_model, std::size_t n_heads, std::size_t d_ff,
                            std::size_t depth, std::size_t max_audio_len,
                            std::size_t max_text_len, bool use_positional,
                            RngStream& rng);
  void register_into(ParamRegistry& reg, const std::string& prefix) const;
};

/// Both pathways on the valid prefix only: audio/text features already
/// sliced to their valid rows. Returns (T, T_m), each [v_text x d_model].
std::pair<Tensor, Tensor> segment_pathways_trimmed(const PathwayParams& p,
                                                   const Tensor& audio_valid,
                                                   const Tensor& text_valid,
                                                   const ForwardCtx& ctx);

/// Contract-shaped variant: takes padded features with 0/1 prefix masks and
/// returns both pathway outputs padded back to [L_text x d_model] with zero
/// rows at masked positions. Masks must mark a non-empty valid prefix.
std::pair<Tensor, Tensor> segment_pathways(const PathwayParams& p,
                                           const Tensor& audio_feat,
                                           const Tensor& audio_mask,
                                           const Tensor& text_feat,
                                           const Tensor& text_mask,
                                           const ForwardCtx& ctx);

/// Number of leading 1s in a 0/1 mask; raises ValueError when a 1 follows a
/// 0 (masks must be prefixes) or when the prefix is empty.
std::size_t mask_prefix_len(const Tensor& mask, const char* what);

/// State threaded through the bottleneck fusion stack.
struct BottleneckState {
  Tensor text;       // [L x d]
  Tensor fused;      // [L x d]
  Tensor tokens;     // [n x d] shared bottleneck tokens
  Tensor text_mask;  // [L] 0/1
};

using ChannelTransform = std::function<Tensor(const Tensor& seq, const Tensor& mask)>;

/// One bottleneck fusion layer with injectable channel transformers:
/// each channel is concatenated with the shared tokens (mask extended by
/// always-valid token positions), transformed, and split back; the new
/// shared tokens are the arithmetic mean of the two per-channel token
/// outputs.
BottleneckState bottleneck_layer_with(const BottleneckState& s,
                                      const ChannelTransform& text_transform,
                                      const ChannelTransform& fused_transform);

struct BottleneckLayerParams {
  AttentionBlockParams text_channel;
  AttentionBlockParams fused_channel;
};

struct BottleneckParams {
  Tensor tokens;  // [n x d], learned, shared across layers
  std::vector<BottleneckLayerParams> layers;

  /// `share_weights` makes both channels of each layer use one parameter set.
  static BottleneckParams init(std::size_t n_layers, std::size_t n_tokens,
                               std::size_t d_model, std::size_t n_heads,
                               std::size_t d_ff, bool share_weights, RngStream& rng);
  void register_into(ParamRegistry& reg, const std::string& prefix,
                     bool share_weights) const;
};

BottleneckState bottleneck_layer(const BottleneckLayerParams& p,
                                 const BottleneckState& s, const ForwardCtx& ctx);

/// Applies the bottleneck layers in order; returns (text_final, tokens_final).
std::pair<Tensor, Tensor> bottleneck_stack(const BottleneckParams& p, const Tensor& text,
                                           const Tensor& fused, const Tensor& text_mask,
                                           const ForwardCtx& ctx);

/// Mean over valid token positions: the per-segment representation vector.
Tensor segment_pool(const Tensor& t_final, const Tensor& text_mask);

}  // namespace callfuse

#endif  // CALLFUSE_FUSION_HPP
