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

#ifndef CALLFUSE_MODEL_HPP
#define CALLFUSE_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "callfuse/fusion.hpp"
#include "callfuse/gru.hpp"
#include "callfuse/heads.hpp"

namespace callfuse {

/// All architecture dimensions and structural switches in one place.
/// Defaults follow the tuned full-scale settings: 4 hidden layers, 2
/// bottleneck layers with 4 tokens, 2 GRU layers of 128 units, dropout 0.3.
struct ModelConfig {
  std::size_t audio_feat_dim = 768;
  std::size_t text_feat_dim = 768;
  std::size_t d_model = 768;
  std::size_t n_heads = 4;
  std::size_t d_ff = 3072;
  std::size_t pathway_depth = 4;
  std::size_t bottleneck_layers = 2;
  std::size_t bottleneck_tokens = 4;
  std::size_t max_audio_len = 999;
  std::size_t max_text_len = 199;
  std::size_t gru_layers = 2;
  std::size_t gru_hidden = 128;
  double dropout = 0.3;
  bool use_positional = true;
  bool share_bottleneck_weights = false;
  bool no_bottleneck = false;   // pool the fused pathway directly
  bool no_multitask = false;    // train/score the five-category head only

  enum class Pool { text_mean, token_mean };
  Pool pool = Pool::text_mean;

  void validate() const;
};

/// Per-segment inputs, trimmed to their valid rows.
struct SegmentFeatures {
  Tensor audio;  // [v_audio x audio_feat_dim]
  Tensor text;   // [v_text x text_feat_dim]
};

struct PreparedCall {
  std::string call_id;
  int label = -1;  // 0..4; -1 when unlabeled (prediction-only)
  std::vector<SegmentFeatures> segments;
};

/// The full network: segment pathways, bottleneck fusion, Bi-GRU context
/// stage, and the four task heads.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  ParamRegistry& params() { return registry_; }
  const ParamRegistry& params() const { return registry_; }

  const PathwayParams& pathway() const { return pathway_; }
  const BottleneckParams& bottleneck() const { return bottleneck_; }
  const GruParams& gru() const { return gru_; }
  const HeadsParams& heads() const { return heads_; }

  /// One segment through both pathways and (unless disabled) the bottleneck
  /// stack, pooled to a d_model vector.
  Tensor segment_vector(const SegmentFeatures& seg, const ForwardCtx& ctx) const;

  /// Bi-GRU over the ordered segment vectors; width 2 * gru_hidden.
  Tensor call_repr(const PreparedCall& call, const ForwardCtx& ctx) const;

  /// Summed multi-task loss for one labeled call.
  Tensor loss(const PreparedCall& call, const ForwardCtx& ctx) const;

  /// Evaluation-mode predictions for all four tasks. Under no_multitask the
  /// coarse tasks are derived from the five-category head by folding its
  /// probabilities through each merge map.
  std::vector<TaskPrediction> predict_call(const PreparedCall& call) const;

  /// Versioned checkpoint: JSON manifest (config, names -> shapes) followed
  /// by every parameter in the tensor-blob format.
  void save(const std::string& path) const;
  static Model load(const std::string& path);

 private:
  void validate_segment(const SegmentFeatures& seg) const;

  ModelConfig cfg_;
  std::vector<TaskSpec> tasks_;
  PathwayParams pathway_;
  BottleneckParams bottleneck_;
  GruParams gru_;
  HeadsParams heads_;
  ParamRegistry registry_;
};

}  // namespace callfuse

#endif  // CALLFUSE_MODEL_HPP
