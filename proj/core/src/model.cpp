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

#include "callfuse/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "callfuse/blob.hpp"

namespace callfuse {

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '0', '1'};

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["audio_feat_dim"] = c.audio_feat_dim;
  j["text_feat_dim"] = c.text_feat_dim;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["pathway_depth"] = c.pathway_depth;
  j["bottleneck_layers"] = c.bottleneck_layers;
  j["bottleneck_tokens"] = c.bottleneck_tokens;
  j["max_audio_len"] = c.max_audio_len;
  j["max_text_len"] = c.max_text_len;
  j["gru_layers"] = c.gru_layers;
  j["gru_hidden"] = c.gru_hidden;
  j["dropout"] = c.dropout;
  j["use_positional"] = c.use_positional;
  j["share_bottleneck_weights"] = c.share_bottleneck_weights;
  j["no_bottleneck"] = c.no_bottleneck;
  j["no_multitask"] = c.no_multitask;
  j["pool"] = c.pool == ModelConfig::Pool::text_mean ? "text_mean" : "token_mean";
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.audio_feat_dim = j.at("audio_feat_dim").get<std::size_t>();
  c.text_feat_dim = j.at("text_feat_dim").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.pathway_depth = j.at("pathway_depth").get<std::size_t>();
  c.bottleneck_layers = j.at("bottleneck_layers").get<std::size_t>();
  c.bottleneck_tokens = j.at("bottleneck_tokens").get<std::size_t>();
  c.max_audio_len = j.at("max_audio_len").get<std::size_t>();
  c.max_text_len = j.at("max_text_len").get<std::size_t>();
  c.gru_layers = j.at("gru_layers").get<std::size_t>();
  c.gru_hidden = j.at("gru_hidden").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.use_positional = j.at("use_positional").get<bool>();
  c.share_bottleneck_weights = j.at("share_bottleneck_weights").get<bool>();
  c.no_bottleneck = j.at("no_bottleneck").get<bool>();
  c.no_multitask = j.at("no_multitask").get<bool>();
  c.pool = j.at("pool").get<std::string>() == "token_mean"
               ? ModelConfig::Pool::token_mean
               : ModelConfig::Pool::text_mean;
  return c;
}

}  // namespace

void ModelConfig::validate() const {
  if (audio_feat_dim == 0 || text_feat_dim == 0 || d_model == 0 || d_ff == 0) {
    throw ValueError("model dimensions must be positive");
  }
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ValueError("n_heads " + std::to_string(n_heads) + " must divide d_model " +
                     std::to_string(d_model));
  }
  if (pathway_depth == 0) throw ValueError("pathway_depth must be positive");
  if (bottleneck_tokens == 0 && !no_bottleneck) {
    throw ValueError("bottleneck_tokens must be positive");
  }
  if (max_audio_len == 0 || max_text_len == 0) {
    throw ValueError("max sequence lengths must be positive");
  }
  if (gru_layers == 0 || gru_hidden == 0) {
    throw ValueError("gru dimensions must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ValueError("dropout must lie in [0, 1)");
  }
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  tasks_ = TaskSpec::default_tasks();
  RngStream rng(seed, RngStream::hash_key("model-init"));
  pathway_ = PathwayParams::init(cfg_.audio_feat_dim, cfg_.text_feat_dim, cfg_.d_model,
                                 cfg_.n_heads, cfg_.d_ff, cfg_.pathway_depth,
                                 cfg_.max_audio_len, cfg_.max_text_len,
                                 cfg_.use_positional, rng);
  bottleneck_ = BottleneckParams::init(cfg_.bottleneck_layers, cfg_.bottleneck_tokens,
                                       cfg_.d_model, cfg_.n_heads, cfg_.d_ff,
                                       cfg_.share_bottleneck_weights, rng);
  gru_ = GruParams::init(cfg_.d_model, cfg_.gru_hidden, cfg_.gru_layers, rng);
  heads_ = HeadsParams::init(2 * cfg_.gru_hidden, tasks_, rng);

  pathway_.register_into(registry_, "pathway");
  bottleneck_.register_into(registry_, "bottleneck", cfg_.share_bottleneck_weights);
  gru_.register_into(registry_, "gru");
  heads_.register_into(registry_, "heads", tasks_);
}

void Model::validate_segment(const SegmentFeatures& seg) const {
  if (seg.audio.rank() != 2 || seg.audio.cols() != cfg_.audio_feat_dim) {
    throw ShapeError("segment audio features must be [len x " +
                     std::to_string(cfg_.audio_feat_dim) + "], got " +
                     shape_str(seg.audio.shape()));
  }
  if (seg.text.rank() != 2 || seg.text.cols() != cfg_.text_feat_dim) {
    throw ShapeError("segment text features must be [len x " +
                     std::to_string(cfg_.text_feat_dim) + "], got " +
                     shape_str(seg.text.shape()));
  }
  if (seg.audio.rows() > cfg_.max_audio_len || seg.text.rows() > cfg_.max_text_len) {
    throw ShapeError("segment exceeds configured maximum lengths: audio " +
                     shape_str(seg.audio.shape()) + ", text " +
                     shape_str(seg.text.shape()));
  }
}

Tensor Model::segment_vector(const SegmentFeatures& seg, const ForwardCtx& ctx) const {
  validate_segment(seg);
  auto [t, t_m] = segment_pathways_trimmed(pathway_, seg.audio, seg.text, ctx);
  Tensor ones_t = Tensor::ones({t.rows()});
  if (cfg_.no_bottleneck) {
    return segment_pool(t_m, ones_t);
  }
  auto [t_final, tokens_final] = bottleneck_stack(bottleneck_, t, t_m, ones_t, ctx);
  if (cfg_.pool == ModelConfig::Pool::token_mean) {
    return segment_pool(tokens_final, Tensor::ones({tokens_final.rows()}));
  }
  return segment_pool(t_final, ones_t);
}

Tensor Model::call_repr(const PreparedCall& call, const ForwardCtx& ctx) const {
  if (call.segments.empty()) {
    throw ValueError("call " + call.call_id + " has no segments");
  }
  std::vector<Tensor> vecs;
  vecs.reserve(call.segments.size());
  for (const SegmentFeatures& seg : call.segments) {
    vecs.push_back(segment_vector(seg, ctx));
  }
  Tensor segs = stack_rows(vecs);
  Tensor mask = Tensor::ones({vecs.size()});
  BiGruResult gru_out = bigru_forward(gru_, segs, mask, ctx);
  return call_representation(gru_, gru_out.h_n);
}

Tensor Model::loss(const PreparedCall& call, const ForwardCtx& ctx) const {
  if (call.label < 0 || call.label >= static_cast<int>(kNumBaseLabels)) {
    throw ValueError("call " + call.call_id + " has no usable label");
  }
  Tensor repr = call_repr(call, ctx);
  return total_loss(repr, heads_, tasks_, static_cast<std::size_t>(call.label),
                    !cfg_.no_multitask);
}

std::vector<TaskPrediction> Model::predict_call(const PreparedCall& call) const {
  Tensor repr = call_repr(call, ForwardCtx::eval());
  if (!cfg_.no_multitask) {
    return predict(repr, heads_, tasks_);
  }
  // Single-task ablation: fold the five-category distribution through each
  // merge map instead of consulting untrained heads.
  std::vector<TaskPrediction> five_only =
      predict(repr, heads_, {tasks_.begin(), tasks_.begin() + 1});
  const TaskPrediction& five = five_only[0];
  std::vector<TaskPrediction> out;
  out.reserve(tasks_.size());
  for (const TaskSpec& task : tasks_) {
    TaskPrediction p;
    p.probs.assign(task.k, 0.0);
    for (std::size_t g = 0; g < kNumBaseLabels; ++g) {
      p.probs[task.merge[g]] += five.probs[g];
    }
    p.predicted = merge_label(five.predicted, task);
    out.push_back(std::move(p));
  }
  return out;
}

void Model::save(const std::string& path) const {
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["config"] = config_to_json(cfg_);
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < registry_.size(); ++i) {
    nlohmann::json p;
    p["name"] = registry_.names[i];
    p["shape"] = registry_.tensors[i].shape();
    params.push_back(std::move(p));
  }
  manifest["params"] = std::move(params);
  const std::string manifest_str = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, 8);
  const std::uint64_t len = manifest_str.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));
  for (const Tensor& t : registry_.tensors) write_blob(os, t, kDtypeF64);
  if (!os) throw IoError("checkpoint write failed: " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw IoError("bad checkpoint magic: " + path);
  }
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!is) throw IoError("truncated checkpoint manifest: " + path);
  std::string manifest_str(len, '\0');
  is.read(manifest_str.data(), static_cast<std::streamsize>(len));
  if (!is) throw IoError("truncated checkpoint manifest: " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("unparsable checkpoint manifest in " + path + ": " + e.what());
  }
  if (manifest.at("format_version").get<int>() != 1) {
    throw IoError("unsupported checkpoint version in " + path);
  }

  Model model(config_from_json(manifest.at("config")), /*seed=*/0);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < model.registry_.size(); ++i) {
    index[model.registry_.names[i]] = i;
  }
  const auto& params = manifest.at("params");
  if (params.size() != model.registry_.size()) {
    throw IoError("checkpoint parameter count " + std::to_string(params.size()) +
                  " does not match model (" + std::to_string(model.registry_.size()) +
                  ") in " + path);
  }
  for (const auto& entry : params) {
    const std::string name = entry.at("name").get<std::string>();
    auto it = index.find(name);
    if (it == index.end()) {
      throw IoError("checkpoint parameter '" + name + "' unknown to this model");
    }
    Tensor blob = read_blob(is, path + ":" + name);
    Tensor& dst = model.registry_.tensors[it->second];
    if (blob.shape() != dst.shape()) {
      throw IoError("checkpoint parameter '" + name + "' has shape " +
                    shape_str(blob.shape()) + ", expected " + shape_str(dst.shape()));
    }
    dst.mutable_values() = blob.values();
  }
  return model;
}

}  // namespace callfuse
