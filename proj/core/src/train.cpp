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

#include "callfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace callfuse {

void TrainConfig::validate() const {
  model.validate();
  if (optim.lr <= 0.0) throw ValueError("learning rate must be positive");
  if (accumulation_steps == 0) throw ValueError("accumulation_steps must be >= 1");
  if (batch_size == 0) throw ValueError("batch_size must be >= 1");
  if (epochs == 0) throw ValueError("epochs must be >= 1");
}

// ---------------------------------------------------------------------------
// Key-value config
// ---------------------------------------------------------------------------

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ValueError("expected a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key,
                        const std::string& value) {
  auto as_size = [&]() { return static_cast<std::size_t>(std::stoull(value)); };
  auto as_u64 = [&]() { return static_cast<std::uint64_t>(std::stoull(value)); };
  auto as_double = [&]() { return std::stod(value); };

  if (key == "learning_rate") cfg.optim.lr = as_double();
  else if (key == "weight_decay") cfg.optim.weight_decay = as_double();
  else if (key == "beta1") cfg.optim.beta1 = as_double();
  else if (key == "beta2") cfg.optim.beta2 = as_double();
  else if (key == "adam_eps") cfg.optim.eps = as_double();
  else if (key == "accumulation_steps") cfg.accumulation_steps = as_size();
  else if (key == "batch_size") cfg.batch_size = as_size();
  else if (key == "epochs") cfg.epochs = as_size();
  else if (key == "patience") cfg.patience = as_size();
  else if (key == "seed") cfg.seed = as_u64();
  else if (key == "feature_seed") cfg.feature_seed = as_u64();
  else if (key == "disable_audio_aug") cfg.disable_audio_aug = parse_bool(value);
  else if (key == "disable_text_aug") cfg.disable_text_aug = parse_bool(value);
  else if (key == "remove_silence") cfg.remove_silence = parse_bool(value);
  else if (key == "dropout") cfg.model.dropout = as_double();
  else if (key == "d_model") cfg.model.d_model = as_size();
  else if (key == "n_heads") cfg.model.n_heads = as_size();
  else if (key == "d_ff") cfg.model.d_ff = as_size();
  else if (key == "pathway_depth") cfg.model.pathway_depth = as_size();
  else if (key == "bottleneck_layers") cfg.model.bottleneck_layers = as_size();
  else if (key == "bottleneck_tokens") cfg.model.bottleneck_tokens = as_size();
  else if (key == "max_audio_len") cfg.model.max_audio_len = as_size();
  else if (key == "max_text_len") cfg.model.max_text_len = as_size();
  else if (key == "audio_feat_dim") cfg.model.audio_feat_dim = as_size();
  else if (key == "text_feat_dim") cfg.model.text_feat_dim = as_size();
  else if (key == "gru_layers") cfg.model.gru_layers = as_size();
  else if (key == "gru_hidden") cfg.model.gru_hidden = as_size();
  else if (key == "use_positional") cfg.model.use_positional = parse_bool(value);
  else if (key == "share_bottleneck_weights")
    cfg.model.share_bottleneck_weights = parse_bool(value);
  else if (key == "no_bottleneck") cfg.model.no_bottleneck = parse_bool(value);
  else if (key == "no_multitask") cfg.model.no_multitask = parse_bool(value);
  else if (key == "pool")
    cfg.model.pool = (value == "token_mean") ? ModelConfig::Pool::token_mean
                                             : ModelConfig::Pool::text_mean;
  else throw ValueError("unknown config key '" + key + "'");
}

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  TrainConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValueError(path + " line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    try {
      apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw ValueError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Accumulated step
// ---------------------------------------------------------------------------

double accumulate_and_step(ParamRegistry& params, AdamState& state,
                           const OptimConfig& optim, std::size_t n_micro,
                           const std::function<Tensor(std::size_t)>& micro_loss) {
  if (n_micro == 0) throw ValueError("accumulate_and_step needs at least one micro-batch");
  zero_grads(params);
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < n_micro; ++i) {
    Tensor loss = micro_loss(i);
    const double v = loss.scalar_value();
    if (!std::isfinite(v)) {
      throw NumericError("non-finite loss in micro-batch " + std::to_string(i));
    }
    loss_sum += v;
    backward(loss);
  }
  scale_grads(params, 1.0 / static_cast<double>(n_micro));
  optimizer_step(params, state, optim);
  zero_grads(params);
  return loss_sum / static_cast<double>(n_micro);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

MetricsReport evaluate(const Model& model, const std::vector<PreparedCall>& calls) {
  if (calls.empty()) throw ValueError("evaluate: no calls");
  const std::vector<TaskSpec>& tasks = model.tasks();
  MetricsReport report;
  report.tasks.reserve(tasks.size());
  for (const TaskSpec& t : tasks) {
    TaskMetrics tm;
    tm.task = t.name;
    tm.confusion = ConfusionMatrix(t.k);
    report.tasks.push_back(std::move(tm));
  }
  double loss_sum = 0.0;
  for (const PreparedCall& call : calls) {
    if (call.label < 0) {
      throw ValueError("evaluate: call " + call.call_id + " has no label");
    }
    loss_sum += model.loss(call, ForwardCtx::eval()).scalar_value();
    const std::vector<TaskPrediction> preds = model.predict_call(call);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const std::size_t gold =
          merge_label(static_cast<std::size_t>(call.label), tasks[t]);
      report.tasks[t].confusion.add(gold, preds[t].predicted);
    }
  }
  for (TaskMetrics& tm : report.tasks) {
    tm.accuracy = tm.confusion.accuracy();
    tm.macro_f1 = tm.confusion.macro_f1();
  }
  report.mean_loss = loss_sum / static_cast<double>(calls.size());
  return report;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainResult train_prepared(const std::vector<PreparedCall>& train_calls,
                           const std::vector<PreparedCall>& val_calls,
                           const TrainConfig& cfg, const TrainPaths& paths,
                           bool verbose) {
  cfg.validate();
  if (train_calls.empty()) throw ValueError("training split is empty");
  if (val_calls.empty()) throw ValueError("validation split is empty");
  if (paths.checkpoint.empty()) throw ValueError("checkpoint path is required");

  Model model(cfg.model, cfg.seed);
  AdamState state = AdamState::init(model.params());

  TrainResult result;
  double best_acc5 = -1.0;
  std::size_t stale_epochs = 0;
  std::size_t global_steps = 0;

  std::vector<std::size_t> order(train_calls.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Seeded Fisher-Yates; identical seeds give identical trajectories.
    RngStream shuffle_rng(cfg.seed,
                          RngStream::combine(RngStream::hash_key("shuffle"), epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }

    // Partition into micro-batches of batch_size calls, then group
    // accumulation_steps of them per optimizer step.
    std::vector<std::vector<const PreparedCall*>> micros;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const PreparedCall*> micro;
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < end; ++i) micro.push_back(&train_calls[order[i]]);
      micros.push_back(std::move(micro));
    }

    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    std::size_t micro_counter = 0;
    for (std::size_t group = 0; group < micros.size(); group += cfg.accumulation_steps) {
      const std::size_t n_micro =
          std::min(cfg.accumulation_steps, micros.size() - group);
      auto micro_loss = [&](std::size_t mi) {
        const std::vector<const PreparedCall*>& micro = micros[group + mi];
        RngStream rng(cfg.seed,
                      RngStream::combine(RngStream::hash_key("dropout"),
                                         RngStream::combine(epoch, micro_counter + mi)));
        ForwardCtx ctx = ForwardCtx::train(cfg.model.dropout, rng);
        Tensor sum;
        for (const PreparedCall* call : micro) {
          Tensor l = model.loss(*call, ctx);
          sum = sum.defined() ? add(sum, l) : l;
        }
        return scale(sum, 1.0 / static_cast<double>(micro.size()));
      };
      epoch_loss +=
          accumulate_and_step(model.params(), state, cfg.optim, n_micro, micro_loss);
      micro_counter += n_micro;
      ++epoch_steps;
      ++global_steps;
    }

    MetricsRow train_row;
    train_row.epoch = epoch;
    train_row.optimizer_steps = global_steps;
    train_row.split = "train";
    train_row.report = evaluate(model, train_calls);
    result.history.push_back(train_row);

    MetricsRow val_row;
    val_row.epoch = epoch;
    val_row.optimizer_steps = global_steps;
    val_row.split = "val";
    val_row.report = evaluate(model, val_calls);
    result.history.push_back(val_row);

    const double acc5 = val_row.report.task("five").accuracy;
    if (acc5 > best_acc5) {
      best_acc5 = acc5;
      result.best_epoch = epoch;
      stale_epochs = 0;
      model.save(paths.checkpoint);
    } else {
      ++stale_epochs;
    }
    if (verbose) {
      std::cout << "epoch " << epoch << " steps " << global_steps << " train_loss "
                << (epoch_loss / static_cast<double>(epoch_steps)) << " val_acc5 "
                << acc5 << '\n';
    }
    if (stale_epochs >= cfg.patience) break;
  }

  result.best_val_acc5 = best_acc5;
  result.total_steps = global_steps;
  if (!paths.metrics_csv.empty()) write_metrics_csv(paths.metrics_csv, result.history);
  if (!paths.metrics_jsonl.empty())
    write_metrics_jsonl(paths.metrics_jsonl, result.history);
  return result;
}

std::vector<CallRecord> filter_augmented(const std::vector<CallRecord>& records,
                                         bool disable_audio_aug, bool disable_text_aug) {
  std::vector<CallRecord> out;
  out.reserve(records.size());
  for (const CallRecord& rec : records) {
    if (disable_audio_aug && rec.augment == "audio") continue;
    if (disable_text_aug && rec.augment == "text") continue;
    out.push_back(rec);
  }
  return out;
}

std::vector<PreparedCall> prepare_manifest(const std::string& manifest_path,
                                           const TrainConfig& cfg) {
  const std::vector<CallRecord> records = load_manifest(manifest_path);
  PrepareOptions opts;
  opts.base_dir = std::filesystem::path(manifest_path).parent_path().string();
  opts.remove_silence = cfg.remove_silence;
  opts.feature_seed = cfg.feature_seed;
  std::vector<PreparedCall> calls;
  calls.reserve(records.size());
  for (const CallRecord& rec : records) calls.push_back(prepare_call(rec, opts));
  return calls;
}

TrainResult train_from_manifests(const std::string& train_manifest,
                                 const std::string& val_manifest, const TrainConfig& cfg,
                                 const TrainPaths& paths, bool verbose) {
  std::vector<CallRecord> train_records = load_manifest(train_manifest);
  train_records =
      filter_augmented(train_records, cfg.disable_audio_aug, cfg.disable_text_aug);
  PrepareOptions opts;
  opts.base_dir = std::filesystem::path(train_manifest).parent_path().string();
  opts.remove_silence = cfg.remove_silence;
  opts.feature_seed = cfg.feature_seed;
  std::vector<PreparedCall> train_calls;
  train_calls.reserve(train_records.size());
  for (const CallRecord& rec : train_records) train_calls.push_back(prepare_call(rec, opts));

  const std::vector<PreparedCall> val_calls = prepare_manifest(val_manifest, cfg);
  return train_prepared(train_calls, val_calls, cfg, paths, verbose);
}

}  // namespace callfuse
