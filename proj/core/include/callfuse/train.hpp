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

#ifndef CALLFUSE_TRAIN_HPP
#define CALLFUSE_TRAIN_HPP

#include <functional>
#include <string>
#include <vector>

#include "callfuse/dataio.hpp"
#include "callfuse/metrics.hpp"
#include "callfuse/model.hpp"
#include "callfuse/optim.hpp"

namespace callfuse {

struct TrainConfig {
  ModelConfig model;
  OptimConfig optim;
  std::size_t accumulation_steps = 4;
  std::size_t batch_size = 4;  // calls per micro-batch
  std::size_t epochs = 50;
  std::size_t patience = 10;  // early stopping on validation five-cat accuracy
  std::uint64_t seed = 1;
  std::uint64_t feature_seed = 42;
  bool disable_audio_aug = false;  // drop audio-augmented records from training
  bool disable_text_aug = false;
  bool remove_silence = false;

  void validate() const;
};

/// Plain-text key-value config ("key = value", '#' comments). Keys mirror
/// the TrainConfig and ModelConfig field names.
TrainConfig parse_train_config(const std::string& path);
/// Applies one key/value pair; unknown keys raise ValueError.
void apply_config_entry(TrainConfig& cfg, const std::string& key,
                        const std::string& value);

struct TrainPaths {
  std::string checkpoint;     // best checkpoint; required
  std::string metrics_csv;    // "" skips the file
  std::string metrics_jsonl;  // "" skips the file
};

struct TrainResult {
  std::vector<MetricsRow> history;
  std::size_t best_epoch = 0;
  double best_val_acc5 = 0.0;
  std::size_t total_steps = 0;
};

/// Sums gradients over `n_micro` micro-batch losses, scales them by
/// 1/n_micro, and applies one optimizer step, which matches the gradient of
/// the mean loss over the combined batch when micro-batches share a size.
/// Returns the mean micro loss. Non-finite losses abort with NumericError.
double accumulate_and_step(ParamRegistry& params, AdamState& state,
                           const OptimConfig& optim, std::size_t n_micro,
                           const std::function<Tensor(std::size_t)>& micro_loss);

/// Evaluation-mode metrics over labeled calls: per-task accuracy, macro-F1,
/// confusion matrices, and the mean multi-task loss.
MetricsReport evaluate(const Model& model, const std::vector<PreparedCall>& calls);

/// Deterministic epoch loop with seeded shuffling and gradient
/// accumulation. Keeps the checkpoint with the best validation
/// five-category accuracy; stops early after `patience` stale epochs.
TrainResult train_prepared(const std::vector<PreparedCall>& train_calls,
                           const std::vector<PreparedCall>& val_calls,
                           const TrainConfig& cfg, const TrainPaths& paths,
                           bool verbose = false);

/// Drops augmented records according to the ablation flags.
std::vector<CallRecord> filter_augmented(const std::vector<CallRecord>& records,
                                         bool disable_audio_aug, bool disable_text_aug);

/// Manifest-level entry point: loads, filters, prepares, trains.
TrainResult train_from_manifests(const std::string& train_manifest,
                                 const std::string& val_manifest,
                                 const TrainConfig& cfg, const TrainPaths& paths,
                                 bool verbose = false);

/// Loads and prepares every call of a manifest.
std::vector<PreparedCall> prepare_manifest(const std::string& manifest_path,
                                           const TrainConfig& cfg);

}  // namespace callfuse

#endif  // CALLFUSE_TRAIN_HPP
