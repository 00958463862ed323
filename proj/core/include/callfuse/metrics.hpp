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

#ifndef CALLFUSE_METRICS_HPP
#define CALLFUSE_METRICS_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace callfuse {

/// k x k confusion counts, gold on rows, predicted on columns.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::size_t> counts;  // [gold * k + pred]

  explicit ConfusionMatrix(std::size_t k_ = 0) : k(k_), counts(k_ * k_, 0) {}
  void add(std::size_t gold, std::size_t pred);
  std::size_t total() const;
  double accuracy() const;  // trace / total
  /// Mean over classes of the per-class F1 (0 for degenerate classes).
  double macro_f1() const;
};

struct TaskMetrics {
  std::string task;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  ConfusionMatrix confusion;
};

struct MetricsReport {
  double mean_loss = 0.0;
  std::vector<TaskMetrics> tasks;

  const TaskMetrics& task(const std::string& name) const;
};

/// One row of the per-epoch metrics trail.
struct MetricsRow {
  std::size_t epoch = 0;
  std::size_t optimizer_steps = 0;  // cumulative
  std::string split;                // train / val
  MetricsReport report;
};

/// CSV with one line per (epoch, split, task).
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

/// Line-delimited JSON, one object per (epoch, split) including confusion
/// matrices.
void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace callfuse

#endif  // CALLFUSE_METRICS_HPP
