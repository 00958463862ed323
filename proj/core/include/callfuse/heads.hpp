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

#ifndef CALLFUSE_HEADS_HPP
#define CALLFUSE_HEADS_HPP

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "callfuse/context.hpp"
#include "callfuse/tensor.hpp"

namespace callfuse {

/// The five propensity labels, A (very positive) through E (no intent).
inline constexpr std::size_t kNumBaseLabels = 5;

/// One classification granularity: k classes plus the map that folds the
/// five base labels into them. Groups must be contiguous (the merge map is
/// monotone non-decreasing) and cover all k classes.
struct TaskSpec {
  std::string name;
  std::size_t k = 0;
  std::array<std::size_t, kNumBaseLabels> merge{};

  void validate() const;

  /// The four granularities: five (identity), four (D+E merged), three
  /// (B+C and D+E merged), two (A+B+C vs D+E).
  static std::vector<TaskSpec> default_tasks();
};

/// Folds a five-category label into the task's class space.
std::size_t merge_label(std::size_t five_label, const TaskSpec& task);

/// -log softmax(logits)[gold] for rank-1 logits, numerically stabilized.
Tensor cross_entropy(const Tensor& logits, std::size_t gold);

struct HeadParams {
  Tensor w;  // [d_call x k]
  Tensor b;  // [k]
};

/// One independent linear head per task over the shared call representation.
struct HeadsParams {
  std::vector<HeadParams> heads;

  static HeadsParams init(std::size_t d_call, const std::vector<TaskSpec>& tasks,
                          RngStream& rng);
  void register_into(ParamRegistry& reg, const std::string& prefix,
                     const std::vector<TaskSpec>& tasks) const;
};

Tensor head_logits(const HeadParams& head, const Tensor& call_repr);

/// Unweighted sum of per-task cross-entropies on merge-translated gold
/// labels. With `multitask` false only the first task (five categories)
/// contributes, matching the single-task ablation.
Tensor total_loss(const Tensor& call_repr, const HeadsParams& heads,
                  const std::vector<TaskSpec>& tasks, std::size_t five_label,
                  bool multitask = true);

struct TaskPrediction {
  std::size_t predicted = 0;
  std::vector<double> probs;
};

/// Argmax per head (ties break toward the lower class index) plus softmax
/// probability vectors.
std::vector<TaskPrediction> predict(const Tensor& call_repr, const HeadsParams& heads,
                                    const std::vector<TaskSpec>& tasks);

}  // namespace callfuse

#endif  // CALLFUSE_HEADS_HPP
