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

#include "callfuse/heads.hpp"

#include <cmath>
#include <limits>

namespace callfuse {

void TaskSpec::validate() const {
  if (k < 2 || k > kNumBaseLabels) {
    throw ValueError("task '" + name + "': class count " + std::to_string(k) +
                     " out of range [2, 5]");
  }
  std::size_t prev = 0;
  std::vector<bool> hit(k, false);
  for (std::size_t i = 0; i < kNumBaseLabels; ++i) {
    if (merge[i] >= k) {
      throw ValueError("task '" + name + "': merge target " +
                       std::to_string(merge[i]) + " out of range");
    }
    if (i > 0 && merge[i] < prev) {
      throw ValueError("task '" + name + "': merge map must be monotone "
                                         "non-decreasing (contiguous groups)");
    }
    prev = merge[i];
    hit[merge[i]] = true;
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (!hit[c]) {
      throw ValueError("task '" + name + "': class " + std::to_string(c) +
                       " unreachable by merge map");
    }
  }
}

std::vector<TaskSpec> TaskSpec::default_tasks() {
  std::vector<TaskSpec> tasks = {
      {"five", 5, {0, 1, 2, 3, 4}},
      {"four", 4, {0, 1, 2, 3, 3}},
      {"three", 3, {0, 1, 1, 2, 2}},
      {"two", 2, {0, 0, 0, 1, 1}},
  };
  for (const TaskSpec& t : tasks) t.validate();
  return tasks;
}

std::size_t merge_label(std::size_t five_label, const TaskSpec& task) {
  if (five_label >= kNumBaseLabels) {
    throw ValueError("five-category label " + std::to_string(five_label) +
                     " out of range");
  }
  return task.merge[five_label];
}

Tensor cross_entropy(const Tensor& logits, std::size_t gold) {
  if (logits.rank() != 1) {
    throw ShapeError("cross_entropy expects rank-1 logits, got " +
                     shape_str(logits.shape()));
  }
  const std::size_t k = logits.size();
  if (gold >= k) {
    throw ValueError("gold label " + std::to_string(gold) + " out of range for " +
                     std::to_string(k) + " classes");
  }
  const double* pl = logits.values().data();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    if (!std::isfinite(pl[i])) {
      throw NumericError("cross_entropy: non-finite logit at index " +
                         std::to_string(i));
    }
    mx = std::max(mx, pl[i]);
  }
  double sum = 0.0;
  auto probs = std::make_shared<std::vector<double>>(k);
  for (std::size_t i = 0; i < k; ++i) {
    (*probs)[i] = std::exp(pl[i] - mx);
    sum += (*probs)[i];
  }
  for (std::size_t i = 0; i < k; ++i) (*probs)[i] /= sum;
  const double loss = std::log(sum) + mx - pl[gold];

  auto ln = logits.node();
  return Tensor::from_op({}, {loss}, {logits},
                         [ln, probs, gold, k](const detail::TensorNode& o) {
                           if (double* gl = detail::grad_ptr(ln)) {
                             const double g = o.grad[0];
                             for (std::size_t i = 0; i < k; ++i) {
                               const double onehot = (i == gold) ? 1.0 : 0.0;
                               gl[i] += g * ((*probs)[i] - onehot);
                             }
                           }
                         });
}

HeadsParams HeadsParams::init(std::size_t d_call, const std::vector<TaskSpec>& tasks,
                              RngStream& rng) {
  if (tasks.empty()) throw ValueError("heads need at least one task");
  const double std_w = 1.0 / std::sqrt(static_cast<double>(d_call));
  HeadsParams hp;
  hp.heads.reserve(tasks.size());
  for (const TaskSpec& t : tasks) {
    t.validate();
    HeadParams h;
    h.w = Tensor::randn({d_call, t.k}, rng, std_w).set_requires_grad(true);
    h.b = Tensor::zeros({t.k}).set_requires_grad(true);
    hp.heads.push_back(std::move(h));
  }
  return hp;
}

void HeadsParams::register_into(ParamRegistry& reg, const std::string& prefix,
                                const std::vector<TaskSpec>& tasks) const {
  for (std::size_t i = 0; i < heads.size(); ++i) {
    reg.add(prefix + "." + tasks[i].name + ".w", heads[i].w);
    reg.add(prefix + "." + tasks[i].name + ".b", heads[i].b);
  }
}

Tensor head_logits(const HeadParams& head, const Tensor& call_repr) {
  return add(vecmat(call_repr, head.w), head.b);
}

Tensor total_loss(const Tensor& call_repr, const HeadsParams& heads,
                  const std::vector<TaskSpec>& tasks, std::size_t five_label,
                  bool multitask) {
  if (heads.heads.size() != tasks.size()) {
    throw ValueError("heads/tasks count mismatch: " +
                     std::to_string(heads.heads.size()) + " vs " +
                     std::to_string(tasks.size()));
  }
  const std::size_t n_tasks = multitask ? tasks.size() : 1;
  Tensor loss;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    Tensor term = cross_entropy(head_logits(heads.heads[t], call_repr),
                                merge_label(five_label, tasks[t]));
    loss = loss.defined() ? add(loss, term) : term;
  }
  return loss;
}

std::vector<TaskPrediction> predict(const Tensor& call_repr, const HeadsParams& heads,
                                    const std::vector<TaskSpec>& tasks) {
  std::vector<TaskPrediction> out;
  out.reserve(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    Tensor logits = head_logits(heads.heads[t], call_repr);
    const std::size_t k = logits.size();
    const double* pl = logits.values().data();
    double mx = pl[0];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < k; ++i) {
      if (pl[i] > mx) {  // strict: ties keep the lower index
        mx = pl[i];
        arg = i;
      }
    }
    TaskPrediction pred;
    pred.predicted = arg;
    pred.probs.resize(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      pred.probs[i] = std::exp(pl[i] - mx);
      sum += pred.probs[i];
    }
    for (std::size_t i = 0; i < k; ++i) pred.probs[i] /= sum;
    out.push_back(std::move(pred));
  }
  return out;
}

}  // namespace callfuse
