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

#include "callfuse/metrics.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "callfuse/error.hpp"

namespace callfuse {

void ConfusionMatrix::add(std::size_t gold, std::size_t pred) {
  if (gold >= k || pred >= k) {
    throw ValueError("confusion index out of range: gold " + std::to_string(gold) +
                     ", pred " + std::to_string(pred) + ", k " + std::to_string(k));
  }
  ++counts[gold * k + pred];
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (std::size_t c : counts) t += c;
  return t;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t t = total();
  if (t == 0) return 0.0;
  std::size_t diag = 0;
  for (std::size_t i = 0; i < k; ++i) diag += counts[i * k + i];
  return static_cast<double>(diag) / static_cast<double>(t);
}

double ConfusionMatrix::macro_f1() const {
  if (k == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = counts[c * k + c], fp = 0, fn = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (i == c) continue;
      fp += counts[i * k + c];
      fn += counts[c * k + i];
    }
    const double prec = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double rec = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    sum += (prec + rec > 0.0) ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  return sum / static_cast<double>(k);
}

const TaskMetrics& MetricsReport::task(const std::string& name) const {
  for (const TaskMetrics& t : tasks) {
    if (t.task == name) return t;
  }
  throw ValueError("no metrics for task '" + name + "'");
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open metrics CSV for writing: " + path);
  os << "epoch,steps,split,task,accuracy,macro_f1,loss\n";
  for (const MetricsRow& row : rows) {
    for (const TaskMetrics& t : row.report.tasks) {
      os << row.epoch << ',' << row.optimizer_steps << ',' << row.split << ',' << t.task
         << ',' << fmt(t.accuracy) << ',' << fmt(t.macro_f1) << ','
         << fmt(row.report.mean_loss) << '\n';
    }
  }
  if (!os) throw IoError("metrics CSV write failed: " + path);
}

void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open metrics JSONL for writing: " + path);
  for (const MetricsRow& row : rows) {
    nlohmann::json j;
    j["epoch"] = row.epoch;
    j["steps"] = row.optimizer_steps;
    j["split"] = row.split;
    j["loss"] = row.report.mean_loss;
    nlohmann::json tasks = nlohmann::json::array();
    for (const TaskMetrics& t : row.report.tasks) {
      nlohmann::json tj;
      tj["task"] = t.task;
      tj["accuracy"] = t.accuracy;
      tj["macro_f1"] = t.macro_f1;
      tj["confusion"] = t.confusion.counts;
      tasks.push_back(std::move(tj));
    }
    j["tasks"] = std::move(tasks);
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("metrics JSONL write failed: " + path);
}

}  // namespace callfuse
