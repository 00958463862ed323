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

#ifndef CALLFUSE_OPTIM_HPP
#define CALLFUSE_OPTIM_HPP

#include <cstdint>
#include <vector>

#include "callfuse/context.hpp"

namespace callfuse {

struct OptimConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adaptive-moment state, one (m, v) pair per parameter, bias-corrected.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;

  static AdamState init(const ParamRegistry& params);
};

/// One adaptive-moment update with decoupled weight decay: the decay term
/// theta *= (1 - lr * lambda) is applied separately from the gradient term.
/// A non-finite gradient aborts the step with a NumericError naming the
/// parameter.
void optimizer_step(ParamRegistry& params, AdamState& state, const OptimConfig& cfg);

void zero_grads(ParamRegistry& params);
void scale_grads(ParamRegistry& params, double s);

}  // namespace callfuse

#endif  // CALLFUSE_OPTIM_HPP
