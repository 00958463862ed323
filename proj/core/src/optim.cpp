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

#include "callfuse/optim.hpp"

#include <cmath>

#include "callfuse/error.hpp"

namespace callfuse {

AdamState AdamState::init(const ParamRegistry& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor& p : params.tensors) {
    s.m.emplace_back(p.size(), 0.0);
    s.v.emplace_back(p.size(), 0.0);
  }
  return s;
}

void optimizer_step(ParamRegistry& params, AdamState& state, const OptimConfig& cfg) {
  if (state.m.size() != params.size()) {
    throw ValueError("optimizer state does not match parameter registry");
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::vector<double>& g = params.tensors[pi].grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("non-finite gradient in parameter '" + params.names[pi] +
                           "' at coordinate " + std::to_string(i));
      }
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::vector<double>& g = params.tensors[pi].grad();
    std::vector<double>& theta = params.tensors[pi].mutable_values();
    std::vector<double>& m = state.m[pi];
    std::vector<double>& v = state.v[pi];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] = theta[i] * decay - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void zero_grads(ParamRegistry& params) {
  for (Tensor& p : params.tensors) p.zero_grad();
}

void scale_grads(ParamRegistry& params, double s) {
  for (Tensor& p : params.tensors) {
    p.grad();  // ensure allocated
    for (double& g : p.node()->grad) g *= s;
  }
}

}  // namespace callfuse
