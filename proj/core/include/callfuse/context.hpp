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

#ifndef CALLFUSE_CONTEXT_HPP
#define CALLFUSE_CONTEXT_HPP

#include <string>
#include <vector>

#include "callfuse/rng.hpp"
#include "callfuse/tensor.hpp"

namespace callfuse {

/// Per-forward-pass state. Evaluation mode carries no stochastic ops, so an
/// eval context makes every forward deterministic bit for bit.
struct ForwardCtx {
  bool training = false;
  double dropout = 0.0;
  RngStream* rng = nullptr;

  static ForwardCtx eval() { return {}; }
  static ForwardCtx train(double dropout_rate, RngStream& rng) {
    return {true, dropout_rate, &rng};
  }
};

/// Ordered name -> tensor registry of trainable parameters. Iteration order
/// is registration order, which fixes checkpoint layout and optimizer
/// traversal independent of addresses.
struct ParamRegistry {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  void add(std::string name, const Tensor& t) {
    names.push_back(std::move(name));
    tensors.push_back(t);
  }
  std::size_t size() const { return tensors.size(); }
};

}  // namespace callfuse

#endif  // CALLFUSE_CONTEXT_HPP
