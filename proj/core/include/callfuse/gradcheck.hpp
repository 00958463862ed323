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

#ifndef CALLFUSE_GRADCHECK_HPP
#define CALLFUSE_GRADCHECK_HPP

#include <functional>
#include <vector>

#include "callfuse/tensor.hpp"

namespace callfuse {

/// Compares tape gradients of a scalar-valued function against central
/// finite differences (f(x+eps e_i) - f(x-eps e_i)) / 2 eps, coordinate by
/// coordinate. Returns the worst relative error with denominator
/// max(|analytic|, |numeric|, 1e-8). Raises NumericError (naming the
/// coordinate) when a non-finite value shows up.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-5);

/// Same check for a closure over several parameter tensors: `loss_fn` must
/// re-run the forward pass against the current parameter values. Every
/// coordinate of every parameter is probed.
double grad_check_params(const std::function<Tensor()>& loss_fn,
                         const std::vector<Tensor>& params, double eps = 1e-5);

}  // namespace callfuse

#endif  // CALLFUSE_GRADCHECK_HPP
