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

#include "callfuse/gradcheck.hpp"

#include <cmath>
#include <string>

namespace callfuse {

namespace {

double rel_error(double analytic, double numeric) {
  const double denom =
      std::max(std::max(std::fabs(analytic), std::fabs(numeric)), 1e-8);
  return std::fabs(analytic - numeric) / denom;
}

double scalar_of(const Tensor& y, const char* what) {
  if (!y.is_scalar()) {
    throw ValueError(std::string(what) + " must be scalar-valued, got " +
                     shape_str(y.shape()));
  }
  return y.values()[0];
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps) {
  Tensor probe = x.detach().set_requires_grad(true);
  Tensor y = f(probe);
  scalar_of(y, "grad_check function");
  probe.zero_grad();
  backward(y);
  const std::vector<double> analytic = probe.grad();

  probe.set_requires_grad(false);
  std::vector<double>& v = probe.mutable_values();
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + eps;
    const double fp = scalar_of(f(probe), "grad_check function");
    v[i] = saved - eps;
    const double fm = scalar_of(f(probe), "grad_check function");
    v[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: non-finite value probing coordinate " +
                         std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    if (!std::isfinite(analytic[i])) {
      throw NumericError("grad_check: non-finite analytic gradient at coordinate " +
                         std::to_string(i));
    }
    worst = std::max(worst, rel_error(analytic[i], numeric));
  }
  return worst;
}

double grad_check_params(const std::function<Tensor()>& loss_fn,
                         const std::vector<Tensor>& params, double eps) {
  for (const Tensor& p : params) {
    if (!p.requires_grad()) {
      throw ValueError("grad_check_params: all parameters must require grad");
    }
    const_cast<Tensor&>(p).zero_grad();
  }
  Tensor y = loss_fn();
  scalar_of(y, "grad_check_params loss");
  backward(y);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    std::vector<double>& v = const_cast<Tensor&>(params[pi]).mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      const double fp = scalar_of(loss_fn(), "grad_check_params loss");
      v[i] = saved - eps;
      const double fm = scalar_of(loss_fn(), "grad_check_params loss");
      v[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check_params: non-finite loss probing parameter " +
                           std::to_string(pi) + " coordinate " + std::to_string(i));
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      worst = std::max(worst, rel_error(analytic[pi][i], numeric));
    }
  }
  return worst;
}

}  // namespace callfuse
