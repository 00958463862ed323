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

#ifndef CALLFUSE_TENSOR_HPP
#define CALLFUSE_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "callfuse/error.hpp"
#include "callfuse/rng.hpp"

namespace callfuse {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode;
using BackwardFn = std::function<void(const TensorNode&)>;

/// One node of the reverse-mode tape. Values are written once at
/// construction; only `grad` is mutated afterwards (during backward and by
/// the optimizer for parameter leaves).
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  mutable std::vector<double> grad;  // sized lazily, same length as value
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  BackwardFn backprop;

  std::size_t size() const { return value.size(); }
  void ensure_grad() const {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Returns a writable grad pointer for `node`, or nullptr when the node does
/// not track gradients. Used by op backward closures.
double* grad_ptr(const std::shared_ptr<TensorNode>& node);

}  // namespace detail

/// Dense tensor handle with optional participation in the gradient tape.
///
/// Tensors are cheap to copy (shared storage). Values are immutable after
/// construction except through `mutable_values()`, which exists for the
/// optimizer and the finite-difference checker; mutating a tensor while a
/// graph built from it is still alive invalidates that graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor randn(Shape shape, RngStream& rng, double stddev = 1.0);

  /// Low-level op constructor for fused operations.
  static Tensor from_op(Shape shape, std::vector<double> value,
                        std::vector<Tensor> parents, detail::BackwardFn backprop);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only
  bool is_scalar() const { return node_ && node_->value.size() == 1; }

  const std::vector<double>& values() const { return node_->value; }
  double value_at(std::size_t flat) const { return node_->value[flat]; }
  double at(std::size_t r, std::size_t c) const;  // rank-2 only
  double scalar_value() const;

  /// Writable view of the raw values. See class comment for the contract.
  std::vector<double>& mutable_values() { return node_->value; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  /// Accumulated gradient; allocated (zeroed) on first access.
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Leaf copy of the values, detached from any graph.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

// ---------------------------------------------------------------------------
// Reverse-mode differentiation
// ---------------------------------------------------------------------------

/// Runs backpropagation from a scalar result. Gradients accumulate
/// additively into every reachable requires_grad leaf; calling backward
/// twice without zeroing doubles leaf gradients.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Operations (all participate in the tape when an operand requires grad)
// ---------------------------------------------------------------------------

/// Standard matrix product [m x k] . [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// a . b^T for [m x k], [n x k] -> [m x n]; avoids materializing transposes.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// Row vector times matrix: [k] . [k x n] -> [n].
Tensor vecmat(const Tensor& v, const Tensor& w);

/// Elementwise sum with trailing-dimension broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product with trailing-dimension broadcasting.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double c);

Tensor relu(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Row-wise layer normalization over the last dimension.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset,
                  double eps = 1e-5);

/// Row-wise masked softmax over the last dimension. Valid positions (mask 1)
/// sum to 1; masked positions are exactly 0. Masking uses an additive -1e9
/// surrogate with exact zero enforcement; rows are stabilized by subtracting
/// the max over valid entries. `mask` is 0/1, either the same shape as `x`
/// or rank-1 matching the last dimension. The mask never receives gradient.
/// A fully masked row raises ValueError.
Tensor softmax_masked(const Tensor& x, const Tensor& mask);

/// Inverted dropout: keeps entries with probability 1-p and scales them by
/// 1/(1-p). Identity when `training` is false or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, RngStream* rng);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);
/// Extends a rank-2 tensor with zero rows up to `new_rows`.
Tensor pad_rows(const Tensor& x, std::size_t new_rows);
/// y[i, :] = x[i, :] * s[i] for rank-2 x and rank-1 s.
Tensor scale_rows(const Tensor& x, const Tensor& s);
/// Stacks rank-1 tensors of equal width into a matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);
/// Extracts row i of a rank-2 tensor as a rank-1 tensor.
Tensor row(const Tensor& x, std::size_t i);

Tensor concat_vec(const Tensor& a, const Tensor& b);
Tensor slice_vec(const Tensor& x, std::size_t i0, std::size_t i1);

/// Sum of all entries, as a rank-0 scalar.
Tensor sum_all(const Tensor& x);
/// Mean over valid rows: [L x d] with rank-1 0/1 mask [L] -> [d].
/// Raises ValueError when no row is valid.
Tensor mean_rows_masked(const Tensor& x, const Tensor& mask);

}  // namespace callfuse

#endif  // CALLFUSE_TENSOR_HPP
