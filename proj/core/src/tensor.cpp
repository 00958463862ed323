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

#include "callfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace callfuse {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

double* grad_ptr(const std::shared_ptr<TensorNode>& node) {
  if (!node->requires_grad) return nullptr;
  node->ensure_grad();
  return node->grad.data();
}

}  // namespace detail

using detail::TensorNode;

namespace {

std::shared_ptr<TensorNode> make_leaf(Shape shape, std::vector<double> data) {
  if (shape_size(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  return n;
}

void check_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + " expects a rank-2 tensor, got " +
                     shape_str(t.shape()));
  }
}

void check_rank1(const Tensor& t, const char* what) {
  if (t.rank() != 1) {
    throw ShapeError(std::string(what) + " expects a rank-1 tensor, got " +
                     shape_str(t.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double v) {
  std::size_t n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, v)));
}

Tensor Tensor::scalar(double v) { return Tensor(make_leaf({}, {v})); }

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  return Tensor(make_leaf(std::move(shape), std::move(data)));
}

Tensor Tensor::randn(Shape shape, RngStream& rng, double stddev) {
  std::size_t n = shape_size(shape);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = stddev * rng.gaussian();
  return Tensor(make_leaf(std::move(shape), std::move(data)));
}

Tensor Tensor::from_op(Shape shape, std::vector<double> value,
                       std::vector<Tensor> parents, detail::BackwardFn backprop) {
  auto n = make_leaf(std::move(shape), std::move(value));
  bool needs_grad = false;
  for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
  if (needs_grad) {
    n->requires_grad = true;
    n->is_leaf = false;
    n->parents.reserve(parents.size());
    for (const Tensor& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

std::size_t Tensor::rows() const {
  check_rank2(*this, "rows()");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  check_rank2(*this, "cols()");
  return node_->shape[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  check_rank2(*this, "at()");
  return node_->value[r * node_->shape[1] + c];
}

double Tensor::scalar_value() const {
  if (!is_scalar()) {
    throw ShapeError("scalar_value() on non-scalar tensor " + shape_str(shape()));
  }
  return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_->is_leaf) {
    throw ValueError("requires_grad can only be toggled on leaf tensors");
  }
  node_->requires_grad = on;
  return *this;
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

Tensor Tensor::detach() const { return Tensor(make_leaf(node_->shape, node_->value)); }

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ValueError("backward expects a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));
  }
  if (!loss.requires_grad()) {
    throw ValueError("backward: loss does not depend on any gradient-tracked tensor");
  }

  // Iterative post-order DFS over the requires_grad subgraph: parents appear
  // before children in `order`.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior gradients restart at zero each backward; leaf gradients are
  // preserved so repeated calls accumulate.
  for (TensorNode* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
    n->ensure_grad();
  }
  loss.node()->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul lhs");
  check_rank2(b, "matmul rhs");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                     " . " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  {
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = pa + i * k;
      double* orow = po + i * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        if (av == 0.0) continue;
        const double* brow = pb + kk * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor::from_op(
      {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](const TensorNode& o) {
        const double* g = o.grad.data();
        if (double* ga = detail::grad_ptr(an)) {
          // dA = dC . B^T
          const double* pb = bn->value.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            double* garow = ga + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double* brow = pb + kk * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              garow[kk] += acc;
            }
          }
        }
        if (double* gb = detail::grad_ptr(bn)) {
          // dB = A^T . dC
          const double* pa = an->value.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* arow = pa + i * k;
            const double* grow = g + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double av = arow[kk];
              if (av == 0.0) continue;
              double* gbrow = gb + kk * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
      });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul_nt lhs");
  check_rank2(b, "matmul_nt rhs");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t n = b.shape()[0], k2 = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul_nt inner dimensions disagree: " + shape_str(a.shape()) +
                     " . " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  {
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = pa + i * k;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = pb + j * k;
        double acc = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        orow[j] = acc;
      }
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor::from_op(
      {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](const TensorNode& o) {
        const double* g = o.grad.data();
        if (double* ga = detail::grad_ptr(an)) {
          // dA = dC . B
          const double* pb = bn->value.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            double* garow = ga + i * k;
            for (std::size_t j = 0; j < n; ++j) {
              const double gv = grow[j];
              if (gv == 0.0) continue;
              const double* brow = pb + j * k;
              for (std::size_t kk = 0; kk < k; ++kk) garow[kk] += gv * brow[kk];
            }
          }
        }
        if (double* gb = detail::grad_ptr(bn)) {
          // dB = dC^T . A
          const double* pa = an->value.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* arow = pa + i * k;
            const double* grow = g + i * n;
            for (std::size_t j = 0; j < n; ++j) {
              const double gv = grow[j];
              if (gv == 0.0) continue;
              double* gbrow = gb + j * k;
              for (std::size_t kk = 0; kk < k; ++kk) gbrow[kk] += gv * arow[kk];
            }
          }
        }
      });
}

Tensor vecmat(const Tensor& v, const Tensor& w) {
  check_rank1(v, "vecmat lhs");
  check_rank2(w, "vecmat rhs");
  const std::size_t k = v.shape()[0];
  if (w.shape()[0] != k) {
    throw ShapeError("vecmat dimensions disagree: " + shape_str(v.shape()) + " . " +
                     shape_str(w.shape()));
  }
  const std::size_t n = w.shape()[1];
  std::vector<double> out(n, 0.0);
  {
    const double* pv = v.values().data();
    const double* pw = w.values().data();
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double vv = pv[kk];
      if (vv == 0.0) continue;
      const double* wrow = pw + kk * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += vv * wrow[j];
    }
  }
  auto vn = v.node();
  auto wn = w.node();
  return Tensor::from_op({n}, std::move(out), {v, w}, [vn, wn, k, n](const TensorNode& o) {
    const double* g = o.grad.data();
    if (double* gv = detail::grad_ptr(vn)) {
      const double* pw = wn->value.data();
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double* wrow = pw + kk * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g[j] * wrow[j];
        gv[kk] += acc;
      }
    }
    if (double* gw = detail::grad_ptr(wn)) {
      const double* pv = vn->value.data();
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double vv = pv[kk];
        if (vv == 0.0) continue;
        double* gwrow = gw + kk * n;
        for (std::size_t j = 0; j < n; ++j) gwrow[j] += vv * g[j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Broadcast elementwise
// ---------------------------------------------------------------------------

namespace {

struct BroadcastPlan {
  Shape out_shape;
  std::vector<std::size_t> out_dims;  // padded to common rank
  std::vector<std::size_t> a_stride;  // 0 on broadcast dims
  std::vector<std::size_t> b_stride;
  std::size_t out_size = 0;
  bool same_shape = false;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  if (a == b) {
    p.out_shape = a;
    p.out_size = shape_size(a);
    p.same_shape = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  p.out_dims.resize(rank);
  std::vector<std::size_t> ad(rank, 1), bd(rank, 1);
  for (std::size_t i = 0; i < a.size(); ++i) ad[rank - a.size() + i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) bd[rank - b.size() + i] = b[i];
  for (std::size_t i = 0; i < rank; ++i) {
    if (ad[i] != bd[i] && ad[i] != 1 && bd[i] != 1) {
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                       shape_str(b) + " are not broadcast-compatible");
    }
    p.out_dims[i] = std::max(ad[i], bd[i]);
  }
  p.a_stride.assign(rank, 0);
  p.b_stride.assign(rank, 0);
  std::size_t as = 1, bs = 1;
  for (std::size_t i = rank; i-- > 0;) {
    p.a_stride[i] = (ad[i] == 1) ? 0 : as;
    p.b_stride[i] = (bd[i] == 1) ? 0 : bs;
    as *= ad[i];
    bs *= bd[i];
  }
  p.out_shape = p.out_dims;
  p.out_size = shape_size(p.out_dims);
  return p;
}

template <typename Fwd, typename BwdA, typename BwdB>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd,
                        BwdA bwd_a, BwdB bwd_b) {
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape(), op);
  std::vector<double> out(plan.out_size);
  const double* pa = a.values().data();
  const double* pb = b.values().data();

  auto an = a.node();
  auto bn = b.node();

  if (plan.same_shape) {
    for (std::size_t i = 0; i < plan.out_size; ++i) out[i] = fwd(pa[i], pb[i]);
    return Tensor::from_op(std::move(plan.out_shape), std::move(out), {a, b},
                           [an, bn, bwd_a, bwd_b](const TensorNode& o) {
                             const double* g = o.grad.data();
                             const double* va = an->value.data();
                             const double* vb = bn->value.data();
                             const std::size_t n = o.size();
                             if (double* ga = detail::grad_ptr(an)) {
                               for (std::size_t i = 0; i < n; ++i)
                                 ga[i] += bwd_a(g[i], va[i], vb[i]);
                             }
                             if (double* gb = detail::grad_ptr(bn)) {
                               for (std::size_t i = 0; i < n; ++i)
                                 gb[i] += bwd_b(g[i], va[i], vb[i]);
                             }
                           });
  }

  const std::size_t rank = plan.out_dims.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t flat = 0; flat < plan.out_size; ++flat) {
    out[flat] = fwd(pa[ia], pb[ib]);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += plan.a_stride[d];
      ib += plan.b_stride[d];
      if (idx[d] < plan.out_dims[d]) break;
      ia -= plan.a_stride[d] * plan.out_dims[d];
      ib -= plan.b_stride[d] * plan.out_dims[d];
      idx[d] = 0;
    }
  }
  return Tensor::from_op(
      std::move(plan.out_shape), std::move(out), {a, b},
      [an, bn, plan, bwd_a, bwd_b](const TensorNode& o) {
        const double* g = o.grad.data();
        const double* va = an->value.data();
        const double* vb = bn->value.data();
        double* ga = detail::grad_ptr(an);
        double* gb = detail::grad_ptr(bn);
        const std::size_t rank = plan.out_dims.size();
        std::vector<std::size_t> idx(rank, 0);
        std::size_t ia = 0, ib = 0;
        for (std::size_t flat = 0; flat < plan.out_size; ++flat) {
          if (ga) ga[ia] += bwd_a(g[flat], va[ia], vb[ib]);
          if (gb) gb[ib] += bwd_b(g[flat], va[ia], vb[ib]);
          for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += plan.a_stride[d];
            ib += plan.b_stride[d];
            if (idx[d] < plan.out_dims[d]) break;
            ia -= plan.a_stride[d] * plan.out_dims[d];
            ib -= plan.b_stride[d] * plan.out_dims[d];
            idx[d] = 0;
          }
        }
      });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& x, double s) {
  std::vector<double> out(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * px[i];
  auto xn = x.node();
  return Tensor::from_op(x.shape(), std::move(out), {x}, [xn, s](const TensorNode& o) {
    if (double* gx = detail::grad_ptr(xn)) {
      const double* g = o.grad.data();
      for (std::size_t i = 0; i < o.size(); ++i) gx[i] += s * g[i];
    }
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] + c;
  auto xn = x.node();
  return Tensor::from_op(x.shape(), std::move(out), {x}, [xn](const TensorNode& o) {
    if (double* gx = detail::grad_ptr(xn)) {
      const double* g = o.grad.data();
      for (std::size_t i = 0; i < o.size(); ++i) gx[i] += g[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] > 0.0 ? px[i] : 0.0;
  auto xn = x.node();
  return Tensor::from_op(x.shape(), std::move(out), {x}, [xn](const TensorNode& o) {
    if (double* gx = detail::grad_ptr(xn)) {
      const double* g = o.grad.data();
      const double* vx = xn->value.data();
      for (std::size_t i = 0; i < o.size(); ++i)
        if (vx[i] > 0.0) gx[i] += g[i];
    }
  });
}

Tensor tanh_op(const Tensor& x) {
  std::vector<double> out(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(px[i]);
  auto xn = x.node();
  return Tensor::from_op(x.shape(), std::move(out), {x}, [xn](const TensorNode& o) {
    if (double* gx = detail::grad_ptr(xn)) {
      const double* g = o.grad.data();
      const double* y = o.value.data();
      for (std::size_t i = 0; i < o.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = px[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
  auto xn = x.node();
  return Tensor::from_op(x.shape(), std::move(out), {x}, [xn](const TensorNode& o) {
    if (double* gx = detail::grad_ptr(xn)) {
      const double* g = o.grad.data();
      const double* y = o.value.data();
      for (std::size_t i = 0; i < o.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Layer norm
// ---------------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm expects rank >= 1");
  const std::size_t d = x.shape().back();
  check_rank1(gain, "layer_norm gain");
  check_rank1(offset, "layer_norm offset");
  if (gain.shape()[0] != d || offset.shape()[0] != d) {
    throw ShapeError("layer_norm parameter width mismatch: x " + shape_str(x.shape()) +
                     ", gain " + shape_str(gain.shape()) + ", offset " +
                     shape_str(offset.shape()));
  }
  const std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* px = x.values().data();
  const double* pg = gain.values().data();
  const double* po = offset.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = xr[i] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* hr = xhat->data() + r * d;
    double* yr = out.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      hr[i] = (xr[i] - mean) * is;
      yr[i] = hr[i] * pg[i] + po[i];
    }
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto on = offset.node();
  return Tensor::from_op(
      x.shape(), std::move(out), {x, gain, offset},
      [xn, gn, on, xhat, inv_std, rows, d](const TensorNode& o) {
        const double* g = o.grad.data();
        const double* pg = gn->value.data();
        double* gx = detail::grad_ptr(xn);
        double* gg = detail::grad_ptr(gn);
        double* go = detail::grad_ptr(on);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g + r * d;
          const double* hr = xhat->data() + r * d;
          if (gx) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
              const double dh = gr[i] * pg[i];
              m1 += dh;
              m2 += dh * hr[i];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            const double is = (*inv_std)[r];
            double* gxr = gx + r * d;
            for (std::size_t i = 0; i < d; ++i) {
              const double dh = gr[i] * pg[i];
              gxr[i] += is * (dh - m1 - hr[i] * m2);
            }
          }
          if (gg)
            for (std::size_t i = 0; i < d; ++i) gg[i] += gr[i] * hr[i];
          if (go)
            for (std::size_t i = 0; i < d; ++i) go[i] += gr[i];
        }
      });
}

// ---------------------------------------------------------------------------
// Masked softmax
// ---------------------------------------------------------------------------

Tensor softmax_masked(const Tensor& x, const Tensor& mask) {
  if (x.rank() < 1) throw ShapeError("softmax_masked expects rank >= 1");
  const std::size_t n = x.shape().back();
  bool mask_is_row = false;
  if (mask.shape() == x.shape()) {
    mask_is_row = false;
  } else if (mask.rank() == 1 && mask.shape()[0] == n) {
    mask_is_row = true;
  } else {
    throw ShapeError("softmax_masked mask " + shape_str(mask.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size());
  const double* px = x.values().data();
  const double* pm = mask.values().data();
  constexpr double kMaskPenalty = -1e9;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * n;
    const double* mr = mask_is_row ? pm : pm + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t valid = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mr[i] != 0.0) {
        ++valid;
        mx = std::max(mx, xr[i]);
      }
    }
    if (valid == 0) {
      throw ValueError("softmax_masked: fully masked row " + std::to_string(r));
    }
    double* yr = out.data() + r * n;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      // Additive -1e9 on masked entries underflows exp to 0; the multiply by
      // the mask pins masked outputs to exactly 0 regardless.
      const double shifted =
          (mr[i] != 0.0) ? (xr[i] - mx) : (xr[i] + kMaskPenalty - mx);
      const double e = std::exp(shifted) * (mr[i] != 0.0 ? 1.0 : 0.0);
      yr[i] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) yr[i] *= inv;
  }
  auto xn = x.node();
  // The mask is not differentiable; it joins the parent list only to keep it
  // alive for the backward pass.
  return Tensor::from_op(x.shape(), std::move(out), {x, mask},
                         [xn, rows, n](const TensorNode& o) {
                           if (double* gx = detail::grad_ptr(xn)) {
                             const double* g = o.grad.data();
                             const double* y = o.value.data();
                             for (std::size_t r = 0; r < rows; ++r) {
                               const double* gr = g + r * n;
                               const double* yr = y + r * n;
                               double dot = 0.0;
                               for (std::size_t i = 0; i < n; ++i) dot += gr[i] * yr[i];
                               double* gxr = gx + r * n;
                               for (std::size_t i = 0; i < n; ++i)
                                 gxr[i] += yr[i] * (gr[i] - dot);
                             }
                           }
                         });
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

Tensor dropout(const Tensor& x, double p, bool training, RngStream* rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ValueError("dropout rate must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  if (rng == nullptr) throw ValueError("dropout in training mode needs an RngStream");
  const double keep_scale = 1.0 / (1.0 - p);
  auto keep = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> out(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double k = rng->uniform() < p ? 0.0 : keep_scale;
    (*keep)[i] = k;
    out[i] = px[i] * k;
  }
  auto xn = x.node();
  return Tensor::from_op(x.shape(), std::move(out), {x}, [xn, keep](const TensorNode& o) {
    if (double* gx = detail::grad_ptr(xn)) {
      const double* g = o.grad.data();
      for (std::size_t i = 0; i < o.size(); ++i) gx[i] += g[i] * (*keep)[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  check_rank2(a, "concat_rows");
  check_rank2(b, "concat_rows");
  if (a.cols() != b.cols()) {
    throw ShapeError("concat_rows column mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t ra = a.rows(), rb = b.rows(), d = a.cols();
  std::vector<double> out;
  out.reserve((ra + rb) * d);
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  auto an = a.node();
  auto bn = b.node();
  return Tensor::from_op({ra + rb, d}, std::move(out), {a, b},
                         [an, bn, ra, rb, d](const TensorNode& o) {
                           const double* g = o.grad.data();
                           if (double* ga = detail::grad_ptr(an))
                             for (std::size_t i = 0; i < ra * d; ++i) ga[i] += g[i];
                           if (double* gb = detail::grad_ptr(bn))
                             for (std::size_t i = 0; i < rb * d; ++i)
                               gb[i] += g[ra * d + i];
                         });
}

Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  check_rank2(x, "slice_rows");
  if (r0 >= r1 || r1 > x.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(r0) + ", " + std::to_string(r1) +
                     ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t d = x.cols();
  std::vector<double> out(x.values().begin() + r0 * d, x.values().begin() + r1 * d);
  auto xn = x.node();
  return Tensor::from_op({r1 - r0, d}, std::move(out), {x},
                         [xn, r0, r1, d](const TensorNode& o) {
                           if (double* gx = detail::grad_ptr(xn)) {
                             const double* g = o.grad.data();
                             for (std::size_t i = 0; i < (r1 - r0) * d; ++i)
                               gx[r0 * d + i] += g[i];
                           }
                         });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_rank2(a, "concat_cols");
  check_rank2(b, "concat_cols");
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols row mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.values().data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b.values().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor::from_op({r, ca + cb}, std::move(out), {a, b},
                         [an, bn, r, ca, cb](const TensorNode& o) {
                           const double* g = o.grad.data();
                           if (double* ga = detail::grad_ptr(an))
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < ca; ++j)
                                 ga[i * ca + j] += g[i * (ca + cb) + j];
                           if (double* gb = detail::grad_ptr(bn))
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < cb; ++j)
                                 gb[i * cb + j] += g[i * (ca + cb) + ca + j];
                         });
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  check_rank2(x, "slice_cols");
  if (c0 >= c1 || c1 > x.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(c0) + ", " + std::to_string(c1) +
                     ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols(), w = c1 - c0;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.values().data() + i * c + c0, w, out.data() + i * w);
  auto xn = x.node();
  return Tensor::from_op({r, w}, std::move(out), {x},
                         [xn, r, c, c0, w](const TensorNode& o) {
                           if (double* gx = detail::grad_ptr(xn)) {
                             const double* g = o.grad.data();
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < w; ++j)
                                 gx[i * c + c0 + j] += g[i * w + j];
                           }
                         });
}

Tensor pad_rows(const Tensor& x, std::size_t new_rows) {
  check_rank2(x, "pad_rows");
  const std::size_t r = x.rows(), d = x.cols();
  if (new_rows < r) {
    throw ShapeError("pad_rows target " + std::to_string(new_rows) +
                     " smaller than input " + shape_str(x.shape()));
  }
  if (new_rows == r) return x;
  std::vector<double> out(new_rows * d, 0.0);
  std::copy(x.values().begin(), x.values().end(), out.begin());
  auto xn = x.node();
  return Tensor::from_op({new_rows, d}, std::move(out), {x},
                         [xn, r, d](const TensorNode& o) {
                           if (double* gx = detail::grad_ptr(xn)) {
                             const double* g = o.grad.data();
                             for (std::size_t i = 0; i < r * d; ++i) gx[i] += g[i];
                           }
                         });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  check_rank2(x, "scale_rows");
  check_rank1(s, "scale_rows scales");
  if (s.shape()[0] != x.rows()) {
    throw ShapeError("scale_rows length mismatch: " + shape_str(x.shape()) + " vs " +
                     shape_str(s.shape()));
  }
  const std::size_t r = x.rows(), d = x.cols();
  std::vector<double> out(r * d);
  const double* px = x.values().data();
  const double* ps = s.values().data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = px[i * d + j] * ps[i];
  auto xn = x.node();
  auto sn = s.node();
  return Tensor::from_op({r, d}, std::move(out), {x, s},
                         [xn, sn, r, d](const TensorNode& o) {
                           const double* g = o.grad.data();
                           if (double* gx = detail::grad_ptr(xn)) {
                             const double* ps = sn->value.data();
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                 gx[i * d + j] += g[i * d + j] * ps[i];
                           }
                           if (double* gs = detail::grad_ptr(sn)) {
                             const double* px = xn->value.data();
                             for (std::size_t i = 0; i < r; ++i) {
                               double acc = 0.0;
                               for (std::size_t j = 0; j < d; ++j)
                                 acc += g[i * d + j] * px[i * d + j];
                               gs[i] += acc;
                             }
                           }
                         });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows needs at least one row");
  const std::size_t d = rows[0].size();
  for (const Tensor& t : rows) {
    if (t.rank() != 1 || t.size() != d) {
      throw ShapeError("stack_rows expects rank-1 rows of equal width " +
                       std::to_string(d) + ", got " + shape_str(t.shape()));
    }
  }
  const std::size_t n = rows.size();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(rows[i].values().begin(), rows[i].values().end(), out.begin() + i * d);
  std::vector<std::shared_ptr<TensorNode>> nodes;
  nodes.reserve(n);
  for (const Tensor& t : rows) nodes.push_back(t.node());
  return Tensor::from_op({n, d}, std::move(out), rows,
                         [nodes, d](const TensorNode& o) {
                           const double* g = o.grad.data();
                           for (std::size_t i = 0; i < nodes.size(); ++i)
                             if (double* gr = detail::grad_ptr(nodes[i]))
                               for (std::size_t j = 0; j < d; ++j)
                                 gr[j] += g[i * d + j];
                         });
}

Tensor row(const Tensor& x, std::size_t i) {
  check_rank2(x, "row");
  if (i >= x.rows()) {
    throw ShapeError("row index " + std::to_string(i) + " out of range for " +
                     shape_str(x.shape()));
  }
  const std::size_t d = x.cols();
  std::vector<double> out(x.values().begin() + i * d, x.values().begin() + (i + 1) * d);
  auto xn = x.node();
  return Tensor::from_op({d}, std::move(out), {x}, [xn, i, d](const TensorNode& o) {
    if (double* gx = detail::grad_ptr(xn)) {
      const double* g = o.grad.data();
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[j];
    }
  });
}

Tensor concat_vec(const Tensor& a, const Tensor& b) {
  check_rank1(a, "concat_vec");
  check_rank1(b, "concat_vec");
  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> out;
  out.reserve(na + nb);
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  auto an = a.node();
  auto bn = b.node();
  return Tensor::from_op({na + nb}, std::move(out), {a, b},
                         [an, bn, na, nb](const TensorNode& o) {
                           const double* g = o.grad.data();
                           if (double* ga = detail::grad_ptr(an))
                             for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                           if (double* gb = detail::grad_ptr(bn))
                             for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                         });
}

Tensor slice_vec(const Tensor& x, std::size_t i0, std::size_t i1) {
  check_rank1(x, "slice_vec");
  if (i0 >= i1 || i1 > x.size()) {
    throw ShapeError("slice_vec [" + std::to_string(i0) + ", " + std::to_string(i1) +
                     ") out of range for " + shape_str(x.shape()));
  }
  std::vector<double> out(x.values().begin() + i0, x.values().begin() + i1);
  auto xn = x.node();
  return Tensor::from_op({i1 - i0}, std::move(out), {x},
                         [xn, i0, i1](const TensorNode& o) {
                           if (double* gx = detail::grad_ptr(xn)) {
                             const double* g = o.grad.data();
                             for (std::size_t i = 0; i < i1 - i0; ++i) gx[i0 + i] += g[i];
                           }
                         });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto xn = x.node();
  return Tensor::from_op({}, {s}, {x}, [xn](const TensorNode& o) {
    if (double* gx = detail::grad_ptr(xn)) {
      const double g = o.grad[0];
      for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g;
    }
  });
}

Tensor mean_rows_masked(const Tensor& x, const Tensor& mask) {
  check_rank2(x, "mean_rows_masked");
  check_rank1(mask, "mean_rows_masked mask");
  const std::size_t r = x.rows(), d = x.cols();
  if (mask.shape()[0] != r) {
    throw ShapeError("mean_rows_masked mask " + shape_str(mask.shape()) +
                     " incompatible with " + shape_str(x.shape()));
  }
  const double* pm = mask.values().data();
  std::size_t valid = 0;
  for (std::size_t i = 0; i < r; ++i)
    if (pm[i] != 0.0) ++valid;
  if (valid == 0) throw ValueError("mean_rows_masked: no valid rows");
  const double inv = 1.0 / static_cast<double>(valid);
  std::vector<double> out(d, 0.0);
  const double* px = x.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    if (pm[i] == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) out[j] += px[i * d + j];
  }
  for (std::size_t j = 0; j < d; ++j) out[j] *= inv;
  auto xn = x.node();
  auto mn = mask.node();
  return Tensor::from_op({d}, std::move(out), {x, mask},
                         [xn, mn, r, d, inv](const TensorNode& o) {
                           if (double* gx = detail::grad_ptr(xn)) {
                             const double* g = o.grad.data();
                             const double* pm = mn->value.data();
                             for (std::size_t i = 0; i < r; ++i) {
                               if (pm[i] == 0.0) continue;
                               for (std::size_t j = 0; j < d; ++j)
                                 gx[i * d + j] += g[j] * inv;
                             }
                           }
                         });
}

}  // namespace callfuse
