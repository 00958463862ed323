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

#include "callfuse/gru.hpp"

#include <cmath>

namespace callfuse {

GruDirParams GruDirParams::init(std::size_t d_in, std::size_t d_h, RngStream& rng) {
  const double std_in = 1.0 / std::sqrt(static_cast<double>(d_in));
  const double std_h = 1.0 / std::sqrt(static_cast<double>(d_h));
  GruDirParams p;
  p.w_z = Tensor::randn({d_in, d_h}, rng, std_in).set_requires_grad(true);
  p.w_r = Tensor::randn({d_in, d_h}, rng, std_in).set_requires_grad(true);
  p.w_n = Tensor::randn({d_in, d_h}, rng, std_in).set_requires_grad(true);
  p.u_z = Tensor::randn({d_h, d_h}, rng, std_h).set_requires_grad(true);
  p.u_r = Tensor::randn({d_h, d_h}, rng, std_h).set_requires_grad(true);
  p.u_n = Tensor::randn({d_h, d_h}, rng, std_h).set_requires_grad(true);
  p.b_z = Tensor::zeros({d_h}).set_requires_grad(true);
  p.b_r = Tensor::zeros({d_h}).set_requires_grad(true);
  p.b_n = Tensor::zeros({d_h}).set_requires_grad(true);
  return p;
}

void GruDirParams::register_into(ParamRegistry& reg, const std::string& prefix) const {
  reg.add(prefix + ".w_z", w_z);
  reg.add(prefix + ".w_r", w_r);
  reg.add(prefix + ".w_n", w_n);
  reg.add(prefix + ".u_z", u_z);
  reg.add(prefix + ".u_r", u_r);
  reg.add(prefix + ".u_n", u_n);
  reg.add(prefix + ".b_z", b_z);
  reg.add(prefix + ".b_r", b_r);
  reg.add(prefix + ".b_n", b_n);
}

GruParams GruParams::init(std::size_t d_in, std::size_t d_h, std::size_t n_layers,
                          RngStream& rng) {
  if (d_in == 0 || d_h == 0 || n_layers == 0) {
    throw ValueError("gru dimensions must be positive");
  }
  GruParams p;
  p.d_in = d_in;
  p.d_h = d_h;
  p.layers.reserve(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::size_t in = (i == 0) ? d_in : 2 * d_h;
    GruLayerParams layer;
    layer.fwd = GruDirParams::init(in, d_h, rng);
    layer.bwd = GruDirParams::init(in, d_h, rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void GruParams::register_into(ParamRegistry& reg, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].fwd.register_into(reg, prefix + ".layer" + std::to_string(i) + ".fwd");
    layers[i].bwd.register_into(reg, prefix + ".layer" + std::to_string(i) + ".bwd");
  }
}

Tensor gru_cell(const GruDirParams& p, const Tensor& x, const Tensor& h) {
  if (x.rank() != 1 || h.rank() != 1) {
    throw ShapeError("gru_cell expects rank-1 x and h, got " + shape_str(x.shape()) +
                     " and " + shape_str(h.shape()));
  }
  if (x.shape()[0] != p.w_z.shape()[0] || h.shape()[0] != p.u_z.shape()[0]) {
    throw ShapeError("gru_cell width mismatch: x " + shape_str(x.shape()) + " vs W " +
                     shape_str(p.w_z.shape()) + ", h " + shape_str(h.shape()) +
                     " vs U " + shape_str(p.u_z.shape()));
  }
  Tensor z = sigmoid(add(add(vecmat(x, p.w_z), vecmat(h, p.u_z)), p.b_z));
  Tensor r = sigmoid(add(add(vecmat(x, p.w_r), vecmat(h, p.u_r)), p.b_r));
  Tensor n = tanh_op(add(add(vecmat(x, p.w_n), mul(r, vecmat(h, p.u_n))), p.b_n));
  Tensor one_minus_z = add_scalar(scale(z, -1.0), 1.0);
  return add(mul(one_minus_z, n), mul(z, h));
}

namespace {

std::size_t valid_prefix(const Tensor& mask, const char* what) {
  std::size_t v = 0;
  bool closed = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.values()[i] != 0.0) {
      if (closed) {
        throw ValueError(std::string(what) + ": mask must be a valid prefix (1s "
                                             "followed by 0s)");
      }
      ++v;
    } else {
      closed = true;
    }
  }
  return v;
}

}  // namespace

BiGruResult bigru_forward(const GruParams& p, const Tensor& segs, const Tensor& seg_mask,
                          const ForwardCtx& ctx) {
  if (segs.rank() != 2) {
    throw ShapeError("bigru_forward expects [l x d_in] segments, got " +
                     shape_str(segs.shape()));
  }
  if (seg_mask.rank() != 1 || seg_mask.shape()[0] != segs.rows()) {
    throw ShapeError("bigru_forward mask " + shape_str(seg_mask.shape()) +
                     " incompatible with " + shape_str(segs.shape()));
  }
  const std::size_t l = segs.rows();
  const std::size_t v = valid_prefix(seg_mask, "bigru_forward");
  if (v == 0) throw ValueError("bigru_forward: call has no valid segments");

  std::vector<Tensor> inputs;
  inputs.reserve(l);
  for (std::size_t t = 0; t < v; ++t) inputs.push_back(row(segs, t));

  Tensor h_n;
  Tensor zero_row;
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const GruLayerParams& layer = p.layers[li];
    // Dropout between stacked layers only, matching the block-level rate.
    if (li > 0 && ctx.training) {
      for (Tensor& in : inputs) in = dropout(in, ctx.dropout, ctx.training, ctx.rng);
    }
    Tensor h0 = Tensor::zeros({p.d_h});
    std::vector<Tensor> fwd(v), bwd(v);
    Tensor h = h0;
    for (std::size_t t = 0; t < v; ++t) {
      h = gru_cell(layer.fwd, inputs[t], h);
      fwd[t] = h;
    }
    Tensor hf_last = h;
    h = h0;
    for (std::size_t t = v; t-- > 0;) {
      h = gru_cell(layer.bwd, inputs[t], h);
      bwd[t] = h;
    }
    Tensor hb_first = h;

    std::vector<Tensor> next(v);
    for (std::size_t t = 0; t < v; ++t) next[t] = concat_vec(fwd[t], bwd[t]);
    inputs = std::move(next);

    Tensor layer_states = concat_vec(hf_last, hb_first);
    h_n = h_n.defined() ? concat_vec(h_n, layer_states) : layer_states;
  }

  std::vector<Tensor> out_rows = inputs;
  if (v < l) {
    Tensor zeros = Tensor::zeros({2 * p.d_h});
    for (std::size_t t = v; t < l; ++t) out_rows.push_back(zeros);
  }
  return BiGruResult{stack_rows(out_rows), h_n};
}

Tensor call_representation(const GruParams& p, const Tensor& h_n) {
  const std::size_t expect = 2 * p.layers.size() * p.d_h;
  if (h_n.rank() != 1 || h_n.shape()[0] != expect) {
    throw ShapeError("call_representation expects h_n of width " +
                     std::to_string(expect) + ", got " + shape_str(h_n.shape()));
  }
  if (p.layers.size() == 1) return h_n;
  return slice_vec(h_n, expect - 2 * p.d_h, expect);
}

}  // namespace callfuse
