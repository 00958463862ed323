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

#ifndef CALLFUSE_GRU_HPP
#define CALLFUSE_GRU_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "callfuse/context.hpp"
#include "callfuse/tensor.hpp"

namespace callfuse {

/// One direction of one GRU layer. The cell is
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wn x + r * (Un h) + bn)     (reset gate applied to Un h)
///   h' = (1 - z) * n + z * h
struct GruDirParams {
  Tensor w_z, w_r, w_n;  // [d_in x d_h]
  Tensor u_z, u_r, u_n;  // [d_h x d_h]
  Tensor b_z, b_r, b_n;  // [d_h]

  static GruDirParams init(std::size_t d_in, std::size_t d_h, RngStream& rng);
  void register_into(ParamRegistry& reg, const std::string& prefix) const;
};

struct GruLayerParams {
  GruDirParams fwd, bwd;
};

/// Stacked bidirectional GRU. Layer 0 consumes segment vectors of width
/// d_in; deeper layers consume the 2*d_h concatenated outputs below them.
struct GruParams {
  std::size_t d_in = 0;
  std::size_t d_h = 0;
  std::vector<GruLayerParams> layers;

  static GruParams init(std::size_t d_in, std::size_t d_h, std::size_t n_layers,
                        RngStream& rng);
  void register_into(ParamRegistry& reg, const std::string& prefix) const;
};

/// One cell step: x is [d_in], h is [d_h]; returns the next hidden state.
Tensor gru_cell(const GruDirParams& p, const Tensor& x, const Tensor& h);

struct BiGruResult {
  /// [l x 2*d_h]; rows at padded segment positions are zero.
  Tensor outputs;
  /// Final states, layout [layer0.fwd | layer0.bwd | layer1.fwd | ...],
  /// total width 2 * n_layers * d_h. Forward states are taken at the last
  /// valid step, backward states at the first.
  Tensor h_n;
};

/// Runs the stacked Bi-GRU over the valid prefix of `segs` (rank-2
/// [l x d_in]) marked by the 0/1 rank-1 `seg_mask`. Initial hidden states
/// are zero. Raises ValueError when no segment is valid.
BiGruResult bigru_forward(const GruParams& p, const Tensor& segs, const Tensor& seg_mask,
                          const ForwardCtx& ctx);

/// Top-layer [final forward | final backward] states: the call-level
/// representation of width 2*d_h.
Tensor call_representation(const GruParams& p, const Tensor& h_n);

}  // namespace callfuse

#endif  // CALLFUSE_GRU_HPP
