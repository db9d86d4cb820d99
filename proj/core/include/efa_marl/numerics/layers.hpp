// Copyright 2026 The efa-marl Authors. All rights reserved.
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

#pragma once

#include "efa_marl/numerics/graph.hpp"
#include "efa_marl/numerics/rng.hpp"

#include <span>
#include <string>
#include <vector>

namespace efa_marl {

/// Fully connected layer parameters: weight [out x in], bias [out].
struct LinearParams {
  LinearParams() = default;
  /// Glorot-uniform weights, zero bias.
  LinearParams(const std::string& name, std::size_t in, std::size_t out, SeededRng& init);

  Parameter weight;
  Parameter bias;

  std::size_t in_features() const { return weight.value.cols(); }
  std::size_t out_features() const { return weight.value.rows(); }
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

/// GRU cell with the gate convention
///   z = sigmoid(W_z x + U_z h + b_z)
///   r = sigmoid(W_r x + U_r h + b_r)
///   c = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h + z * c
struct GruParams {
  GruParams() = default;
  GruParams(const std::string& name, std::size_t d_in, std::size_t d_hidden, SeededRng& init);

  Parameter w_z, u_z, b_z;
  Parameter w_r, u_r, b_r;
  Parameter w_h, u_h, b_h;

  std::size_t input_size() const { return w_z.value.cols(); }
  std::size_t hidden_size() const { return w_z.value.rows(); }
  std::vector<Parameter*> parameters();
};

/// y = W x + b. Rows of a 2-D `x` are independent samples.
Var linear(Graph& g, Var x, LinearParams& p);

/// One GRU step; rows of `x` and `h_prev` are independent samples.
Var gru_step(Graph& g, Var x, Var h_prev, GruParams& p);

/// Max-subtracted softmax of a vector. Throws ArgumentError on empty input.
Tensor softmax(const Tensor& v);

struct GumbelSample {
  Var soft;             ///< Relaxed sample, a probability vector.
  Var hard;             ///< One-hot forward value, soft gradient (straight-through).
  Tensor noise;         ///< The Gumbel draws g_i used.
  std::size_t index = 0;
};

/// Gumbel-Softmax relaxation of the categorical given by `logits`:
///   soft_i = softmax(beta * (logits_i + g_i)),  g_i = -log(-log(u_i)).
/// Using the raw logits in place of log(pi) is exact since softmax is
/// shift-invariant. Throws ArgumentError unless beta > 0.
GumbelSample gumbel_softmax(Var logits, double beta, SeededRng& rng);

/// Same relaxation with caller-supplied noise. When `hard_override` is
/// non-empty it becomes the forward value of `hard` (replaying a recorded
/// election); otherwise hard is the one-hot argmax of soft.
GumbelSample gumbel_softmax_with_noise(Var logits, double beta, const Tensor& noise,
                                       const Tensor& hard_override = {});

/// a_ij = softmax over j != i of (h_i W)(h_j W)^T / sqrt(d_k); a_ii = 0.
/// Throws ArgumentError when fewer than two rows are given.
Var attention_coefficients(Var h, Var w);

/// Multi-head aggregation over the fully connected graph. Head m with
/// weight W_m [d x d/M] produces
///   out_i = relu(sum_{j != i} a_ij (h_j W_m) + h_i[m-th d/M slice])
/// and the M head outputs are concatenated, giving n x d.
Var multi_head_aggregate(Graph& g, Var h, std::span<Parameter> heads);

}  // namespace efa_marl
