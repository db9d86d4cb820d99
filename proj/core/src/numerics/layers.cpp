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

#include "efa_marl/numerics/layers.hpp"

#include <algorithm>
#include <cmath>

namespace efa_marl {

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

LinearParams::LinearParams(const std::string& name, std::size_t in, std::size_t out,
                           SeededRng& init)
    : weight(name + ".weight", glorot(out, in, init)), bias(name + ".bias", Tensor({out})) {}

GruParams::GruParams(const std::string& name, std::size_t d_in, std::size_t d_hidden,
                     SeededRng& init)
    : w_z(name + ".w_z", glorot(d_hidden, d_in, init)),
      u_z(name + ".u_z", glorot(d_hidden, d_hidden, init)),
      b_z(name + ".b_z", Tensor({d_hidden})),
      w_r(name + ".w_r", glorot(d_hidden, d_in, init)),
      u_r(name + ".u_r", glorot(d_hidden, d_hidden, init)),
      b_r(name + ".b_r", Tensor({d_hidden})),
      w_h(name + ".w_h", glorot(d_hidden, d_in, init)),
      u_h(name + ".u_h", glorot(d_hidden, d_hidden, init)),
      b_h(name + ".b_h", Tensor({d_hidden})) {}

std::vector<Parameter*> GruParams::parameters() {
  return {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_h, &u_h, &b_h};
}

Var linear(Graph& g, Var x, LinearParams& p) {
  return ops::linear(x, g.param(p.weight), g.param(p.bias));
}

Var gru_step(Graph& g, Var x, Var h_prev, GruParams& p) {
  if (x.cols() != p.input_size() || h_prev.cols() != p.hidden_size() ||
      x.rows() != h_prev.rows()) {
    throw DimensionError("gru_step: x " + x.value().shape_string() + " / h " +
                         h_prev.value().shape_string() + " incompatible with GRU(" +
                         std::to_string(p.input_size()) + " -> " +
                         std::to_string(p.hidden_size()) + ")");
  }
  using namespace ops;
  Var z = sigmoid(linear(x, g.param(p.w_z), g.param(p.b_z)) + linear(h_prev, g.param(p.u_z)));
  Var r = sigmoid(linear(x, g.param(p.w_r), g.param(p.b_r)) + linear(h_prev, g.param(p.u_r)));
  Var c = ops::tanh(linear(x, g.param(p.w_h), g.param(p.b_h)) + linear(r * h_prev, g.param(p.u_h)));
  return one_minus(z) * h_prev + z * c;
}

Tensor softmax(const Tensor& v) {
  if (v.empty()) throw ArgumentError("softmax: empty input");
  Graph g;
  return ops::softmax_rows(g.constant(v)).value();
}

GumbelSample gumbel_softmax(Var logits, double beta, SeededRng& rng) {
  Tensor noise(logits.value().shape());
  for (double& v : noise.data()) v = rng.gumbel();
  return gumbel_softmax_with_noise(logits, beta, noise);
}

GumbelSample gumbel_softmax_with_noise(Var logits, double beta, const Tensor& noise,
                                       const Tensor& hard_override) {
  if (!(beta > 0.0)) throw ArgumentError("gumbel_softmax: beta must be positive");
  if (logits.value().empty()) throw ArgumentError("gumbel_softmax: empty logits");
  if (logits.value().rows() != 1) {
    throw DimensionError("gumbel_softmax: expected a single row of logits, got " +
                         logits.value().shape_string());
  }
  GumbelSample s;
  s.noise = noise;
  s.soft = ops::softmax_rows(ops::scale(ops::add_const(logits, noise), beta));
  Tensor hard(s.soft.value().shape());
  if (!hard_override.empty()) {
    if (hard_override.size() != hard.size()) {
      throw DimensionError("gumbel_softmax: recorded hard " + hard_override.shape_string() +
                           " vs logits " + logits.value().shape_string());
    }
    s.index = argmax(hard_override.data());
  } else {
    s.index = argmax(s.soft.value().data());
  }
  hard[s.index] = 1.0;
  s.hard = ops::straight_through(s.soft, hard);
  return s;
}

Var attention_coefficients(Var h, Var w) {
  const Tensor& hv = h.value();
  if (hv.rows() < 2 || hv.rank() != 2) {
    throw ArgumentError("attention_coefficients: need at least 2 agents, got " +
                        hv.shape_string());
  }
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || wv.rows() != hv.cols()) {
    throw DimensionError("attention_coefficients: W " + wv.shape_string() +
                         " incompatible with H " + hv.shape_string());
  }
  Var proj = ops::matmul(h, w);
  Var scores = ops::scale(ops::matmul_nt(proj, proj), 1.0 / std::sqrt(static_cast<double>(wv.cols())));
  return ops::softmax_offdiag(scores);
}

Var multi_head_aggregate(Graph& g, Var h, std::span<Parameter> heads) {
  if (heads.empty()) throw ArgumentError("multi_head_aggregate: need at least one head");
  const Tensor& hv = h.value();
  const std::size_t d = hv.cols();
  const std::size_t m = heads.size();
  if (d % m != 0) {
    throw DimensionError("multi_head_aggregate: width " + std::to_string(d) +
                         " not divisible by " + std::to_string(m) + " heads");
  }
  const std::size_t dv = d / m;
  std::vector<Var> outputs;
  outputs.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const Tensor& wv = heads[k].value;
    if (wv.rank() != 2 || wv.rows() != d || wv.cols() != dv) {
      throw DimensionError("multi_head_aggregate: head " + std::to_string(k) + " weight " +
                           wv.shape_string() + " vs expected " +
                           shape_string({d, dv}));
    }
    Var w = g.param(heads[k]);
    Var proj = ops::matmul(h, w);
    Var scores = ops::scale(ops::matmul_nt(proj, proj), 1.0 / std::sqrt(static_cast<double>(dv)));
    Var attn = ops::softmax_offdiag(scores);
    Var message = ops::matmul(attn, proj);
    outputs.push_back(ops::relu(message + ops::slice_cols(h, k * dv, dv)));
  }
  return m == 1 ? outputs.front() : ops::concat_cols(outputs);
}

}  // namespace efa_marl
