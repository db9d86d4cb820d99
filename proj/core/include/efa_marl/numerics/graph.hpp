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

#include "efa_marl/numerics/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace efa_marl {

/// Trainable tensor with its gradient and optimizer accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor step_state;

  void zero_grad() { grad.fill(0.0); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape
/// order is already a topological order for the backward sweep.
class Graph {
 public:
  using Backprop = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that does not receive gradients.
  Var constant(Tensor value);
  /// Leaf bound to `p`; repeated calls return the same node. Trainable
  /// unless the graph was switched to frozen mode.
  Var param(Parameter& p);
  /// Leaf holding a copy of `p.value` that never receives gradients.
  Var frozen(const Parameter& p);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient of the last backward() with respect to node `v` (zeros if
  /// the node was not reached).
  Tensor grad(Var v) const;

  /// Accumulates d(loss)/d(value) into every participating Parameter::grad.
  /// Throws ArgumentError when `loss` is not a single element.
  void backward(Var loss);

  /// When set, straight_through() forwards its soft operand instead of the
  /// hard one, turning the estimator into an exact derivative. Only the
  /// finite-difference checks use this.
  void set_relaxed(bool relaxed) noexcept { relaxed_ = relaxed; }
  bool relaxed() const noexcept { return relaxed_; }

  /// In frozen mode param() yields constants; used for target networks.
  void set_frozen(bool frozen) noexcept { frozen_ = frozen; }

  // Used by op implementations.
  Var emit(Tensor value, std::initializer_list<Var> inputs, Backprop backprop, const char* op);
  Var emit(Tensor value, std::span<const Var> inputs, Backprop backprop, const char* op);
  Tensor& grad_ref(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backprop backprop;
    Parameter* param = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
  };

  std::deque<Node> nodes_;  // stable addresses: ops keep references to operand values
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool relaxed_ = false;
  bool frozen_ = false;
};

/// Differentiable operations. Rank-1 operands are treated as 1 x n rows.
namespace ops {

/// a[m x k] * b[k x n]
Var matmul(Var a, Var b);
/// a[m x k] * b[n x k]^T
Var matmul_nt(Var a, Var b);
/// x[m x in] * w[out x in]^T + b[out], bias broadcast over rows.
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var one_minus(Var a);
Var add_const(Var a, const Tensor& c);
Var mul_const(Var a, const Tensor& c);
/// x[m x d] with each row i multiplied by c[i] (c has m elements).
Var mul_col(Var x, Var c);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var stack_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var transpose(Var a);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Row-wise softmax over off-diagonal entries of a square matrix; the
/// diagonal of the result is exactly zero.
Var softmax_offdiag(Var a);

/// out[i] = a(i, index[i]); result has shape [m x 1].
Var gather_cols(Var a, std::span<const std::size_t> index);
/// Sum of all elements, shape [1].
Var sum(Var a);

/// Forward value `hard`, gradient passed unchanged to `soft`.
Var straight_through(Var soft, const Tensor& hard);
/// Forward value of `a`, no gradient.
Var stop_gradient(Var a);

}  // namespace ops

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }
inline Var operator*(double c, Var a) { return ops::scale(a, c); }

}  // namespace efa_marl
