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

#include "efa_marl/numerics/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace efa_marl {

Parameter::Parameter(std::string name_in, Tensor init)
    : name(std::move(name_in)),
      value(std::move(init)),
      grad(value.shape()),
      step_state(value.shape()) {}

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  nodes_.push_back(Node{p.value, {}, {}, frozen_ ? nullptr : &p, !frozen_, false});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Graph::frozen(const Parameter& p) { return constant(p.value); }

Var Graph::emit(Tensor value, std::initializer_list<Var> inputs, Backprop backprop,
                const char* op) {
  return emit(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(backprop), op);
}

Var Graph::emit(Tensor value, std::span<const Var> inputs, Backprop backprop, const char* op) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + " produced non-finite values");
  }
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [this](Var v) { return nodes_[v.id].needs_grad; });
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backprop) : Backprop{}, nullptr,
                        needs, false});
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ArgumentError("backward: loss must be a scalar, got " + value(loss).shape_string());
  }
  for (Node& n : nodes_) n.has_grad = false;
  grad_ref(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.needs_grad) continue;
    if (n.backprop) {
      n.backprop(*this, i);
    } else if (n.param != nullptr) {
      n.param->grad.mat() += n.grad.mat();
    }
  }
}

namespace ops {

namespace {

std::vector<std::size_t> shape_like(const Tensor& ref, std::size_t rows, std::size_t cols) {
  if (ref.rank() == 1 && rows == 1) return {cols};
  return {rows, cols};
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape " + a.shape_string() +
                         " does not match " + b.shape_string());
  }
}

Graph& graph_of(Var a) { return *a.graph; }

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + av.shape_string() + " * " + bv.shape_string());
  }
  Tensor out(shape_like(av, av.rows(), bv.cols()));
  out.mat().noalias() = av.mat() * bv.mat();
  return graph_of(a).emit(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& gr = g.grad_ref(self);
    if (g.requires_grad(a.id)) g.grad_ref(a.id).mat().noalias() += gr.mat() * g.value(b).mat().transpose();
    if (g.requires_grad(b.id)) g.grad_ref(b.id).mat().noalias() += g.value(a).mat().transpose() * gr.mat();
  }, "matmul");
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: " + av.shape_string() + " * " + bv.shape_string() + "^T");
  }
  Tensor out(shape_like(av, av.rows(), bv.rows()));
  out.mat().noalias() = av.mat() * bv.mat().transpose();
  return graph_of(a).emit(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& gr = g.grad_ref(self);
    if (g.requires_grad(a.id)) g.grad_ref(a.id).mat().noalias() += gr.mat() * g.value(b).mat();
    if (g.requires_grad(b.id)) g.grad_ref(b.id).mat().noalias() += gr.mat().transpose() * g.value(a).mat();
  }, "matmul_nt");
}

Var linear(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (wv.rank() != 2 || xv.cols() != wv.cols()) {
    throw DimensionError("linear: W " + wv.shape_string() + " incompatible with x " +
                         xv.shape_string());
  }
  if (bv.size() != wv.rows()) {
    throw DimensionError("linear: b " + bv.shape_string() + " incompatible with W " +
                         wv.shape_string());
  }
  Tensor out(shape_like(xv, xv.rows(), wv.rows()));
  auto om = out.mat();
  om.noalias() = xv.mat() * wv.mat().transpose();
  const auto brow = Eigen::Map<const Eigen::RowVectorXd>(bv.data().data(), static_cast<Eigen::Index>(bv.size()));
  om.rowwise() += brow;
  return graph_of(x).emit(std::move(out), {x, w, b}, [x, w, b](Graph& g, std::size_t self) {
    const Tensor& gr = g.grad_ref(self);
    if (g.requires_grad(x.id)) g.grad_ref(x.id).mat().noalias() += gr.mat() * g.value(w).mat();
    if (g.requires_grad(w.id)) g.grad_ref(w.id).mat().noalias() += gr.mat().transpose() * g.value(x).mat();
    if (g.requires_grad(b.id)) {
      Tensor& gb = g.grad_ref(b.id);
      Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), static_cast<Eigen::Index>(gb.size())) +=
          gr.mat().colwise().sum();
    }
  }, "linear");
}

Var linear(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || xv.cols() != wv.cols()) {
    throw DimensionError("linear: W " + wv.shape_string() + " incompatible with x " +
                         xv.shape_string());
  }
  Tensor out(shape_like(xv, xv.rows(), wv.rows()));
  out.mat().noalias() = xv.mat() * wv.mat().transpose();
  return graph_of(x).emit(std::move(out), {x, w}, [x, w](Graph& g, std::size_t self) {
    const Tensor& gr = g.grad_ref(self);
    if (g.requires_grad(x.id)) g.grad_ref(x.id).mat().noalias() += gr.mat() * g.value(w).mat();
    if (g.requires_grad(w.id)) g.grad_ref(w.id).mat().noalias() += gr.mat().transpose() * g.value(x).mat();
  }, "linear");
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.mat() += b.value().mat();
  return graph_of(a).emit(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& gr = g.grad_ref(self);
    if (g.requires_grad(a.id)) g.grad_ref(a.id).mat() += gr.mat();
    if (g.requires_grad(b.id)) g.grad_ref(b.id).mat() += gr.mat();
  }, "add");
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.mat() -= b.value().mat();
  return graph_of(a).emit(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& gr = g.grad_ref(self);
    if (g.requires_grad(a.id)) g.grad_ref(a.id).mat() += gr.mat();
    if (g.requires_grad(b.id)) g.grad_ref(b.id).mat() -= gr.mat();
  }, "sub");
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  out.mat().array() *= b.value().mat().array();
  return graph_of(a).emit(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& gr = g.grad_ref(self);
    if (g.requires_grad(a.id)) g.grad_ref(a.id).mat().array() += gr.mat().array() * g.value(b).mat().array();
    if (g.requires_grad(b.id)) g.grad_ref(b.id).mat().array() += gr.mat().array() * g.value(a).mat().array();
  }, "mul");
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  out.mat() *= c;
  return graph_of(a).emit(std::move(out), {a}, [a, c](Graph& g, std::size_t self) {
    g.grad_ref(a.id).mat() += c * g.grad_ref(self).mat();
  }, "scale");
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  out.mat().array() += c;
  return graph_of(a).emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    g.grad_ref(a.id).mat() += g.grad_ref(self).mat();
  }, "add_scalar");
}

Var one_minus(Var a) {
  Tensor out = a.value();
  out.mat().array() = 1.0 - out.mat().array();
  return graph_of(a).emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    g.grad_ref(a.id).mat() -= g.grad_ref(self).mat();
  }, "one_minus");
}

Var add_const(Var a, const Tensor& c) {
  require_same(a.value(), c, "add_const");
  Tensor out = a.value();
  out.mat() += c.mat();
  return graph_of(a).emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    g.grad_ref(a.id).mat() += g.grad_ref(self).mat();
  }, "add_const");
}

Var mul_const(Var a, const Tensor& c) {
  require_same(a.value(), c, "mul_const");
  Tensor out = a.value();
  out.mat().array() *= c.mat().array();
  return graph_of(a).emit(std::move(out), {a}, [a, c](Graph& g, std::size_t self) {
    g.grad_ref(a.id).mat().array() += g.grad_ref(self).mat().array() * c.mat().array();
  }, "mul_const");
}

Var mul_col(Var x, Var c) {
  const Tensor& xv = x.value();
  const Tensor& cv = c.value();
  if (cv.size() != xv.rows()) {
    throw DimensionError("mul_col: column " + cv.shape_string() + " incompatible with " +
                         xv.shape_string());
  }
  Tensor out = xv;
  auto om = out.mat();
  for (Eigen::Index r = 0; r < om.rows(); ++r) om.row(r) *= cv[static_cast<std::size_t>(r)];
  return graph_of(x).emit(std::move(out), {x, c}, [x, c](Graph& g, std::size_t self) {
    const Tensor& gr = g.grad_ref(self);
    const auto gm = gr.mat();
    if (g.requires_grad(x.id)) {
      auto gx = g.grad_ref(x.id).mat();
      const Tensor& cv = g.value(c);
      for (Eigen::Index r = 0; r < gm.rows(); ++r) gx.row(r) += cv[static_cast<std::size_t>(r)] * gm.row(r);
    }
    if (g.requires_grad(c.id)) {
      Tensor& gc = g.grad_ref(c.id);
      const auto xm = g.value(x).mat();
      for (Eigen::Index r = 0; r < gm.rows(); ++r) gc[static_cast<std::size_t>(r)] += gm.row(r).dot(xm.row(r));
    }
  }, "mul_col");
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  out.mat().array() = 1.0 / (1.0 + (-out.mat().array()).exp());
  const std::size_t out_id = a.graph->size();
  return graph_of(a).emit(std::move(out), {a}, [a, out_id](Graph& g, std::size_t self) {
    const auto y = g.value(out_id).mat().array();
    g.grad_ref(a.id).mat().array() += g.grad_ref(self).mat().array() * y * (1.0 - y);
  }, "sigmoid");
}

Var tanh(Var a) {
  Tensor out = a.value();
  out.mat().array() = out.mat().array().tanh();
  const std::size_t out_id = a.graph->size();
  return graph_of(a).emit(std::move(out), {a}, [a, out_id](Graph& g, std::size_t self) {
    const auto y = g.value(out_id).mat().array();
    g.grad_ref(a.id).mat().array() += g.grad_ref(self).mat().array() * (1.0 - y * y);
  }, "tanh");
}

Var relu(Var a) {
  Tensor out = a.value();
  out.mat() = out.mat().cwiseMax(0.0);
  return graph_of(a).emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    const auto x = g.value(a).mat().array();
    g.grad_ref(a.id).mat().array() += (x > 0.0).select(g.grad_ref(self).mat().array(), 0.0);
  }, "relu");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no operands");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: " + parts.front().value().shape_string() + " vs " +
                           p.value().shape_string());
    }
    cols += p.cols();
  }
  Tensor out(shape_like(parts.front().value(), rows, cols));
  auto om = out.mat();
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var p : parts) {
    offsets.push_back(off);
    om.middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(p.cols())) = p.value().mat();
    off += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return graph_of(parts.front()).emit(std::move(out), parts,
      [inputs, offsets](Graph& g, std::size_t self) {
        const auto gm = g.grad_ref(self).mat();
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!g.requires_grad(inputs[k].id)) continue;
          auto gi = g.grad_ref(inputs[k].id).mat();
          gi += gm.middleCols(static_cast<Eigen::Index>(offsets[k]), gi.cols());
        }
      }, "concat_cols");
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  if (start + count > av.cols() || count == 0) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + av.shape_string());
  }
  Tensor out(shape_like(av, av.rows(), count));
  out.mat() = av.mat().middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
  return graph_of(a).emit(std::move(out), {a}, [a, start, count](Graph& g, std::size_t self) {
    g.grad_ref(a.id).mat().middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) +=
        g.grad_ref(self).mat();
  }, "slice_cols");
}

Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("stack_rows: no operands");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("stack_rows: " + parts.front().value().shape_string() + " vs " +
                           p.value().shape_string());
    }
    rows += p.rows();
  }
  Tensor out({rows, cols});
  auto om = out.mat();
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var p : parts) {
    offsets.push_back(off);
    om.middleRows(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(p.rows())) = p.value().mat();
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return graph_of(parts.front()).emit(std::move(out), parts,
      [inputs, offsets](Graph& g, std::size_t self) {
        const auto gm = g.grad_ref(self).mat();
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!g.requires_grad(inputs[k].id)) continue;
          auto gi = g.grad_ref(inputs[k].id).mat();
          gi += gm.middleRows(static_cast<Eigen::Index>(offsets[k]), gi.rows());
        }
      }, "stack_rows");
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  if (start + count > av.rows() || count == 0) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + av.shape_string());
  }
  Tensor out({count, av.cols()});
  out.mat() = av.mat().middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
  return graph_of(a).emit(std::move(out), {a}, [a, start, count](Graph& g, std::size_t self) {
    g.grad_ref(a.id).mat().middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) +=
        g.grad_ref(self).mat();
  }, "slice_rows");
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  Tensor out({av.cols(), av.rows()});
  out.mat() = av.mat().transpose();
  return graph_of(a).emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    g.grad_ref(a.id).mat() += g.grad_ref(self).mat().transpose();
  }, "transpose");
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  if (av.empty()) throw ArgumentError("softmax: empty input");
  Tensor out = av;
  auto om = out.mat();
  for (Eigen::Index r = 0; r < om.rows(); ++r) {
    auto row = om.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  const std::size_t out_id = a.graph->size();
  return graph_of(a).emit(std::move(out), {a}, [a, out_id](Graph& g, std::size_t self) {
    const auto y = g.value(out_id).mat();
    const auto gy = g.grad_ref(self).mat();
    auto gx = g.grad_ref(a.id).mat();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = gy.row(r).dot(y.row(r));
      gx.row(r).array() += y.row(r).array() * (gy.row(r).array() - dot);
    }
  }, "softmax");
}

Var log_softmax_rows(Var a) {
  const Tensor& av = a.value();
  if (av.empty()) throw ArgumentError("log_softmax: empty input");
  Tensor out = av;
  auto om = out.mat();
  for (Eigen::Index r = 0; r < om.rows(); ++r) {
    auto row = om.row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  const std::size_t out_id = a.graph->size();
  return graph_of(a).emit(std::move(out), {a}, [a, out_id](Graph& g, std::size_t self) {
    const auto y = g.value(out_id).mat();
    const auto gy = g.grad_ref(self).mat();
    auto gx = g.grad_ref(a.id).mat();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double total = gy.row(r).sum();
      gx.row(r).array() += gy.row(r).array() - y.row(r).array().exp() * total;
    }
  }, "log_softmax");
}

Var softmax_offdiag(Var a) {
  const Tensor& av = a.value();
  const std::size_t n = av.rows();
  if (av.rank() != 2 || av.cols() != n) {
    throw DimensionError("softmax_offdiag: expected a square matrix, got " + av.shape_string());
  }
  if (n < 2) throw ArgumentError("softmax_offdiag: need at least 2 rows, got " + std::to_string(n));
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) m = std::max(m, av(i, j));
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      out(i, j) = std::exp(av(i, j) - m);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= total;
  }
  const std::size_t out_id = a.graph->size();
  return graph_of(a).emit(std::move(out), {a}, [a, out_id](Graph& g, std::size_t self) {
    // Zero diagonal of y makes the plain softmax adjoint exact here.
    const auto y = g.value(out_id).mat();
    const auto gy = g.grad_ref(self).mat();
    auto gx = g.grad_ref(a.id).mat();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = gy.row(r).dot(y.row(r));
      gx.row(r).array() += y.row(r).array() * (gy.row(r).array() - dot);
    }
  }, "softmax_offdiag");
}

Var gather_cols(Var a, std::span<const std::size_t> index) {
  const Tensor& av = a.value();
  if (index.size() != av.rows()) {
    throw DimensionError("gather_cols: " + std::to_string(index.size()) + " indices for " +
                         av.shape_string());
  }
  Tensor out({av.rows(), 1});
  for (std::size_t r = 0; r < av.rows(); ++r) {
    if (index[r] >= av.cols()) {
      throw DimensionError("gather_cols: index " + std::to_string(index[r]) + " out of " +
                           av.shape_string());
    }
    out[r] = av(r, index[r]);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return graph_of(a).emit(std::move(out), {a}, [a, idx](Graph& g, std::size_t self) {
    const Tensor& gr = g.grad_ref(self);
    Tensor& ga = g.grad_ref(a.id);
    for (std::size_t r = 0; r < idx.size(); ++r) ga(r, idx[r]) += gr[r];
  }, "gather_cols");
}

Var sum(Var a) {
  Tensor out = Tensor::scalar(a.value().mat().sum());
  return graph_of(a).emit(std::move(out), {a}, [a](Graph& g, std::size_t self) {
    g.grad_ref(a.id).mat().array() += g.grad_ref(self)[0];
  }, "sum");
}

Var straight_through(Var soft, const Tensor& hard) {
  require_same(soft.value(), hard, "straight_through");
  Tensor out = soft.graph->relaxed() ? soft.value() : hard;
  if (out.shape() != soft.value().shape()) out = Tensor(soft.value().shape(), hard.values());
  return graph_of(soft).emit(std::move(out), {soft}, [soft](Graph& g, std::size_t self) {
    g.grad_ref(soft.id).mat() += g.grad_ref(self).mat();
  }, "straight_through");
}

Var stop_gradient(Var a) { return a.graph->constant(a.value()); }

}  // namespace ops

}  // namespace efa_marl
