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

#include "efa_marl/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace efa_marl {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {
  if (shape_.empty() || shape_.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got " + efa_marl::shape_string(shape_));
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got " + efa_marl::shape_string(shape_));
  }
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("shape " + efa_marl::shape_string(shape_) + " does not match data length " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::from_matrix(const RowMatrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.mat() = m;
  return t;
}

std::size_t Tensor::rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 0;
  return shape_.size() == 2 ? shape_[1] : shape_[0];
}

MatrixMap Tensor::mat() noexcept {
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                   static_cast<Eigen::Index>(cols()));
}

ConstMatrixMap Tensor::mat() const noexcept {
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::row(std::size_t r) const {
  if (r >= rows()) {
    throw DimensionError("row " + std::to_string(r) + " out of range for " + shape_string());
  }
  const std::size_t c = cols();
  return Tensor({c}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * c),
                                         data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)));
}

std::string Tensor::shape_string() const { return efa_marl::shape_string(shape_); }

}  // namespace efa_marl
