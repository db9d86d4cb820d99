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

#include "efa_marl/numerics/optim.hpp"

#include <string>

namespace efa_marl {

void rmsprop_step(std::span<Parameter* const> params, double lr, double decay) {
  for (Parameter* p : params) {
    auto s = p->step_state.mat().array();
    auto g = p->grad.mat().array();
    s = decay * s + (1.0 - decay) * g * g;
    p->value.mat().array() -= lr * g / (s.sqrt() + 1e-8);
    p->grad.fill(0.0);
  }
}

void copy_values(std::span<Parameter* const> dst, std::span<Parameter* const> src) {
  if (dst.size() != src.size()) {
    throw DimensionError("copy_values: " + std::to_string(dst.size()) + " vs " +
                         std::to_string(src.size()) + " parameters");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!dst[i]->value.same_shape(src[i]->value)) {
      throw DimensionError("copy_values: " + dst[i]->name + " " + dst[i]->value.shape_string() +
                           " vs " + src[i]->value.shape_string());
    }
    dst[i]->value = src[i]->value;
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->grad.fill(0.0);
}

}  // namespace efa_marl
