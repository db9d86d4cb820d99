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

#include <span>

namespace efa_marl {

/// RMSProp update, then zeroes every gradient:
///   s <- decay * s + (1 - decay) * g^2
///   value <- value - lr * g / (sqrt(s) + 1e-8)
void rmsprop_step(std::span<Parameter* const> params, double lr, double decay);

/// Copies values (not gradients or optimizer state) from `src` into `dst`.
/// Throws DimensionError when the lists do not line up.
void copy_values(std::span<Parameter* const> dst, std::span<Parameter* const> src);

void zero_grads(std::span<Parameter* const> params);

}  // namespace efa_marl
