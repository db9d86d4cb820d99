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

#include <functional>
#include <span>

namespace efa_marl {

/// Builds a scalar loss on the given graph; must bind parameters through
/// Graph::param so that backward reaches them.
using LossBuilder = std::function<Var(Graph&)>;

struct GradCheckStats {
  std::size_t coordinates = 0;
  /// Coordinates whose stencil straddled a kink and were re-measured.
  std::size_t refined = 0;
};

/// Finite-difference gradient oracle. Compares backward() against
/// (f(p + eps) - f(p - eps)) / (2 eps) for every coordinate of `params` and
/// returns the worst relative error, with denominator
/// max(|analytic|, |numeric|, 1e-6); the floor sits above the roundoff of a
/// difference quotient, so exactly-zero gradients are not scored on noise. Graphs are built in relaxed mode so
/// straight-through nodes are checked as exact derivatives. When the forward
/// and backward one-sided slopes at `eps` disagree, a ReLU kink or an argmax
/// switch lies inside the stencil; that coordinate is re-measured at eps / 10
/// and eps / 100 and the closest agreement is kept. A wrong analytic gradient
/// disagrees at every step. Parameter values and gradients are left as they
/// were found.
double grad_check(const LossBuilder& f, std::span<Parameter* const> params, double eps = 1e-4,
                  GradCheckStats* stats = nullptr);

}  // namespace efa_marl
