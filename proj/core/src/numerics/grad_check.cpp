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

#include "efa_marl/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace efa_marl {

namespace {

double evaluate(const LossBuilder& f) {
  Graph g;
  g.set_relaxed(true);
  return f(g).value()[0];
}

}  // namespace

double grad_check(const LossBuilder& f, std::span<Parameter* const> params, double eps, GradCheckStats* stats) {
  std::vector<Tensor> saved;
  saved.reserve(params.size());
  for (Parameter* p : params) {
    saved.push_back(p->grad);
    p->grad.fill(0.0);
  }
  {
    Graph g;
    g.set_relaxed(true);
    g.backward(f(g));
  }
  const double centre = evaluate(f);
  double worst = 0.0;
  GradCheckStats local;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double original = p.value[i];
      const double analytic = p.grad[i];
      auto at = [&](double v) {
        p.value[i] = v;
        const double r = evaluate(f);
        p.value[i] = original;
        return r;
      };
      auto error = [&](double numeric) {
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        return std::abs(analytic - numeric) / denom;
      };
      const double up = at(original + eps);
      const double down = at(original - eps);
      double err = error((up - down) / (2.0 * eps));
      const double forward = (up - centre) / eps;
      const double backward = (centre - down) / eps;
      const double slope_gap = std::abs(forward - backward) / std::max({std::abs(forward), std::abs(backward), 1e-8});
      if (slope_gap > 1e-3) {
        ++local.refined;
        for (double h : {eps / 10.0, eps / 100.0}) {
          err = std::min(err, error((at(original + h) - at(original - h)) / (2.0 * h)));
        }
      }
      ++local.coordinates;
      worst = std::max(worst, err);
    }
  }
  if (stats != nullptr) {
    stats->coordinates += local.coordinates;
    stats->refined += local.refined;
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->grad = std::move(saved[k]);
  return worst;
}

}  // namespace efa_marl
