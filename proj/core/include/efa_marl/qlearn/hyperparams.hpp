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

#include "efa_marl/efa/election.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace efa_marl::qlearn {

/// Learning hyperparameters. Defaults are the published settings; see
/// README for the few that are local choices (lambda_cf, alpha0, capacity).
struct Hyperparams {
  double gamma = 0.99;
  double lr = 5e-4;
  double rms_decay = 0.99;
  double eps_start = 0.2;
  double eps_end = 0.05;
  std::int64_t eps_anneal_steps = 50000;
  std::size_t batch_episodes = 30;
  std::int64_t target_period = 200;
  int hold_k = 5;
  std::size_t heads = 4;
  std::size_t hidden = 64;
  double beta = 1.0;
  double lambda_cf = 0.1;
  double alpha0 = 0.5;
  std::size_t buffer_capacity = 2000;
  /// Whether the TD and counterfactual losses back-propagate into the
  /// election network through the straight-through path.
  bool efa_grad = true;
  efa::Activation encoder_activation = efa::Activation::kRelu;

  /// Throws ArgumentError naming the first offending field.
  void validate() const;
};

/// Linear anneal from eps_start to eps_end over eps_anneal_steps, then flat.
/// Field names and values as flat key/value text, in declaration order.
/// Doubles are written in shortest round-trip form.
std::vector<std::pair<std::string, std::string>> hyperparam_fields(const Hyperparams& hp);

/// Assigns one field from text. Returns false for an unknown key; throws
/// ArgumentError naming the field when the value does not parse.
bool set_hyperparam(Hyperparams& hp, std::string_view key, std::string_view value);

std::string format_double(double v);
double parse_double(std::string_view text, std::string_view field);
std::int64_t parse_int(std::string_view text, std::string_view field);
bool parse_bool(std::string_view text, std::string_view field);

double epsilon_at(std::int64_t env_step, const Hyperparams& hp = {});

}  // namespace efa_marl::qlearn
