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

#include "efa_marl/envs/particle_world.hpp"
#include "efa_marl/numerics/layers.hpp"

#include <span>
#include <utility>
#include <vector>

namespace efa_marl::qlearn {

/// Recurrent per-agent utility network: FC -> ReLU -> GRU -> FC(|A|).
class AgentQNet {
 public:
  AgentQNet() = default;
  AgentQNet(const std::string& name, std::size_t obs_dim, std::size_t hidden,
            std::size_t n_actions, SeededRng& init);

  struct Output {
    Var q;
    Var hidden;
  };

  /// Rows of `obs` and `hidden` are independent samples.
  Output forward(Graph& g, Var obs, Var hidden);

  std::size_t obs_dim() const { return fc_in.in_features(); }
  std::size_t hidden_size() const { return gru.hidden_size(); }
  std::size_t n_actions() const { return fc_out.out_features(); }
  std::vector<Parameter*> parameters();

  LinearParams fc_in;
  GruParams gru;
  LinearParams fc_out;
};

/// Q-values for one observation; returns (q, new hidden).
std::pair<Tensor, Tensor> q_values(AgentQNet& net, const envs::Observation& obs,
                                   const Tensor& hidden);

/// Epsilon-greedy: uniform with probability epsilon, else the lowest-index
/// argmax. Consumes no randomness when epsilon is 0.
std::size_t select_action(std::span<const double> q, double epsilon, SeededRng& rng);

/// Lowest-index argmax.
std::size_t greedy_action(std::span<const double> q);

/// Additive mixing: Q_tot = sum_i Q_i.
double mix(std::span<const double> chosen_qs);

/// y = r if done, else r + gamma * max_next_qtot_target.
double td_target(double reward, bool done, double max_next_qtot_target, double gamma);

/// 1 when Q_tot underestimates the target-network value of the same joint
/// action, alpha otherwise (equality included).
double weighting(double q_tot, double q_tot_target_same_action, double alpha);

/// Mean of the batch weights, clamped to (0, 1]. Throws on an empty batch.
double update_alpha(std::span<const double> batch_weights);

/// A_f = Q(s, u)[taken] - sum_a pi_f(a) Q(s, <u^-f, a>)[a], where `critic_q`
/// is the critic's vector over the first mover's actions.
double counterfactual_advantage(std::span<const double> critic_q, std::size_t taken_action,
                                std::span<const double> pi_f);

/// Centralised critic for the first mover:
///   input  = concat(all observations, one-hot actions of the non-elected
///            agents in index order, one-hot elected index)
///   output = Q over the elected agent's |A| actions.
class CentralCritic {
 public:
  CentralCritic() = default;
  CentralCritic(const std::string& name, std::size_t n_agents, std::size_t obs_dim,
                std::size_t n_actions, std::size_t hidden, SeededRng& init);

  Var forward(Graph& g, Var input);
  std::vector<Parameter*> parameters();

  std::size_t n_agents() const { return n_agents_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t input_size() const;

  /// Writes one critic input row into `row` (length input_size()).
  void fill_input(std::span<double> row, std::span<const double> all_obs,
                  std::span<const std::size_t> joint_action, std::size_t elected) const;

  LinearParams l1, l2, l3;

 private:
  std::size_t n_agents_ = 0;
  std::size_t obs_dim_ = 0;
  std::size_t n_actions_ = 0;
};

}  // namespace efa_marl::qlearn
