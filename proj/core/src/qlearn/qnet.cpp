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

#include "efa_marl/qlearn/qnet.hpp"

#include <algorithm>
#include <numeric>

namespace efa_marl::qlearn {

AgentQNet::AgentQNet(const std::string& name, std::size_t obs_dim, std::size_t hidden,
                     std::size_t n_actions, SeededRng& init)
    : fc_in(name + ".fc_in", obs_dim, hidden, init),
      gru(name + ".gru", hidden, hidden, init),
      fc_out(name + ".fc_out", hidden, n_actions, init) {}

AgentQNet::Output AgentQNet::forward(Graph& g, Var obs, Var hidden) {
  if (obs.cols() != obs_dim()) {
    throw DimensionError("AgentQNet: observation " + obs.value().shape_string() +
                         " vs expected width " + std::to_string(obs_dim()));
  }
  Var x = ops::relu(linear(g, obs, fc_in));
  Var h = gru_step(g, x, hidden, gru);
  return {linear(g, h, fc_out), h};
}

std::vector<Parameter*> AgentQNet::parameters() {
  std::vector<Parameter*> out = fc_in.parameters();
  for (Parameter* p : gru.parameters()) out.push_back(p);
  for (Parameter* p : fc_out.parameters()) out.push_back(p);
  return out;
}

std::pair<Tensor, Tensor> q_values(AgentQNet& net, const envs::Observation& obs,
                                   const Tensor& hidden) {
  Graph g;
  AgentQNet::Output out = net.forward(g, g.constant(Tensor::vector(obs)), g.constant(hidden));
  return {out.q.value(), out.hidden.value()};
}

std::size_t greedy_action(std::span<const double> q) {
  return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

std::size_t select_action(std::span<const double> q, double epsilon, SeededRng& rng) {
  if (q.empty()) throw ArgumentError("select_action: empty Q vector");
  if (epsilon < 0.0 || epsilon > 1.0) throw ArgumentError("select_action: epsilon outside [0, 1]");
  if (epsilon > 0.0 && rng.uniform() < epsilon) return rng.index(q.size());
  return greedy_action(q);
}

double mix(std::span<const double> chosen_qs) {
  if (chosen_qs.empty()) throw ArgumentError("mix: no agents");
  return std::accumulate(chosen_qs.begin(), chosen_qs.end(), 0.0);
}

double td_target(double reward, bool done, double max_next_qtot_target, double gamma) {
  return done ? reward : reward + gamma * max_next_qtot_target;
}

double weighting(double q_tot, double q_tot_target_same_action, double alpha) {
  return q_tot < q_tot_target_same_action ? 1.0 : alpha;
}

double update_alpha(std::span<const double> batch_weights) {
  if (batch_weights.empty()) throw ArgumentError("update_alpha: empty batch");
  const double mean = std::accumulate(batch_weights.begin(), batch_weights.end(), 0.0) /
                      static_cast<double>(batch_weights.size());
  return std::clamp(mean, 1e-12, 1.0);
}

double counterfactual_advantage(std::span<const double> critic_q, std::size_t taken_action,
                                std::span<const double> pi_f) {
  if (critic_q.size() != pi_f.size() || taken_action >= critic_q.size()) {
    throw DimensionError("counterfactual_advantage: critic " + std::to_string(critic_q.size()) +
                         " values, policy " + std::to_string(pi_f.size()) + ", action " +
                         std::to_string(taken_action));
  }
  double baseline = 0.0;
  for (std::size_t a = 0; a < critic_q.size(); ++a) baseline += pi_f[a] * critic_q[a];
  return critic_q[taken_action] - baseline;
}

CentralCritic::CentralCritic(const std::string& name, std::size_t n_agents, std::size_t obs_dim,
                             std::size_t n_actions, std::size_t hidden, SeededRng& init)
    : n_agents_(n_agents), obs_dim_(obs_dim), n_actions_(n_actions) {
  l1 = LinearParams(name + ".l1", input_size(), hidden, init);
  l2 = LinearParams(name + ".l2", hidden, hidden, init);
  l3 = LinearParams(name + ".l3", hidden, n_actions, init);
}

std::size_t CentralCritic::input_size() const {
  return n_agents_ * obs_dim_ + (n_agents_ - 1) * n_actions_ + n_agents_;
}

Var CentralCritic::forward(Graph& g, Var input) {
  if (input.cols() != input_size()) {
    throw DimensionError("CentralCritic: input " + input.value().shape_string() +
                         " vs expected width " + std::to_string(input_size()));
  }
  Var h = ops::relu(linear(g, input, l1));
  h = ops::relu(linear(g, h, l2));
  return linear(g, h, l3);
}

std::vector<Parameter*> CentralCritic::parameters() {
  std::vector<Parameter*> out = l1.parameters();
  for (Parameter* p : l2.parameters()) out.push_back(p);
  for (Parameter* p : l3.parameters()) out.push_back(p);
  return out;
}

void CentralCritic::fill_input(std::span<double> row, std::span<const double> all_obs,
                               std::span<const std::size_t> joint_action,
                               std::size_t elected) const {
  if (row.size() != input_size() || all_obs.size() != n_agents_ * obs_dim_ ||
      joint_action.size() != n_agents_ || elected >= n_agents_) {
    throw DimensionError("CentralCritic::fill_input: inconsistent input sizes");
  }
  std::fill(row.begin(), row.end(), 0.0);
  std::copy(all_obs.begin(), all_obs.end(), row.begin());
  std::size_t off = all_obs.size();
  for (std::size_t i = 0; i < n_agents_; ++i) {
    if (i == elected) continue;
    row[off + joint_action[i]] = 1.0;
    off += n_actions_;
  }
  row[off + elected] = 1.0;
}

}  // namespace efa_marl::qlearn
