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

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace efa_marl::efa {

enum class Activation { kRelu, kTanh, kIdentity };
Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);
Var activate(Var x, Activation a);

struct EfaConfig {
  std::size_t obs_dim = 0;
  std::size_t n_actions = envs::kNumActions;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  int hold_k = 5;
  double beta = 1.0;
  Activation encoder_activation = Activation::kRelu;
};

/// Per-agent message-encoder hidden state, one row per agent.
struct EncoderState {
  Tensor hidden;

  static EncoderState zeros(std::size_t n_agents, std::size_t hidden_size) {
    return {Tensor({n_agents, hidden_size})};
  }
};

/// One-hot election with its relaxation and hold counter.
struct ElectionWeights {
  Tensor hard;        ///< one-hot over agents
  Tensor soft;        ///< Gumbel-Softmax probabilities
  Tensor noise;       ///< Gumbel noise drawn at the election step
  std::size_t elected = 0;
  int age = 0;        ///< steps since the election that produced it

  bool valid() const;
};

/// Message encoder (FC + GRU), M attention heads, and the shared
/// single-layer weight generator.
class EfaNet {
 public:
  EfaNet() = default;
  EfaNet(const EfaConfig& config, SeededRng& init);

  const EfaConfig& config() const noexcept { return config_; }
  std::vector<Parameter*> parameters();

  /// Rows of `inputs` are concat(observation, one-hot last action); rows of
  /// `hidden` the matching previous hidden states.
  Var encode(Graph& g, Var inputs, Var hidden);
  /// n x d -> n x d. A single agent has no neighbours and passes through.
  Var aggregate(Graph& g, Var h);
  /// n x d -> 1 x n election logits.
  Var logits(Graph& g, Var mfeat);

  LinearParams encoder_fc;
  GruParams encoder_gru;
  std::vector<Parameter> heads;
  LinearParams generator;

 private:
  EfaConfig config_;
};

Tensor one_hot(std::optional<std::size_t> index, std::size_t n);

/// Stacks concat(o_i, onehot(u_i)) rows; `last_actions[i]` empty at t = 0.
Tensor encoder_inputs(std::span<const envs::Observation> obs,
                      std::span<const std::optional<std::size_t>> last_actions,
                      std::size_t n_actions);

/// Encoder forward for every agent with shared parameters.
std::pair<Tensor, EncoderState> encode(EfaNet& net, std::span<const envs::Observation> obs,
                                       std::span<const std::optional<std::size_t>> last_actions,
                                       const EncoderState& state);

Tensor aggregate(EfaNet& net, const Tensor& h);

/// Weight generator + Gumbel-Softmax; age 0.
ElectionWeights generate(EfaNet& net, const Tensor& mfeat, double beta, SeededRng& rng);

/// One step of the hold-K election. The encoder hidden state advances every
/// step; encode -> aggregate -> generate runs only when t % K == 0 or no
/// previous election exists, otherwise `prev` is returned with age + 1.
ElectionWeights elect(EfaNet& net, std::span<const envs::Observation> obs,
                      std::span<const std::optional<std::size_t>> last_actions, int t,
                      const ElectionWeights* prev, EncoderState& state, SeededRng& rng);

/// Election pinned to one agent (the VDN arm); consumes no randomness.
ElectionWeights fixed_election(std::size_t n_agents, std::size_t agent, int age = 0);

/// W . o: the elected agent's observation.
envs::Observation first_move_observation(std::span<const envs::Observation> obs,
                                         const ElectionWeights& w);

/// Differentiable W . o over per-agent observation blocks: sum_i w_i o_i,
/// where `weights` is [rows x n] and each obs[i] is [rows x d].
Var first_move_observation(std::span<const Var> obs, Var weights);

}  // namespace efa_marl::efa
