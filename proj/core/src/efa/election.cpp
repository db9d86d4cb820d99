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

#include "efa_marl/efa/election.hpp"

#include <algorithm>
#include <cmath>

namespace efa_marl::efa {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw ArgumentError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "relu";
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::kRelu: return ops::relu(x);
    case Activation::kTanh: return ops::tanh(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

bool ElectionWeights::valid() const {
  if (hard.empty() || hard.size() != soft.size() || elected >= hard.size()) return false;
  double ones = 0.0;
  for (double v : hard.data()) {
    if (v != 0.0 && v != 1.0) return false;
    ones += v;
  }
  double total = 0.0;
  for (double v : soft.data()) {
    if (v < 0.0) return false;
    total += v;
  }
  return ones == 1.0 && hard[elected] == 1.0 && std::abs(total - 1.0) <= 1e-6 && age >= 0;
}

EfaNet::EfaNet(const EfaConfig& config, SeededRng& init) : config_(config) {
  if (config.heads == 0 || config.hidden % config.heads != 0) {
    throw DimensionError("EfaNet: hidden width " + std::to_string(config.hidden) +
                         " not divisible by " + std::to_string(config.heads) + " heads");
  }
  SeededRng enc_rng = init.fork(1);
  SeededRng agg_rng = init.fork(2);
  SeededRng gen_rng = init.fork(3);
  encoder_fc = LinearParams("efa.encoder.fc", config.obs_dim + config.n_actions, config.hidden, enc_rng);
  encoder_gru = GruParams("efa.encoder.gru", config.hidden, config.hidden, enc_rng);
  const std::size_t dv = config.hidden / config.heads;
  const double limit = std::sqrt(6.0 / static_cast<double>(config.hidden + dv));
  for (std::size_t m = 0; m < config.heads; ++m) {
    Tensor w({config.hidden, dv});
    for (double& v : w.data()) v = agg_rng.uniform(-limit, limit);
    heads.emplace_back("efa.aggregator.head" + std::to_string(m), std::move(w));
  }
  generator = LinearParams("efa.generator", config.hidden, 1, gen_rng);
}

std::vector<Parameter*> EfaNet::parameters() {
  std::vector<Parameter*> out = encoder_fc.parameters();
  for (Parameter* p : encoder_gru.parameters()) out.push_back(p);
  for (Parameter& p : heads) out.push_back(&p);
  for (Parameter* p : generator.parameters()) out.push_back(p);
  return out;
}

Var EfaNet::encode(Graph& g, Var inputs, Var hidden) {
  Var x = activate(linear(g, inputs, encoder_fc), config_.encoder_activation);
  return gru_step(g, x, hidden, encoder_gru);
}

Var EfaNet::aggregate(Graph& g, Var h) {
  if (h.rows() < 2) return h;
  return multi_head_aggregate(g, h, heads);
}

Var EfaNet::logits(Graph& g, Var mfeat) { return ops::transpose(linear(g, mfeat, generator)); }

Tensor one_hot(std::optional<std::size_t> index, std::size_t n) {
  Tensor t({n});
  if (index) {
    if (*index >= n) throw ArgumentError("one_hot: index " + std::to_string(*index) + " >= " + std::to_string(n));
    t[*index] = 1.0;
  }
  return t;
}

Tensor encoder_inputs(std::span<const envs::Observation> obs,
                      std::span<const std::optional<std::size_t>> last_actions,
                      std::size_t n_actions) {
  if (obs.size() != last_actions.size() || obs.empty()) {
    throw DimensionError("encoder_inputs: " + std::to_string(obs.size()) + " observations vs " +
                         std::to_string(last_actions.size()) + " last actions");
  }
  const std::size_t d = obs.front().size();
  Tensor out({obs.size(), d + n_actions});
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].size() != d) {
      throw DimensionError("encoder_inputs: observation " + std::to_string(i) + " has length " +
                           std::to_string(obs[i].size()) + ", expected " + std::to_string(d));
    }
    std::copy(obs[i].begin(), obs[i].end(), &out(i, 0));
    if (last_actions[i]) {
      if (*last_actions[i] >= n_actions) throw ArgumentError("encoder_inputs: action out of range");
      out(i, d + *last_actions[i]) = 1.0;
    }
  }
  return out;
}

std::pair<Tensor, EncoderState> encode(EfaNet& net, std::span<const envs::Observation> obs,
                                       std::span<const std::optional<std::size_t>> last_actions,
                                       const EncoderState& state) {
  Tensor inputs = encoder_inputs(obs, last_actions, net.config().n_actions);
  if (inputs.cols() != net.encoder_fc.in_features()) {
    throw DimensionError("encode: inputs " + inputs.shape_string() + " vs encoder input width " +
                         std::to_string(net.encoder_fc.in_features()));
  }
  if (state.hidden.rows() != obs.size() || state.hidden.cols() != net.config().hidden) {
    throw DimensionError("encode: hidden " + state.hidden.shape_string() + " for " +
                         std::to_string(obs.size()) + " agents");
  }
  Graph g;
  Var h = net.encode(g, g.constant(std::move(inputs)), g.constant(state.hidden));
  Tensor out = h.value();
  return {out, EncoderState{out}};
}

Tensor aggregate(EfaNet& net, const Tensor& h) {
  Graph g;
  return net.aggregate(g, g.constant(h)).value();
}

ElectionWeights generate(EfaNet& net, const Tensor& mfeat, double beta, SeededRng& rng) {
  Graph g;
  GumbelSample s = gumbel_softmax(net.logits(g, g.constant(mfeat)), beta, rng);
  ElectionWeights w;
  w.soft = Tensor({s.soft.value().size()}, s.soft.value().values());
  w.hard = Tensor({s.hard.value().size()}, s.hard.value().values());
  w.noise = Tensor({s.noise.size()}, s.noise.values());
  w.elected = s.index;
  w.age = 0;
  return w;
}

ElectionWeights elect(EfaNet& net, std::span<const envs::Observation> obs,
                      std::span<const std::optional<std::size_t>> last_actions, int t,
                      const ElectionWeights* prev, EncoderState& state, SeededRng& rng) {
  if (t < 0) throw ArgumentError("elect: negative step index");
  auto [h, next] = encode(net, obs, last_actions, state);
  state = std::move(next);
  if (prev != nullptr && t % net.config().hold_k != 0) {
    ElectionWeights held = *prev;
    ++held.age;
    return held;
  }
  return generate(net, aggregate(net, h), net.config().beta, rng);
}

ElectionWeights fixed_election(std::size_t n_agents, std::size_t agent, int age) {
  ElectionWeights w;
  w.hard = one_hot(agent, n_agents);
  w.soft = w.hard;
  w.noise = Tensor({n_agents});
  w.elected = agent;
  w.age = age;
  return w;
}

envs::Observation first_move_observation(std::span<const envs::Observation> obs,
                                         const ElectionWeights& w) {
  if (w.hard.size() != obs.size()) {
    throw DimensionError("first_move_observation: " + std::to_string(obs.size()) +
                         " observations vs weights " + w.hard.shape_string());
  }
  envs::Observation out(obs.front().size(), 0.0);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (w.hard[i] == 0.0) continue;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w.hard[i] * obs[i][k];
  }
  return out;
}

Var first_move_observation(std::span<const Var> obs, Var weights) {
  if (obs.size() != weights.cols()) {
    throw DimensionError("first_move_observation: " + std::to_string(obs.size()) +
                         " observation blocks vs weights " + weights.value().shape_string());
  }
  Var acc = ops::mul_col(obs[0], ops::slice_cols(weights, 0, 1));
  for (std::size_t i = 1; i < obs.size(); ++i) {
    acc = acc + ops::mul_col(obs[i], ops::slice_cols(weights, i, 1));
  }
  return acc;
}

}  // namespace efa_marl::efa
