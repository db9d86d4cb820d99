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

#include "efa_marl/qlearn/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace efa_marl::qlearn {

using nlohmann::ordered_json;

namespace {

ordered_json tensor_to_json(const Tensor& t) {
  return ordered_json{{"shape", t.shape()}, {"data", t.values()}};
}

Tensor tensor_from_json(const ordered_json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(), j.at("data").get<std::vector<double>>());
}

}  // namespace

void capture(Learner& learner, const std::string& role, Checkpoint& ckpt) {
  for (Parameter* p : learner.all_parameters()) {
    ckpt.tensors[role + "/" + p->name] = p->value;
    ckpt.tensors[role + "/" + p->name + "#rms"] = p->step_state;
  }
  ckpt.counters[role] = {learner.optimizer_steps(), learner.sync_count(), learner.alpha()};
}

void restore(Learner& learner, const std::string& role, const Checkpoint& ckpt) {
  auto fetch = [&](const std::string& key, const Tensor& like) -> const Tensor& {
    auto it = ckpt.tensors.find(key);
    if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint lacks tensor '" + key + "'");
    if (!it->second.same_shape(like)) {
      throw CheckpointError("checkpoint tensor '" + key + "' has shape " + it->second.shape_string() +
                            ", expected " + like.shape_string());
    }
    return it->second;
  };
  for (Parameter* p : learner.all_parameters()) {
    p->value = fetch(role + "/" + p->name, p->value);
    p->step_state = fetch(role + "/" + p->name + "#rms", p->step_state);
    p->zero_grad();
  }
  auto it = ckpt.counters.find(role);
  if (it == ckpt.counters.end()) throw CheckpointError("checkpoint lacks counters for '" + role + "'");
  learner.set_optimizer_steps(it->second.optimizer_steps);
  learner.set_sync_count(it->second.sync_count);
  learner.set_alpha(it->second.alpha);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = ckpt.version;
  j["scenario"] = ckpt.scenario;
  j["variant"] = ckpt.variant;
  j["n_agents"] = ckpt.n_agents;
  j["seed"] = ckpt.seed;
  j["episodes"] = ckpt.episodes;
  j["env_steps"] = ckpt.env_steps;
  ordered_json hp = ordered_json::object();
  for (const auto& [k, v] : hyperparam_fields(ckpt.hp)) hp[k] = v;
  j["hyperparams"] = std::move(hp);
  ordered_json counters = ordered_json::object();
  for (const auto& [role, c] : ckpt.counters) {
    counters[role] = {{"optimizer_steps", c.optimizer_steps}, {"sync_count", c.sync_count}, {"alpha", c.alpha}};
  }
  j["counters"] = std::move(counters);
  ordered_json tensors = ordered_json::object();
  for (const auto& [name, t] : ckpt.tensors) tensors[name] = tensor_to_json(t);
  j["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out << j.dump() << '\n';
  if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint '" + path.string() + "': " + e.what());
  }
  Checkpoint c;
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw CheckpointError("'" + path.string() + "' is not a checkpoint");
    }
    c.version = j.at("version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(c.version) + " unsupported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    c.scenario = j.at("scenario").get<std::string>();
    c.variant = j.at("variant").get<std::string>();
    c.n_agents = j.at("n_agents").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.episodes = j.at("episodes").get<std::int64_t>();
    c.env_steps = j.at("env_steps").get<std::int64_t>();
    for (const auto& [k, v] : j.at("hyperparams").items()) {
      if (!set_hyperparam(c.hp, k, v.get<std::string>())) {
        throw CheckpointError("checkpoint has unknown hyperparameter '" + k + "'");
      }
    }
    for (const auto& [role, v] : j.at("counters").items()) {
      c.counters[role] = {v.at("optimizer_steps").get<std::int64_t>(), v.at("sync_count").get<std::int64_t>(),
                          v.at("alpha").get<double>()};
    }
    for (const auto& [name, v] : j.at("tensors").items()) c.tensors[name] = tensor_from_json(v);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint '" + path.string() + "': " + e.what());
  } catch (const ArgumentError& e) {
    throw CheckpointError("malformed checkpoint '" + path.string() + "': " + e.what());
  }
  return c;
}

}  // namespace efa_marl::qlearn
