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

#include "efa_marl/envs/particle_world.hpp"

#include "efa_marl/numerics/tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <ostream>

namespace efa_marl::envs {

namespace {

Vec2 direction(Action a) {
  switch (a) {
    case Action::kUp: return {0.0, 1.0};
    case Action::kDown: return {0.0, -1.0};
    case Action::kLeft: return {-1.0, 0.0};
    case Action::kRight: return {1.0, 0.0};
    case Action::kStop: return {0.0, 0.0};
  }
  return {0.0, 0.0};
}

void push(Observation& o, const Vec2& v) {
  o.push_back(v.x());
  o.push_back(v.y());
}

}  // namespace

Scenario parse_scenario(std::string_view name) {
  if (name == "coop_nav") return Scenario::kCoopNav;
  if (name == "deception") return Scenario::kDeception;
  throw ArgumentError("unsupported scenario '" + std::string(name) +
                      "' (expected coop_nav or deception)");
}

std::string_view scenario_name(Scenario s) {
  return s == Scenario::kCoopNav ? "coop_nav" : "deception";
}

Action action_from_index(std::size_t index) {
  if (index >= kNumActions) {
    throw ArgumentError("action index " + std::to_string(index) + " out of range");
  }
  return static_cast<Action>(index);
}

std::size_t count_collisions(const WorldState& s, const WorldConstants& c) {
  const double limit = 2.0 * c.agent_radius;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.num_agents(); ++i) {
    for (std::size_t j = i + 1; j < s.num_agents(); ++j) {
      if ((s.agent_pos[i] - s.agent_pos[j]).norm() < limit) ++pairs;
    }
  }
  return pairs;
}

double reward_coop_nav(const WorldState& s, const WorldConstants& c) {
  double r = 0.0;
  for (const Vec2& l : s.landmark_pos) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const Vec2& p : s.agent_pos) nearest = std::min(nearest, (p - l).norm());
    r -= nearest;
  }
  return r - static_cast<double>(count_collisions(s, c));
}

DeceptionReward reward_deception(const WorldState& s) {
  if (s.target_index < 0 || s.num_agents() < 2) {
    throw ArgumentError("reward_deception: state has no target or no adversary");
  }
  const Vec2& target = s.landmark_pos[static_cast<std::size_t>(s.target_index)];
  const std::size_t adversary = s.num_agents() - 1;
  double nearest_good = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < adversary; ++i) {
    nearest_good = std::min(nearest_good, (s.agent_pos[i] - target).norm());
  }
  const double adv_dist = (s.agent_pos[adversary] - target).norm();
  return {-nearest_good + adv_dist, -adv_dist};
}

Observation observation_of(const WorldState& s, std::size_t agent) {
  if (agent >= s.num_agents()) {
    throw ArgumentError("observation_of: agent " + std::to_string(agent) + " out of range (" +
                        std::to_string(s.num_agents()) + " agents)");
  }
  const Vec2& self = s.agent_pos[agent];
  Observation o;
  o.reserve(4 + 2 * s.num_landmarks() + 2 * (s.num_agents() - 1));
  push(o, s.agent_vel[agent]);
  push(o, self);
  const bool target_first = s.scenario == Scenario::kDeception && s.target_index >= 0 &&
                            agent + 1 < s.num_agents();
  if (target_first) {
    const auto target = static_cast<std::size_t>(s.target_index);
    push(o, s.landmark_pos[target] - self);
    for (std::size_t l = 0; l < s.num_landmarks(); ++l) {
      if (l != target) push(o, s.landmark_pos[l] - self);
    }
  } else {
    for (const Vec2& l : s.landmark_pos) push(o, l - self);
  }
  for (std::size_t j = 0; j < s.num_agents(); ++j) {
    if (j != agent) push(o, s.agent_pos[j] - self);
  }
  return o;
}

ParticleWorld::ParticleWorld(Scenario scenario, std::size_t n_agents, WorldConstants constants)
    : scenario_(scenario), n_team_(n_agents), constants_(constants) {
  if (n_agents < 1) throw ArgumentError("ParticleWorld: n_agents must be >= 1");
}

std::size_t ParticleWorld::total_agents() const noexcept {
  return scenario_ == Scenario::kDeception ? n_team_ + 1 : n_team_;
}

std::size_t ParticleWorld::obs_dim() const noexcept {
  return 4 + 2 * num_landmarks() + 2 * (total_agents() - 1);
}

WorldState ParticleWorld::reset(SeededRng& rng) const {
  WorldState s;
  s.scenario = scenario_;
  const double a = constants_.spawn;
  for (std::size_t i = 0; i < total_agents(); ++i) {
    const double x = rng.uniform(-a, a);
    const double y = rng.uniform(-a, a);
    s.agent_pos.emplace_back(x, y);
    s.agent_vel.emplace_back(0.0, 0.0);
  }
  for (std::size_t l = 0; l < num_landmarks(); ++l) {
    const double x = rng.uniform(-a, a);
    const double y = rng.uniform(-a, a);
    s.landmark_pos.emplace_back(x, y);
  }
  if (scenario_ == Scenario::kDeception) {
    s.target_index = static_cast<int>(rng.index(num_landmarks()));
  }
  return s;
}

std::vector<Observation> ParticleWorld::observations(const WorldState& s) const {
  std::vector<Observation> out;
  out.reserve(s.num_agents());
  for (std::size_t i = 0; i < s.num_agents(); ++i) out.push_back(observation_of(s, i));
  return out;
}

StepResult ParticleWorld::step(WorldState& s, std::span<const Action> joint_action) const {
  if (joint_action.size() != s.num_agents()) {
    throw ArgumentError("step: expected " + std::to_string(s.num_agents()) + " actions, got " +
                        std::to_string(joint_action.size()));
  }
  if (s.t >= constants_.episode_length) throw ArgumentError("step: episode already finished");
  const WorldConstants& c = constants_;
  for (std::size_t i = 0; i < s.num_agents(); ++i) {
    const Vec2 accel = c.force * direction(joint_action[i]);
    s.agent_vel[i] = (1.0 - c.damping) * s.agent_vel[i] + accel * c.dt;
    s.agent_pos[i] += s.agent_vel[i] * c.dt;
    s.agent_pos[i] = s.agent_pos[i].cwiseMax(-c.arena).cwiseMin(c.arena);
  }
  ++s.t;
  StepResult r;
  r.collisions = count_collisions(s, c);
  if (scenario_ == Scenario::kCoopNav) {
    r.reward = reward_coop_nav(s, c);
  } else {
    const DeceptionReward d = reward_deception(s);
    r.reward = d.good;
    r.adversary_reward = d.adversary;
  }
  r.done = s.t == c.episode_length;
  r.observations = observations(s);
  return r;
}

void TrajectoryWriter::write(const WorldState& after, std::span<const Action> actions,
                             const StepResult& r) {
  nlohmann::ordered_json rec;
  rec["t"] = after.t;
  auto positions = nlohmann::ordered_json::array();
  for (const Vec2& p : after.agent_pos) positions.push_back({p.x(), p.y()});
  rec["positions"] = std::move(positions);
  auto acts = nlohmann::ordered_json::array();
  for (Action a : actions) acts.push_back(static_cast<std::size_t>(a));
  rec["actions"] = std::move(acts);
  rec["reward"] = r.reward;
  rec["adversary_reward"] = r.adversary_reward;
  rec["done"] = r.done;
  out_ << rec.dump() << '\n';
}

}  // namespace efa_marl::envs
