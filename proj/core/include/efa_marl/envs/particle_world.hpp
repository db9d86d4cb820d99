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

#include "efa_marl/numerics/rng.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace efa_marl::envs {

enum class Scenario { kCoopNav, kDeception };

/// Accepts "coop_nav" and "deception"; throws ArgumentError otherwise.
Scenario parse_scenario(std::string_view name);
std::string_view scenario_name(Scenario s);

/// Discrete moves. Index order is part of the observation/action contract.
enum class Action : std::size_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStop = 4 };
inline constexpr std::size_t kNumActions = 5;

Action action_from_index(std::size_t index);

/// Physical constants of the particle world.
struct WorldConstants {
  double dt = 0.1;
  double damping = 0.25;
  double force = 5.0;
  double agent_radius = 0.15;
  double landmark_radius = 0.05;
  int episode_length = 25;
  double arena = 1.5;  ///< positions are clamped to [-arena, arena]^2
  double spawn = 1.0;  ///< reset draws positions uniformly on [-spawn, spawn]^2
};

using Vec2 = Eigen::Vector2d;
using Observation = std::vector<double>;

/// Snapshot of the world. In Physical Deception the adversary is the last
/// agent and `target_index` names the goal landmark; otherwise it is -1.
struct WorldState {
  Scenario scenario = Scenario::kCoopNav;
  std::vector<Vec2> agent_pos;
  std::vector<Vec2> agent_vel;
  std::vector<Vec2> landmark_pos;
  int target_index = -1;
  int t = 0;

  std::size_t num_agents() const { return agent_pos.size(); }
  std::size_t num_landmarks() const { return landmark_pos.size(); }
};

struct StepResult {
  std::vector<Observation> observations;
  double reward = 0.0;            ///< shared team reward (good team in Deception)
  double adversary_reward = 0.0;  ///< Deception only
  std::size_t collisions = 0;     ///< colliding pairs after the move
  bool done = false;
};

/// Shared coop-nav reward: -(sum over landmarks of the nearest-agent
/// distance) - (number of colliding agent pairs).
double reward_coop_nav(const WorldState& s, const WorldConstants& c = {});
std::size_t count_collisions(const WorldState& s, const WorldConstants& c = {});

struct DeceptionReward {
  double good = 0.0;
  double adversary = 0.0;
};

/// good = -min_i dist(good_i, target) + dist(adversary, target),
/// adversary = -dist(adversary, target).
DeceptionReward reward_deception(const WorldState& s);

/// Layout: own velocity (2), own position (2), landmark displacements (2L),
/// other-agent displacements (2(n-1), index order skipping self).
///
/// In Deception good agents list the target landmark first and the rest in
/// index order; the adversary lists landmarks in index order and so never
/// learns which one is the target. Throws ArgumentError for a bad index.
Observation observation_of(const WorldState& s, std::size_t agent);

/// Simulator for one scenario. `n_agents` counts the controlled team: all
/// agents in coop_nav, the good agents in Deception (one adversary is added).
class ParticleWorld {
 public:
  ParticleWorld(Scenario scenario, std::size_t n_agents, WorldConstants constants = {});

  Scenario scenario() const noexcept { return scenario_; }
  const WorldConstants& constants() const noexcept { return constants_; }
  std::size_t team_size() const noexcept { return n_team_; }
  std::size_t total_agents() const noexcept;
  std::size_t num_landmarks() const noexcept { return n_team_; }
  std::size_t obs_dim() const noexcept;

  /// Uniform agent and landmark placement, zero velocities. Deception also
  /// draws the target uniformly.
  WorldState reset(SeededRng& rng) const;
  std::vector<Observation> observations(const WorldState& s) const;

  /// Advances one step: v <- (1 - damping) v + force * dir * dt,
  /// p <- clamp(p + v dt). Throws ArgumentError on a wrong action count.
  StepResult step(WorldState& s, std::span<const Action> joint_action) const;

 private:
  Scenario scenario_;
  std::size_t n_team_;
  WorldConstants constants_;
};

/// Writes one JSON object per step with a fixed field order:
///   {"t", "positions", "actions", "reward", "adversary_reward", "done"}
class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(std::ostream& out) : out_(out) {}
  void write(const WorldState& after, std::span<const Action> actions, const StepResult& r);

 private:
  std::ostream& out_;
};

}  // namespace efa_marl::envs
