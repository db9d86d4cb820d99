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
#include "efa_marl/numerics/graph.hpp"
#include "efa_marl/numerics/rng.hpp"
#include "efa_marl/qlearn/learner.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace efa_marl::test {

inline Tensor random_tensor(std::vector<std::size_t> shape, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

inline void zero_all(std::vector<Parameter*> params) {
  for (Parameter* p : params) p->value.fill(0.0);
}

inline qlearn::Hyperparams toy_hyperparams() {
  qlearn::Hyperparams hp;
  hp.hidden = 8;
  hp.heads = 2;
  hp.hold_k = 3;
  hp.batch_episodes = 3;
  hp.buffer_capacity = 10;
  return hp;
}

inline qlearn::LearnerConfig toy_learner_config(qlearn::Variant v = qlearn::Variant::kEfaDqn, std::size_t n = 2) {
  qlearn::LearnerConfig lc;
  lc.n_agents = n;
  lc.obs_dim = envs::ParticleWorld(envs::Scenario::kCoopNav, n).obs_dim();
  lc.variant = v;
  lc.hp = toy_hyperparams();
  return lc;
}

/// Episode as collected by the trainer, plus the Q-values seen while acting.
struct Collected {
  qlearn::Episode episode;
  std::vector<std::vector<Tensor>> q;  ///< per step, per agent
};

inline std::vector<Collected> collect(qlearn::Learner& learner, std::size_t count, int length, std::uint64_t seed,
                                      double epsilon = 0.5) {
  envs::WorldConstants wc;
  wc.episode_length = length;
  const envs::ParticleWorld world(envs::Scenario::kCoopNav, learner.n_agents(), wc);
  SeededRng env(seed, Stream::kEnv);
  SeededRng elect(seed, Stream::kElection);
  SeededRng explore(seed, Stream::kExploration);
  std::vector<Collected> out;
  for (std::size_t e = 0; e < count; ++e) {
    envs::WorldState s = world.reset(env);
    auto obs = world.observations(s);
    auto es = learner.begin_episode();
    Collected c;
    bool done = false;
    while (!done) {
      auto d = learner.act(es, obs, epsilon, elect, explore);
      std::vector<envs::Action> acts;
      for (std::size_t a : d.actions) acts.push_back(envs::action_from_index(a));
      auto r = world.step(s, acts);
      qlearn::Transition tr;
      const std::size_t n = obs.size();
      const std::size_t dim = obs.front().size();
      tr.obs = Tensor({n, dim});
      tr.next_obs = Tensor({n, dim});
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(obs[i].begin(), obs[i].end(), &tr.obs(i, 0));
        std::copy(r.observations[i].begin(), r.observations[i].end(), &tr.next_obs(i, 0));
      }
      tr.actions = d.actions;
      tr.reward = r.reward;
      tr.done = r.done;
      tr.election = d.election.hard;
      tr.elected = d.election.elected;
      tr.election_step = d.election_step;
      tr.gumbel_noise = d.election.noise;
      c.episode.steps.push_back(std::move(tr));
      c.q.push_back(d.q);
      done = r.done;
      obs = std::move(r.observations);
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<const qlearn::Episode*> batch_of(const std::vector<Collected>& eps) {
  std::vector<const qlearn::Episode*> b;
  for (const auto& c : eps) b.push_back(&c.episode);
  return b;
}

/// Fresh scratch directory removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(std::random_device{}()))) {
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace efa_marl::test
