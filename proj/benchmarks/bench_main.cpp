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

// Microbenchmarks for the hot paths of one training iteration.

#include "efa_marl/efa/election.hpp"
#include "efa_marl/envs/particle_world.hpp"
#include "efa_marl/numerics/layers.hpp"
#include "efa_marl/qlearn/learner.hpp"

#include <benchmark/benchmark.h>

#include <algorithm>

namespace {

using namespace efa_marl;

Tensor random_tensor(std::vector<std::size_t> shape, SeededRng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_GruStepForwardBackward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  SeededRng rng(1, 1);
  GruParams p("gru", 64, 64, rng);
  const Tensor x = random_tensor({rows, 64}, rng);
  const Tensor h = random_tensor({rows, 64}, rng);
  for (auto _ : state) {
    Graph g;
    g.backward(ops::sum(gru_step(g, g.constant(x), g.constant(h), p)));
  }
  for (Parameter* q : p.parameters()) benchmark::DoNotOptimize(q->grad.data().data());
}
BENCHMARK(BM_GruStepForwardBackward)->Arg(1)->Arg(30)->Arg(90);

void BM_MultiHeadAggregate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(2, 1);
  std::vector<Parameter> heads;
  for (int m = 0; m < 4; ++m) heads.emplace_back("w", random_tensor({64, 16}, rng));
  const Tensor h = random_tensor({n, 64}, rng);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(multi_head_aggregate(g, g.constant(h), heads).value().data().data());
  }
}
BENCHMARK(BM_MultiHeadAggregate)->Arg(2)->Arg(4)->Arg(8);

void BM_Election(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const envs::ParticleWorld world(envs::Scenario::kCoopNav, n);
  efa::EfaConfig cfg;
  cfg.obs_dim = world.obs_dim();
  SeededRng init(3, Stream::kInit), env(3, Stream::kEnv), rng(3, Stream::kElection);
  efa::EfaNet net(cfg, init);
  const auto obs = world.observations(world.reset(env));
  const std::vector<std::optional<std::size_t>> last(n, std::nullopt);
  for (auto _ : state) {
    efa::EncoderState st = efa::EncoderState::zeros(n, cfg.hidden);
    benchmark::DoNotOptimize(efa::elect(net, obs, last, 0, nullptr, st, rng).elected);
  }
}
BENCHMARK(BM_Election)->Arg(2)->Arg(4);

void BM_EnvStep(benchmark::State& state) {
  const envs::ParticleWorld world(envs::Scenario::kCoopNav, 3);
  SeededRng env(4, Stream::kEnv);
  envs::WorldState s = world.reset(env);
  const std::vector<envs::Action> acts = {envs::Action::kUp, envs::Action::kLeft, envs::Action::kStop};
  for (auto _ : state) {
    if (s.t >= world.constants().episode_length) s = world.reset(env);
    benchmark::DoNotOptimize(world.step(s, acts).reward);
  }
}
BENCHMARK(BM_EnvStep);

std::vector<qlearn::Episode> collect(qlearn::Learner& learner, std::size_t count) {
  const envs::ParticleWorld world(envs::Scenario::kCoopNav, learner.n_agents());
  SeededRng env(5, Stream::kEnv), elect(5, Stream::kElection), explore(5, Stream::kExploration);
  std::vector<qlearn::Episode> out;
  for (std::size_t e = 0; e < count; ++e) {
    envs::WorldState s = world.reset(env);
    auto obs = world.observations(s);
    auto es = learner.begin_episode();
    qlearn::Episode ep;
    bool done = false;
    while (!done) {
      auto d = learner.act(es, obs, 0.5, elect, explore);
      std::vector<envs::Action> acts;
      for (std::size_t a : d.actions) acts.push_back(envs::action_from_index(a));
      auto r = world.step(s, acts);
      qlearn::Transition tr;
      const std::size_t n = obs.size(), dim = obs.front().size();
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
      ep.steps.push_back(std::move(tr));
      done = r.done;
      obs = std::move(r.observations);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

// One full optimizer step at the published sizes (batch 30 episodes x 25 steps).
void BM_LearnerUpdate(benchmark::State& state) {
  qlearn::LearnerConfig lc;
  lc.n_agents = static_cast<std::size_t>(state.range(0));
  lc.obs_dim = envs::ParticleWorld(envs::Scenario::kCoopNav, lc.n_agents).obs_dim();
  qlearn::Learner learner(lc, 6);
  const auto eps = collect(learner, lc.hp.batch_episodes);
  std::vector<const qlearn::Episode*> batch;
  for (const auto& e : eps) batch.push_back(&e);
  for (auto _ : state) benchmark::DoNotOptimize(learner.update(batch).loss);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_LearnerUpdate)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Act(benchmark::State& state) {
  qlearn::LearnerConfig lc;
  lc.n_agents = 2;
  lc.obs_dim = envs::ParticleWorld(envs::Scenario::kCoopNav, 2).obs_dim();
  qlearn::Learner learner(lc, 7);
  const envs::ParticleWorld world(envs::Scenario::kCoopNav, 2);
  SeededRng env(7, Stream::kEnv), elect(7, Stream::kElection), explore(7, Stream::kExploration);
  const auto obs = world.observations(world.reset(env));
  auto es = learner.begin_episode();
  for (auto _ : state) benchmark::DoNotOptimize(learner.act(es, obs, 0.1, elect, explore).actions.data());
}
BENCHMARK(BM_Act);

}  // namespace

BENCHMARK_MAIN();
