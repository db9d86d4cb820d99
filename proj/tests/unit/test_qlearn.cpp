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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "efa_marl/qlearn/checkpoint.hpp"
#include "efa_marl/qlearn/learner.hpp"
#include "efa_marl/qlearn/qnet.hpp"
#include "efa_marl/qlearn/replay.hpp"
#include "support.hpp"

#include <cmath>
#include <set>
#include <vector>

using namespace efa_marl;
using namespace efa_marl::qlearn;
using efa_marl::test::batch_of;
using efa_marl::test::collect;
using efa_marl::test::random_tensor;
using efa_marl::test::toy_learner_config;

namespace {

Tensor critic_out(CentralCritic& c, const Tensor& in) {
  Graph g;
  g.set_frozen(true);
  return c.forward(g, g.constant(in)).value();
}

Tensor qnet_out(AgentQNet& net, const Tensor& obs, const Tensor& hidden) {
  Graph g;
  g.set_frozen(true);
  return net.forward(g, g.constant(obs), g.constant(hidden)).q.value();
}

}  // namespace

TEST_CASE("agent q-network") {
  SeededRng init(1, Stream::kInit), rng(2, 1);
  AgentQNet net("q", 6, 8, envs::kNumActions, init);
  const envs::Observation obs = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
  SUBCASE("zero parameters give zero q") {
    for (Parameter* p : net.parameters()) p->value.fill(0.0);
    const auto [q, h] = q_values(net, obs, Tensor({1, 8}));
    CHECK(q == Tensor::vector({0, 0, 0, 0, 0}));
  }
  SUBCASE("deterministic") {
    const Tensor h0 = random_tensor({1, 8}, rng);
    CHECK(q_values(net, obs, h0).first == q_values(net, obs, h0).first);
  }
  SUBCASE("matches layer-by-layer evaluation") {
    const Tensor h0 = random_tensor({1, 8}, rng);
    Graph g;
    Var x = ops::relu(linear(g, g.constant(Tensor::vector(obs)), net.fc_in));
    Var h = gru_step(g, x, g.constant(h0), net.gru);
    const Tensor ref = linear(g, h, net.fc_out).value();
    const Tensor q = q_values(net, obs, h0).first;
    for (std::size_t a = 0; a < envs::kNumActions; ++a) CHECK(q[a] == doctest::Approx(ref[a]).epsilon(1e-14));
  }
}

TEST_CASE("action selection") {
  SeededRng rng(3, Stream::kExploration);
  const std::vector<double> q = {1, 3, 2, 0, 0};
  CHECK(select_action(q, 0.0, rng) == 1);
  const std::vector<double> tie = {2, 2, 0, 0, 0};
  CHECK(select_action(tie, 0.0, rng) == 0);
  CHECK(greedy_action(tie) == 0);
  std::vector<double> freq(5, 0.0);
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) freq[select_action(q, 1.0, rng)] += 1.0 / kDraws;
  for (double f : freq) CHECK(std::abs(f - 0.2) <= 0.01);
}

TEST_CASE("mixing, targets and weights") {
  CHECK(mix(std::vector<double>{1, 2, 3}) == 6.0);
  CHECK(mix(std::vector<double>{0, 0}) == 0.0);

  CHECK(td_target(-3.0, true, 100.0, 0.99) == -3.0);
  CHECK(td_target(0.0, false, 10.0, 0.99) == doctest::Approx(9.9).epsilon(1e-15));
  CHECK(td_target(1.5, false, 10.0, 0.0) == 1.5);

  CHECK(weighting(5, 6, 0.5) == 1.0);
  CHECK(weighting(6, 5, 0.5) == 0.5);
  CHECK(weighting(5, 5, 0.5) == 0.5);

  CHECK(update_alpha(std::vector<double>{1, 1, 1}) == 1.0);
  CHECK(update_alpha(std::vector<double>{1, 1, 0.5, 0.5}) == 0.75);
  CHECK(update_alpha(std::vector<double>{0.3, 0.3}) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(update_alpha(std::vector<double>{}), ArgumentError);
}

TEST_CASE("counterfactual advantage") {
  const std::vector<double> constant = {2, 2, 2, 2, 2};
  const std::vector<double> pi = {0.1, 0.2, 0.3, 0.2, 0.2};
  CHECK(counterfactual_advantage(constant, 3, pi) == doctest::Approx(0.0));
  const std::vector<double> q = {1, 5, -2, 0, 4};
  const std::vector<double> det = {0, 1, 0, 0, 0};
  CHECK(counterfactual_advantage(q, 1, det) == 0.0);
  const std::vector<double> three = {1, 2, 3};
  const std::vector<double> uniform(3, 1.0 / 3.0);
  CHECK(counterfactual_advantage(three, 2, uniform) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("epsilon schedule") {
  CHECK(epsilon_at(0) == 0.2);
  CHECK(epsilon_at(25000) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(epsilon_at(50000) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(epsilon_at(900000) == doctest::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("hyperparameters") {
  Hyperparams hp;
  CHECK_NOTHROW(hp.validate());
  CHECK(set_hyperparam(hp, "lr", "0.001"));
  CHECK(hp.lr == 0.001);
  CHECK_FALSE(set_hyperparam(hp, "learning_rate", "1"));
  CHECK_THROWS_WITH_AS(set_hyperparam(hp, "hidden", "many"), doctest::Contains("hidden"), ArgumentError);
  hp.gamma = 1.5;
  CHECK_THROWS_WITH_AS(hp.validate(), doctest::Contains("gamma"), ArgumentError);
  Hyperparams back;
  for (const auto& [k, v] : hyperparam_fields(hp)) set_hyperparam(back, k, v);
  CHECK(back.gamma == hp.gamma);
  CHECK(format_double(0.1) == "0.1");
  CHECK(parse_double(format_double(1.0 / 3.0), "x") == 1.0 / 3.0);
}

TEST_CASE("replay buffer") {
  qlearn::Learner learner(toy_learner_config(), 1);
  auto eps = collect(learner, 4, 3, 7);
  ReplayBuffer buf(3);
  for (auto& c : eps) buf.add(c.episode);
  CHECK(buf.size() == 3);
  CHECK(buf.at(0).steps.front().reward == eps[1].episode.steps.front().reward);  // oldest evicted
  SeededRng rng(1, Stream::kReplay);
  const auto s = buf.sample(3, rng);
  CHECK(std::set<const Episode*>(s.begin(), s.end()).size() == 3);
  CHECK_THROWS(buf.sample(4, rng));
  Episode partial = eps[0].episode;
  partial.steps.back().done = false;
  CHECK_THROWS_AS(buf.add(partial), ArgumentError);
}

TEST_CASE("replayed q-values equal the acting q-values") {
  Learner learner(toy_learner_config(), 2);
  const auto eps = collect(learner, 3, 6, 11);
  for (std::size_t i = 0; i < learner.n_agents(); ++i) {
    // One batched replay over all episodes, as the learner does.
    Tensor h({eps.size(), learner.config().hp.hidden});
    for (std::size_t t = 0; t < eps[0].episode.length(); ++t) {
      Tensor obs({eps.size(), learner.config().obs_dim});
      for (std::size_t b = 0; b < eps.size(); ++b)
        for (std::size_t c = 0; c < obs.cols(); ++c) obs(b, c) = eps[b].episode.steps[t].obs(i, c);
      Graph g;
      g.set_frozen(true);
      auto out = learner.qnets()[i].forward(g, g.constant(obs), g.constant(h));
      for (std::size_t b = 0; b < eps.size(); ++b)
        for (std::size_t a = 0; a < envs::kNumActions; ++a)
          CHECK(out.q.value()(b, a) == doctest::Approx(eps[b].q[t][i][a]).epsilon(1e-12));
      h = out.hidden.value();
    }
  }
}

TEST_CASE("training loss") {
  SUBCASE("no regularizer and unit weights reduce to summed squared TD") {
    auto lc = toy_learner_config(Variant::kEfaNaive);
    lc.hp.alpha0 = 1.0;
    lc.hp.lambda_cf = 0.0;
    Learner learner(lc, 3);
    const auto eps = collect(learner, 3, 6, 5);
    const auto batch = batch_of(eps);
    LossParts parts, vparts;
    Graph g, gv;
    const double l = learner.loss(g, batch, &parts).value()[0];
    const double lv = learner.vdn_loss(gv, batch, &vparts).value()[0];
    CHECK(l == doctest::Approx(lv).epsilon(1e-12));
    CHECK(parts.regularizer == 0.0);
    for (double w : parts.weights) CHECK(w == 1.0);
  }
  SUBCASE("exact targets and zero advantages give zero loss") {
    Learner learner(toy_learner_config(), 4);
    auto eps = collect(learner, 3, 6, 6);
    test::zero_all(learner.all_parameters());
    for (auto& c : eps)
      for (auto& tr : c.episode.steps) tr.reward = 0.0;
    Graph g;
    CHECK(learner.loss(g, batch_of(eps)).value()[0] == 0.0);
  }
  SUBCASE("weights take only the values 1 and alpha") {
    auto lc = toy_learner_config();
    lc.hp.alpha0 = 0.3;
    Learner learner(lc, 5);
    SeededRng rng(1, 9);
    for (auto& net : learner.target_qnets())
      for (Parameter* p : net.parameters()) p->value = random_tensor(p->value.shape(), rng);
    const auto eps = collect(learner, 3, 6, 8);
    LossParts parts;
    Graph g;
    learner.loss(g, batch_of(eps), &parts);
    REQUIRE(parts.weights.size() == 18);
    for (double w : parts.weights) CHECK((w == 1.0 || w == 0.3));
  }
  SUBCASE("the counterfactual term leaves non-elected agents' nets alone") {
    // Same seed, same parameters; only lambda_cf differs.
    auto grads = [](double lambda) {
      auto lc = toy_learner_config();
      lc.fixed_election = true;
      lc.hp.lambda_cf = lambda;
      Learner learner(lc, 6);
      const auto eps = collect(learner, 3, 6, 9);
      std::vector<double> pinned(18);
      SeededRng rng(3, 1);
      for (double& a : pinned) a = rng.uniform(-1, 1);
      learner.pin_advantages(pinned);
      for (Parameter* p : learner.trainable_parameters()) p->zero_grad();
      Graph g;
      g.backward(learner.loss(g, batch_of(eps)));
      std::vector<double> first, second;
      for (Parameter* p : learner.qnets()[0].parameters())
        for (double v : p->grad.data()) first.push_back(v);
      for (Parameter* p : learner.qnets()[1].parameters())
        for (double v : p->grad.data()) second.push_back(v);
      return std::pair{first, second};
    };
    const auto [with0, with1] = grads(1.0);
    const auto [without0, without1] = grads(0.0);
    REQUIRE(with1.size() == without1.size());
    for (std::size_t k = 0; k < with1.size(); ++k) CHECK(with1[k] == doctest::Approx(without1[k]).epsilon(1e-12));
    CHECK_FALSE(with0 == without0);  // the elected agent does feel it
  }
}

TEST_CASE("critic") {
  SUBCASE("gamma 0 regresses onto the reward") {
    auto lc = toy_learner_config();
    lc.hp.gamma = 0.0;
    Learner learner(lc, 7);
    const auto eps = collect(learner, 2, 5, 12);
    test::zero_all(learner.critic().parameters());
    double ref = 0.0;
    for (const auto& c : eps)
      for (const auto& tr : c.episode.steps) ref += tr.reward * tr.reward;
    Graph g;
    CHECK(learner.critic_loss(g, batch_of(eps)).value()[0] == doctest::Approx(ref).epsilon(1e-13));
  }
  SUBCASE("a critic satisfying the Bellman identity has zero loss") {
    auto lc = toy_learner_config();
    lc.hp.gamma = 0.5;
    Learner learner(lc, 8);
    auto eps = collect(learner, 1, 2, 13);
    // Constant output 1 everywhere: r0 + 0.5 * 1 = 1 and r1 = 1 at the terminal step.
    for (CentralCritic* c : {&learner.critic(), &learner.target_critic()}) {
      test::zero_all(c->parameters());
      c->l3.bias.value.fill(1.0);
    }
    eps[0].episode.steps[0].reward = 0.5;
    eps[0].episode.steps[1].reward = 1.0;
    Graph g;
    CHECK(learner.critic_loss(g, batch_of(eps)).value()[0] == 0.0);
  }
  SUBCASE("syncing the target leaves the online critic unchanged") {
    Learner learner(toy_learner_config(), 9);
    SeededRng rng(4, 1);
    const Tensor in = random_tensor({3, learner.critic().input_size()}, rng);
    const Tensor before = critic_out(learner.critic(), in);
    learner.sync_targets();
    CHECK(critic_out(learner.critic(), in) == before);
    CHECK(critic_out(learner.target_critic(), in) == before);
  }
}

TEST_CASE("target networks") {
  Learner learner(toy_learner_config(), 10);
  SeededRng rng(5, 1);
  const Tensor obs = random_tensor({4, learner.config().obs_dim}, rng);
  const Tensor h = random_tensor({4, learner.config().hp.hidden}, rng);
  SUBCASE("equal to online right after a sync") {
    const auto eps = collect(learner, 3, 4, 14);
    learner.update(batch_of(eps));
    learner.sync_targets();
    for (std::size_t i = 0; i < learner.n_agents(); ++i)
      CHECK(qnet_out(learner.qnets()[i], obs, h) == qnet_out(learner.target_qnets()[i], obs, h));
  }
  SUBCASE("constant between syncs") {
    const auto eps = collect(learner, 3, 4, 15);
    const Tensor before = qnet_out(learner.target_qnets()[0], obs, h);
    const Tensor online_before = qnet_out(learner.qnets()[0], obs, h);
    for (int k = 0; k < 3; ++k) CHECK_FALSE(learner.update(batch_of(eps)).synced);
    CHECK(qnet_out(learner.target_qnets()[0], obs, h) == before);
    CHECK_FALSE(qnet_out(learner.qnets()[0], obs, h) == online_before);
  }
  SUBCASE("1000 optimizer steps sync five times") {
    int syncs = 0;
    for (std::int64_t s = 1; s <= 1000; ++s)
      if (learner.sync_targets_if_due(s)) ++syncs;
    CHECK(syncs == 5);
    CHECK_FALSE(learner.sync_targets_if_due(0));
  }
}

TEST_CASE("dynamic alpha") {
  auto lc = toy_learner_config();
  lc.hp.alpha0 = 0.4;
  Learner learner(lc, 11);
  const auto eps = collect(learner, 3, 6, 16);
  for (int k = 0; k < 5; ++k) {
    LossParts parts;
    {
      Graph g;
      learner.loss(g, batch_of(eps), &parts);
    }
    double mean = 0.0;
    for (double w : parts.weights) mean += w;
    mean /= static_cast<double>(parts.weights.size());
    const UpdateStats st = learner.update(batch_of(eps));
    CHECK(st.alpha_next == doctest::Approx(mean).epsilon(1e-12));
    CHECK(learner.alpha() > 0.0);
    CHECK(learner.alpha() <= 1.0);
  }
  Learner naive(toy_learner_config(Variant::kEfaNaive), 12);
  naive.update(batch_of(eps));
  CHECK(naive.alpha() == 1.0);
}

TEST_CASE("checkpoint round trip") {
  test::ScratchDir dir("efa_marl_ckpt");
  Learner learner(toy_learner_config(), 13);
  const auto eps = collect(learner, 3, 4, 17);
  learner.update(batch_of(eps));
  learner.update(batch_of(eps));
  Checkpoint ckpt;
  ckpt.scenario = "coop_nav";
  ckpt.variant = "efa-dqn";
  ckpt.n_agents = 2;
  ckpt.seed = 13;
  ckpt.episodes = 3;
  ckpt.hp = learner.config().hp;
  capture(learner, "team", ckpt);
  save_checkpoint(dir.path() / "c.json", ckpt);
  const Checkpoint back = load_checkpoint(dir.path() / "c.json");
  CHECK(back.tensors.size() == ckpt.tensors.size());
  for (const auto& [k, t] : ckpt.tensors) CHECK(back.tensors.at(k) == t);

  Learner fresh(toy_learner_config(), 99);
  restore(fresh, "team", back);
  auto a = learner.all_parameters(), b = fresh.all_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k]->value == b[k]->value);
    CHECK(a[k]->step_state == b[k]->step_state);
  }
  CHECK(fresh.alpha() == learner.alpha());
  CHECK(fresh.optimizer_steps() == 2);

  ckpt.version = kCheckpointVersion + 1;
  save_checkpoint(dir.path() / "future.json", ckpt);
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "future.json"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing.json"), CheckpointError);
}
