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

#include "efa_marl/trainer/trainer.hpp"
#include "support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace efa_marl;
using namespace efa_marl::trainer;
namespace fs = std::filesystem;

namespace {

RunConfig toy_run(std::int64_t episodes, std::uint64_t seed = 0) {
  RunConfig c;
  c.total_episodes = episodes;
  c.seed = seed;
  c.hp = test::toy_hyperparams();
  c.eval_every = 0;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(envs::Action a) : a_(a) {}
  std::vector<std::size_t> act(const envs::WorldState& s, std::span<const envs::Observation>) override {
    return std::vector<std::size_t>(s.num_agents(), static_cast<std::size_t>(a_));
  }

 private:
  envs::Action a_;
};

// Agent i heads for landmark i along the larger displacement axis.
class CoveragePolicy : public Policy {
 public:
  std::vector<std::size_t> act(const envs::WorldState& s, std::span<const envs::Observation>) override {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < s.num_agents(); ++i) {
      const envs::Vec2 d = s.landmark_pos[i] - s.agent_pos[i] - 0.4 * s.agent_vel[i];
      envs::Action a = envs::Action::kStop;
      if (d.norm() > 0.02) {
        if (std::abs(d.x()) > std::abs(d.y())) a = d.x() > 0 ? envs::Action::kRight : envs::Action::kLeft;
        else a = d.y() > 0 ? envs::Action::kUp : envs::Action::kDown;
      }
      out.push_back(static_cast<std::size_t>(a));
    }
    return out;
  }
};

}  // namespace

TEST_CASE("run config") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(set_config_field(c, "seed", "7"));
  CHECK(c.seed == 7);
  CHECK(set_config_field(c, "variant", "vdn"));
  CHECK(c.variant == qlearn::Variant::kVdn);
  CHECK(set_config_field(c, "gamma", "0.9"));
  CHECK(c.hp.gamma == 0.9);
  CHECK_FALSE(set_config_field(c, "colour", "blue"));
  CHECK_THROWS_WITH_AS(set_config_field(c, "n_agents", "two"), doctest::Contains("n_agents"), ArgumentError);
  RunConfig back;
  for (const auto& [k, v] : config_fields(c)) CHECK(set_config_field(back, k, v));
  CHECK(config_text(back) == config_text(c));
  c.total_episodes = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("total_episodes"), ArgumentError);
}

TEST_CASE("metrics records") {
  MetricsRecord r;
  r.episode = 3;
  r.reward = -1.5;
  r.wall_ms = 12.0;
  const std::string line = to_jsonl(r);
  CHECK(line.rfind("{\"episode\":3,\"reward\":-1.5", 0) == 0);
  CHECK(line.find("wall") == std::string::npos);
  CHECK(line.find('\n') == std::string::npos);
  std::vector<MetricsRecord> rs(150);
  for (std::size_t i = 0; i < rs.size(); ++i) rs[i].reward = static_cast<double>(i + 1);
  CHECK(final_mean(rs) == doctest::Approx(100.5));
  CHECK(final_mean(std::span(rs).first(10)) == doctest::Approx(5.5));
}

TEST_CASE("a single episode takes no optimizer step") {
  const TrainingResult r = run_training(toy_run(1));
  REQUIRE(r.records.size() == 1);
  CHECK_FALSE(r.records[0].updated);
  CHECK(r.records[0].optimizer_steps == 0);
  CHECK(r.checkpoint.episodes == 1);
}

TEST_CASE("training runs") {
  test::ScratchDir dir("efa_marl_train");
  RunConfig c = toy_run(8, 3);
  c.checkpoint_every = 4;
  c.output = dir.path() / "a";
  const TrainingResult r = run_training(c);
  SUBCASE("episode count and warm-up") {
    REQUIRE(r.records.size() == 8);
    for (const auto& rec : r.records) CHECK(rec.updated == (rec.episode > 3));
    CHECK(r.records.back().optimizer_steps == 5);
  }
  SUBCASE("election hold is visible in the metrics") {
    for (const auto& rec : r.records) {
      REQUIRE(rec.elected_sequence.size() == 25);
      for (std::size_t t = 0; t < 25; ++t)
        if (t % 3 != 0) CHECK(rec.elected_sequence[t] == rec.elected_sequence[t - 1]);
    }
  }
  SUBCASE("output files") {
    for (const char* f : {"config.txt", "metrics.jsonl", "timing.csv", "summary.csv", "checkpoint.json"})
      CHECK(fs::exists(c.output / f));
    std::istringstream lines(slurp(c.output / "metrics.jsonl"));
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == 8);
  }
  SUBCASE("same config and seed reproduce the metrics") {
    RunConfig again = c;
    again.output = dir.path() / "b";
    run_training(again);
    CHECK(slurp(again.output / "metrics.jsonl") == slurp(c.output / "metrics.jsonl"));
    CHECK(slurp(again.output / "checkpoint.json") == slurp(c.output / "checkpoint.json"));
  }
}

TEST_CASE("efa-naive matches efa-dqn with alpha0 = 1 and no regularizer") {
  RunConfig base = toy_run(7, 5);
  base.hp.alpha0 = 1.0;
  base.hp.lambda_cf = 0.0;
  RunConfig dqn = base, naive = base;
  dqn.variant = qlearn::Variant::kEfaDqn;
  naive.variant = qlearn::Variant::kEfaNaive;
  const TrainingResult a = run_training(dqn), b = run_training(naive);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].reward == b.records[i].reward);
    CHECK(a.records[i].td_loss == b.records[i].td_loss);
    CHECK(a.records[i].alpha == 1.0);
  }
}

TEST_CASE("evaluation") {
  const TrainingResult trained = run_training(toy_run(2, 4));
  SUBCASE("zero networks act like the all-up policy") {
    // Every Q-value is 0, so the lowest-index tie rule picks action 0 (up).
    qlearn::Checkpoint zero = trained.checkpoint;
    for (auto& [k, t] : zero.tensors) t.fill(0.0);
    const EvalResult got = evaluate(zero, 5, 21);
    ConstantPolicy up(envs::Action::kUp);
    const EvalResult ref = evaluate_policy(envs::Scenario::kCoopNav, 2, up, 5, 21);
    CHECK(got.rewards == ref.rewards);
  }
  SUBCASE("same seed, same rewards") {
    CHECK(evaluate(trained.checkpoint, 4, 8).rewards == evaluate(trained.checkpoint, 4, 8).rewards);
  }
  SUBCASE("scripted coverage approaches zero from below") {
    CoveragePolicy cover;
    const EvalResult r = evaluate_policy(envs::Scenario::kCoopNav, 2, cover, 20, 3);
    const EvalResult rnd = random_baseline(envs::Scenario::kCoopNav, 2, 20, 3);
    for (double v : r.rewards) CHECK(v <= 0.0);
    CHECK(r.mean > rnd.mean);
  }
  SUBCASE("checkpoint file") {
    test::ScratchDir dir("efa_marl_eval");
    RunConfig c = toy_run(2, 4);
    c.output = dir.path();
    run_training(c);
    CHECK(evaluate(dir.path() / "checkpoint.json", 3, 1).rewards == evaluate(trained.checkpoint, 3, 1).rewards);
  }
}

TEST_CASE("deception training") {
  RunConfig c = toy_run(4, 2);
  c.scenario = envs::Scenario::kDeception;
  const TrainingResult r = run_training(c);
  REQUIRE(r.records.size() == 4);
  for (const auto& rec : r.records) CHECK(rec.adversary_reward.has_value());
  CHECK(evaluate(r.checkpoint, 2, 1).rewards.size() == 2);
}

TEST_CASE("ablation") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(variant_config(RunConfig{}, qlearn::Variant::kEfaNaive).hp.alpha0 == 1.0);
  CHECK(variant_config(RunConfig{}, qlearn::Variant::kVdn).hp.lambda_cf == 0.0);

  test::ScratchDir dir("efa_marl_ablate");
  RunConfig base = toy_run(5);
  base.output = dir.path();
  const std::uint64_t seeds[] = {0, 1};
  const AblationTable t = run_ablation(base, seeds);
  REQUIRE(t.rows.size() == 3);
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    const auto& a = t.rows[i - 1];
    const auto& b = t.rows[i];
    CHECK((a.median > b.median || (a.median == b.median && a.mean >= b.mean)));
  }
  for (const auto& row : t.rows) CHECK(row.finals.size() == 2);
  CHECK(fs::exists(dir.path() / "ablation.csv"));
  CHECK(fs::exists(dir.path() / "vdn" / "seed_1" / "metrics.jsonl"));
  CHECK(ablation_csv(t).rfind("variant,median,mean,seeds,finals\n", 0) == 0);
}

TEST_CASE("stackelberg enumeration") {
  SUBCASE("one by one") {
    const auto s = stackelberg_enumerate({{4}}, {{-1}});
    CHECK(s.leader == 0);
    CHECK(s.follower == 0);
    CHECK(s.value == 4.0);
  }
  SUBCASE("coordination game") {
    const std::vector<std::vector<double>> m = {{2, 0}, {0, 1}};
    const auto s = stackelberg_enumerate(m, m);
    CHECK(s.leader == 0);
    CHECK(s.follower == 0);
    CHECK(s.value == 2.0);
  }
  SUBCASE("leader gives up the tempting row") {
    const auto s = stackelberg_enumerate({{3, 0}, {2, 2}}, {{0, 1}, {1, 0}});
    CHECK(s.leader == 1);
    CHECK(s.follower == 0);
    CHECK(s.value == 2.0);
  }
  SUBCASE("follower ties break against the leader") {
    const auto s = stackelberg_enumerate({{5, 1}, {2, 2}}, {{0, 0}, {1, 0}});
    CHECK(s.leader == 1);
    CHECK(s.value == 2.0);
  }
  SUBCASE("malformed games") {
    CHECK_THROWS_AS(stackelberg_enumerate({}, {}), ArgumentError);
    CHECK_THROWS_AS(stackelberg_enumerate({{1, 2}, {3}}, {{1, 2}, {3, 4}}), ArgumentError);
  }
}
