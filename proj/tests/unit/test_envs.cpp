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

#include "efa_marl/envs/particle_world.hpp"
#include "efa_marl/numerics/rng.hpp"
#include "efa_marl/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

using namespace efa_marl;
using namespace efa_marl::envs;

namespace {

WorldState coop_state(std::vector<Vec2> agents, std::vector<Vec2> landmarks) {
  WorldState s;
  s.scenario = Scenario::kCoopNav;
  s.agent_vel.assign(agents.size(), Vec2::Zero());
  s.agent_pos = std::move(agents);
  s.landmark_pos = std::move(landmarks);
  return s;
}

// Kolmogorov-Smirnov statistic against U(lo, hi).
double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = (xs[i] - lo) / (hi - lo);
    d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace

TEST_CASE("scenario names") {
  CHECK(parse_scenario("coop_nav") == Scenario::kCoopNav);
  CHECK(parse_scenario("deception") == Scenario::kDeception);
  CHECK(scenario_name(Scenario::kDeception) == "deception");
  CHECK_THROWS_AS(parse_scenario("predator_prey"), ArgumentError);
}

TEST_CASE("reset") {
  const ParticleWorld world(Scenario::kCoopNav, 3);
  SUBCASE("same seed, same state") {
    SeededRng a(5, Stream::kEnv), b(5, Stream::kEnv);
    const WorldState s1 = world.reset(a), s2 = world.reset(b);
    CHECK(s1.agent_pos == s2.agent_pos);
    CHECK(s1.landmark_pos == s2.landmark_pos);
  }
  SUBCASE("three agents") {
    SeededRng rng(1, Stream::kEnv);
    const WorldState s = world.reset(rng);
    CHECK(s.num_agents() == 3);
    CHECK(s.num_landmarks() == 3);
    CHECK(world.obs_dim() == 14);
    for (const auto& o : world.observations(s)) CHECK(o.size() == 14);
  }
  SUBCASE("positions are uniform per coordinate") {
    SeededRng rng(2, Stream::kEnv);
    std::vector<double> x, y;
    constexpr int kResets = 10000;
    for (int i = 0; i < kResets; ++i) {
      const WorldState s = world.reset(rng);
      x.push_back(s.agent_pos[0].x());
      y.push_back(s.landmark_pos[1].y());
    }
    // Critical value of the KS statistic at p = 0.01.
    const double critical = 1.628 / std::sqrt(static_cast<double>(kResets));
    CHECK(ks_uniform(x, -1.0, 1.0) < critical);
    CHECK(ks_uniform(y, -1.0, 1.0) < critical);
  }
  SUBCASE("deception adds the adversary and a target") {
    const ParticleWorld dw(Scenario::kDeception, 2);
    SeededRng rng(3, Stream::kEnv);
    const WorldState s = dw.reset(rng);
    CHECK(s.num_agents() == 3);
    CHECK(s.num_landmarks() == 2);
    CHECK(s.target_index >= 0);
    CHECK(s.target_index < 2);
  }
}

TEST_CASE("step dynamics") {
  const ParticleWorld world(Scenario::kCoopNav, 2);
  SUBCASE("stop from rest stays put") {
    WorldState s = coop_state({Vec2(0.1, 0.2), Vec2(-0.5, 0.3)}, {Vec2(1, 1), Vec2(-1, -1)});
    const auto before = s.agent_pos;
    const std::vector<Action> acts(2, Action::kStop);
    world.step(s, acts);
    CHECK(s.agent_pos == before);
    CHECK(s.t == 1);
  }
  SUBCASE("right from rest") {
    const ParticleWorld one(Scenario::kCoopNav, 1);
    WorldState s = coop_state({Vec2(0, 0)}, {Vec2(1, 1)});
    const std::vector<Action> acts{Action::kRight};
    one.step(s, acts);
    CHECK(s.agent_vel[0].x() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.agent_pos[0].x() == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(s.agent_pos[0].y() == 0.0);
  }
  SUBCASE("same seed and actions, same trajectory") {
    auto roll = [&] {
      SeededRng env(9, Stream::kEnv), pick(9, Stream::kExploration);
      WorldState s = world.reset(env);
      std::vector<double> trace;
      for (int t = 0; t < 25; ++t) {
        std::vector<Action> acts;
        for (int i = 0; i < 2; ++i) acts.push_back(action_from_index(pick.index(kNumActions)));
        const StepResult r = world.step(s, acts);
        trace.push_back(r.reward);
        for (const auto& p : s.agent_pos) {
          trace.push_back(p.x());
          trace.push_back(p.y());
        }
      }
      return trace;
    };
    CHECK(roll() == roll());
  }
  SUBCASE("episode ends at the horizon") {
    SeededRng env(1, Stream::kEnv);
    WorldState s = world.reset(env);
    const std::vector<Action> acts(2, Action::kUp);
    for (int t = 1; t <= 25; ++t) CHECK(world.step(s, acts).done == (t == 25));
  }
  SUBCASE("wrong action count") {
    WorldState s = coop_state({Vec2(0, 0), Vec2(1, 0)}, {Vec2(1, 1), Vec2(0, 1)});
    const std::vector<Action> acts{Action::kUp};
    CHECK_THROWS_AS(world.step(s, acts), ArgumentError);
  }
}

TEST_CASE("coop-nav reward") {
  SUBCASE("full coverage, no collisions") {
    const WorldState s = coop_state({Vec2(0.5, 0.5), Vec2(-0.5, -0.5)}, {Vec2(-0.5, -0.5), Vec2(0.5, 0.5)});
    CHECK(reward_coop_nav(s) == 0.0);
  }
  SUBCASE("coincident agents") {
    const WorldState s = coop_state({Vec2(0, 0), Vec2(0, 0)}, {Vec2(1, 0), Vec2(0, 2)});
    CHECK(count_collisions(s) == 1);
    CHECK(reward_coop_nav(s) == doctest::Approx(-4.0).epsilon(1e-15));
  }
}

TEST_CASE("deception reward") {
  WorldState s;
  s.scenario = Scenario::kDeception;
  s.landmark_pos = {Vec2(0, 0), Vec2(1, 1)};
  s.target_index = 0;
  s.agent_vel.assign(3, Vec2::Zero());
  SUBCASE("good agent on target") {
    s.agent_pos = {Vec2(0, 0), Vec2(1, 1), Vec2(0, 0.7)};
    const DeceptionReward r = reward_deception(s);
    CHECK(r.good == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(r.adversary == doctest::Approx(-0.7).epsilon(1e-15));
  }
  SUBCASE("adversary on target") {
    s.agent_pos = {Vec2(0.3, 0.4), Vec2(1, 1), Vec2(0, 0)};
    const DeceptionReward r = reward_deception(s);
    CHECK(r.good == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(r.adversary == 0.0);
  }
  SUBCASE("random states match a distance oracle") {
    SeededRng rng(4, 1);
    for (int trial = 0; trial < 100; ++trial) {
      for (auto& p : s.agent_pos = std::vector<Vec2>(3)) p = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
      const Vec2 target = s.landmark_pos[0];
      const double good = -std::min((s.agent_pos[0] - target).norm(), (s.agent_pos[1] - target).norm()) +
                          (s.agent_pos[2] - target).norm();
      const DeceptionReward r = reward_deception(s);
      CHECK(r.good == doctest::Approx(good).epsilon(1e-14));
      CHECK(r.adversary == doctest::Approx(-(s.agent_pos[2] - target).norm()).epsilon(1e-14));
    }
  }
}

TEST_CASE("observations") {
  SUBCASE("landmark displacement") {
    const WorldState s = coop_state({Vec2(0, 0)}, {Vec2(1, 0)});
    const Observation o = observation_of(s, 0);
    REQUIRE(o.size() == 6);
    CHECK(o[4] == 1.0);
    CHECK(o[5] == 0.0);
  }
  SUBCASE("translation leaves displacements") {
    SeededRng rng(6, 1);
    std::vector<Vec2> a, l;
    for (int i = 0; i < 3; ++i) {
      a.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
      l.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    const WorldState s = coop_state(a, l);
    std::vector<Vec2> a2 = a, l2 = l;
    for (auto& p : a2) p += Vec2(0.3, -0.2);
    for (auto& p : l2) p += Vec2(0.3, -0.2);
    const WorldState s2 = coop_state(a2, l2);
    for (std::size_t i = 0; i < 3; ++i) {
      const Observation o1 = observation_of(s, i), o2 = observation_of(s2, i);
      for (std::size_t k = 4; k < o1.size(); ++k) CHECK(o1[k] == doctest::Approx(o2[k]).epsilon(1e-13));
    }
  }
  SUBCASE("random state matches recomputation") {
    SeededRng rng(7, 1);
    std::vector<Vec2> a, l;
    for (int i = 0; i < 3; ++i) {
      a.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
      l.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    WorldState s = coop_state(a, l);
    s.agent_vel[1] = Vec2(0.2, -0.4);
    const Observation o = observation_of(s, 1);
    std::vector<double> ref = {0.2, -0.4, a[1].x(), a[1].y()};
    for (const auto& p : l) {
      ref.push_back(p.x() - a[1].x());
      ref.push_back(p.y() - a[1].y());
    }
    for (std::size_t j : {0u, 2u}) {
      ref.push_back(a[j].x() - a[1].x());
      ref.push_back(a[j].y() - a[1].y());
    }
    CHECK(o == ref);
  }
  SUBCASE("deception hides the target from the adversary") {
    WorldState s;
    s.scenario = Scenario::kDeception;
    s.agent_pos = {Vec2(0, 0), Vec2(0.5, 0), Vec2(-0.5, 0)};
    s.agent_vel.assign(3, Vec2::Zero());
    s.landmark_pos = {Vec2(1, 0), Vec2(0, 1)};
    s.target_index = 1;
    const Observation good = observation_of(s, 0);
    CHECK(good[4] == 0.0);  // target (0, 1) first
    CHECK(good[5] == 1.0);
    const Observation adv = observation_of(s, 2);
    CHECK(adv[4] == 1.5);  // index order
    CHECK(adv[5] == 0.0);
    s.target_index = 0;
    CHECK(observation_of(s, 2) == adv);
  }
  SUBCASE("index out of range") {
    const WorldState s = coop_state({Vec2(0, 0)}, {Vec2(1, 0)});
    CHECK_THROWS_AS(observation_of(s, 1), ArgumentError);
  }
}

TEST_CASE("trajectory writer") {
  const ParticleWorld world(Scenario::kCoopNav, 2);
  SeededRng env(1, Stream::kEnv);
  WorldState s = world.reset(env);
  const std::vector<Action> acts{Action::kUp, Action::kLeft};
  const StepResult r = world.step(s, acts);
  std::ostringstream out;
  TrajectoryWriter(out).write(s, acts, r);
  const std::string line = out.str();
  CHECK(line.rfind("{\"t\":1,\"positions\":", 0) == 0);
  CHECK(line.find("\"actions\":[0,2]") != std::string::npos);
  CHECK(line.back() == '\n');
}
