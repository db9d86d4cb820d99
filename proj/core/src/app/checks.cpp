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

#include "efa_marl/app/checks.hpp"

#include "efa_marl/app/cli.hpp"
#include "efa_marl/efa/election.hpp"
#include "efa_marl/numerics/grad_check.hpp"
#include "efa_marl/numerics/layers.hpp"
#include "efa_marl/qlearn/learner.hpp"
#include "efa_marl/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>

namespace efa_marl::app {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

Tensor random_tensor(std::vector<std::size_t> shape, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

Parameter random_param(const std::string& name, std::vector<std::size_t> shape, SeededRng& rng) {
  return Parameter(name, random_tensor(std::move(shape), rng));
}

/// Small coop_nav episodes collected by `learner` with exploration, so the
/// batch carries genuine elections and recorded noise.
std::vector<qlearn::Episode> collect(qlearn::Learner& learner, std::size_t count, int length,
                                     std::uint64_t seed) {
  envs::WorldConstants wc;
  wc.episode_length = length;
  const envs::ParticleWorld world(envs::Scenario::kCoopNav, learner.n_agents(), wc);
  SeededRng env(seed, Stream::kEnv);
  SeededRng elect(seed, Stream::kElection);
  SeededRng explore(seed, Stream::kExploration);
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
      ep.steps.push_back(std::move(tr));
      done = r.done;
      obs = std::move(r.observations);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

qlearn::Hyperparams toy_hyperparams() {
  qlearn::Hyperparams hp;
  hp.hidden = 8;
  hp.heads = 2;
  hp.hold_k = 3;
  hp.batch_episodes = 3;
  hp.buffer_capacity = 10;
  return hp;
}

bool read_file(const fs::path& p, std::string& out) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return false;
  out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return true;
}

}  // namespace

CheckResult timed(const std::string& name, const std::function<CheckResult()>& check) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = check();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

void print_result(std::ostream& out, const CheckResult& r) {
  out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << " [" << fmt(r.seconds) << " s]\n";
}

CheckResult check_gradients(int seeds) {
  constexpr double kTol = 1e-3;
  std::map<std::string, double> worst;
  GradCheckStats stats;
  auto record = [&](const std::string& what, double err) { worst[what] = std::max(worst[what], err); };

  for (int s = 0; s < seeds; ++s) {
    SeededRng rng(static_cast<std::uint64_t>(s), 77);

    {
      LinearParams lp("lin", 3, 4, rng);
      lp.bias.value = random_tensor({4}, rng);
      const Tensor x = random_tensor({2, 3}, rng);
      const Tensor c = random_tensor({2, 4}, rng);
      auto params = lp.parameters();
      record("linear", grad_check([&](Graph& g) {
               return ops::sum(ops::mul_const(ops::tanh(linear(g, g.constant(x), lp)), c));
             }, params, 1e-4, &stats));
    }
    {
      GruParams gp("gru", 3, 4, rng);
      Parameter x = random_param("x", {2, 3}, rng);
      Parameter h = random_param("h", {2, 4}, rng);
      const Tensor c = random_tensor({2, 4}, rng);
      auto params = gp.parameters();
      params.push_back(&x);
      params.push_back(&h);
      record("gru_step", grad_check([&](Graph& g) {
               Var h1 = gru_step(g, g.param(x), g.param(h), gp);
               Var h2 = gru_step(g, g.param(x), h1, gp);
               return ops::sum(ops::mul_const(h2, c));
             }, params, 1e-4, &stats));
    }
    {
      Parameter v = random_param("v", {3, 5}, rng);
      const Tensor c = random_tensor({3, 5}, rng);
      std::vector<Parameter*> params = {&v};
      record("softmax", grad_check([&](Graph& g) {
               return ops::sum(ops::mul_const(ops::softmax_rows(g.param(v)), c));
             }, params, 1e-4, &stats));
      record("log_softmax", grad_check([&](Graph& g) {
               return ops::sum(ops::mul_const(ops::log_softmax_rows(g.param(v)), c));
             }, params, 1e-4, &stats));
    }
    {
      Parameter h = random_param("h", {4, 8}, rng);
      Parameter w = random_param("w", {8, 2}, rng);
      const Tensor c = random_tensor({4, 4}, rng);
      std::vector<Parameter*> params = {&h, &w};
      record("attention", grad_check([&](Graph& g) {
               return ops::sum(ops::mul_const(attention_coefficients(g.param(h), g.param(w)), c));
             }, params, 1e-4, &stats));
    }
    {
      Parameter h = random_param("h", {3, 8}, rng);
      std::vector<Parameter> heads;
      for (int m = 0; m < 2; ++m) heads.push_back(random_param("head" + std::to_string(m), {8, 4}, rng));
      const Tensor c = random_tensor({3, 8}, rng);
      std::vector<Parameter*> params = {&h, &heads[0], &heads[1]};
      record("multi_head_aggregate", grad_check([&](Graph& g) {
               return ops::sum(ops::mul_const(multi_head_aggregate(g, g.param(h), heads), c));
             }, params, 1e-4, &stats));
    }
    {
      efa::EfaConfig ec;
      ec.obs_dim = 6;
      ec.hidden = 8;
      ec.heads = 2;
      efa::EfaNet net(ec, rng);
      const Tensor inputs = random_tensor({3, 6 + envs::kNumActions}, rng);
      const Tensor h0 = random_tensor({3, 8}, rng);
      const Tensor noise = random_tensor({1, 3}, rng);
      std::vector<Tensor> obs;
      for (int i = 0; i < 3; ++i) obs.push_back(random_tensor({1, 6}, rng));
      const Tensor c = random_tensor({1, 6}, rng);
      auto params = net.parameters();
      record("election_pipeline", grad_check([&](Graph& g) {
               Var h = net.encode(g, g.constant(inputs), g.constant(h0));
               Var logits = net.logits(g, net.aggregate(g, h));
               Var w = gumbel_softmax_with_noise(logits, 1.0, noise).hard;
               std::vector<Var> ov;
               for (const Tensor& o : obs) ov.push_back(g.constant(o));
               return ops::sum(ops::mul_const(efa::first_move_observation(ov, w), c));
             }, params, 1e-4, &stats));
    }
    {
      qlearn::AgentQNet qn("q", 5, 8, envs::kNumActions, rng);
      std::vector<Tensor> xs;
      for (int t = 0; t < 3; ++t) xs.push_back(random_tensor({2, 5}, rng));
      const Tensor c = random_tensor({2, envs::kNumActions}, rng);
      auto params = qn.parameters();
      record("agent_qnet", grad_check([&](Graph& g) {
               Var h = g.constant(Tensor({2, 8}));
               Var total;
               for (std::size_t t = 0; t < xs.size(); ++t) {
                 auto o = qn.forward(g, g.constant(xs[t]), h);
                 h = o.hidden;
                 Var term = ops::sum(ops::mul_const(o.q, c));
                 total = t == 0 ? term : total + term;
               }
               return total;
             }, params, 1e-4, &stats));
    }
    {
      qlearn::CentralCritic critic("c", 2, 4, envs::kNumActions, 8, rng);
      const Tensor in = random_tensor({3, critic.input_size()}, rng);
      const Tensor c = random_tensor({3, envs::kNumActions}, rng);
      auto params = critic.parameters();
      record("central_critic", grad_check([&](Graph& g) {
               return ops::sum(ops::mul_const(critic.forward(g, g.constant(in)), c));
             }, params, 1e-4, &stats));
    }
    {
      // Full training objective on a 2-agent toy batch.
      qlearn::LearnerConfig lc;
      lc.n_agents = 2;
      lc.obs_dim = envs::ParticleWorld(envs::Scenario::kCoopNav, 2).obs_dim();
      lc.hp = toy_hyperparams();
      lc.hp.lambda_cf = 0.5;
      lc.hp.alpha0 = 0.3;
      qlearn::Learner learner(lc, static_cast<std::uint64_t>(s));
      // Check at a generic point: zero biases can leave whole rows at an
      // exact ReLU kink or an exact Q tie. Targets also drift from online
      // so both weight values occur.
      for (Parameter* p : learner.all_parameters()) {
        for (double& x : p->value.data()) x += rng.uniform(-0.1, 0.1);
      }
      for (auto& net : learner.target_qnets()) {
        for (Parameter* p : net.parameters()) {
          for (double& x : p->value.data()) x += rng.uniform(-0.3, 0.3);
        }
      }
      auto eps = collect(learner, 3, 6, static_cast<std::uint64_t>(s) + 1000);
      std::vector<const qlearn::Episode*> batch;
      for (const auto& e : eps) batch.push_back(&e);
      // A is a constant under differentiation, so pin it for the finite differences.
      std::vector<double> pinned(6 * 3);
      for (double& a : pinned) a = rng.uniform(-1.0, 1.0);
      learner.pin_advantages(pinned);
      auto params = learner.trainable_parameters();
      record("learner_loss", grad_check([&](Graph& g) { return learner.loss(g, batch); }, params, 1e-4, &stats));
      record("vdn_loss", grad_check([&](Graph& g) { return learner.vdn_loss(g, batch); }, params, 1e-4, &stats));
      auto cparams = learner.critic().parameters();
      record("critic_loss", grad_check([&](Graph& g) { return learner.critic_loss(g, batch); }, cparams, 1e-4, &stats));
    }
  }

  double overall = 0.0;
  std::string detail;
  std::string offenders;
  for (const auto& [name, err] : worst) {
    overall = std::max(overall, err);
    if (err > kTol) offenders += " " + name + "=" + fmt(err);
  }
  CheckResult r;
  r.passed = overall <= kTol;
  r.detail = "max relative error " + fmt(overall) + " over " + std::to_string(worst.size()) +
             " composites x " + std::to_string(seeds) + " seeds, " + std::to_string(stats.refined) + " of " +
             std::to_string(stats.coordinates) + " coordinates re-measured at a kink" + (offenders.empty() ? "" : ";" + offenders);
  return r;
}

CheckResult check_gumbel_fidelity(int vectors, int samples, double max_tv) {
  constexpr std::size_t n = 4;
  double worst = 0.0;
  SeededRng logit_rng(11, 1);
  for (int v = 0; v < vectors; ++v) {
    const Tensor logits = random_tensor({n}, logit_rng, -2.0, 2.0);
    double z = 0.0;
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) z += p[i] = std::exp(logits[i]);
    for (double& x : p) x /= z;
    SeededRng rng(static_cast<std::uint64_t>(v), Stream::kElection);
    std::vector<double> freq(n, 0.0);
    for (int s = 0; s < samples; ++s) {
      Graph g;
      const GumbelSample gs = gumbel_softmax(g.constant(logits), 1.0, rng);
      freq[gs.index] += 1.0;
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < n; ++i) tv += std::abs(freq[i] / samples - p[i]);
    worst = std::max(worst, 0.5 * tv);
  }
  CheckResult r;
  r.passed = worst < max_tv;
  r.detail = "max TV distance " + fmt(worst) + " over " + std::to_string(vectors) + " logit vectors x " +
             std::to_string(samples) + " samples (limit " + fmt(max_tv) + ")";
  return r;
}

CheckResult check_attention_normalization(int trials) {
  SeededRng rng(3, 2);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 2 + rng.index(7);
    const std::size_t d = 1 + rng.index(16);
    const std::size_t dk = 1 + rng.index(8);
    Graph g;
    const Tensor a = attention_coefficients(g.constant(random_tensor({n, d}, rng, -3.0, 3.0)),
                                            g.constant(random_tensor({d, dk}, rng))).value();
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += a(i, j);
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  CheckResult r;
  r.passed = worst <= 1e-6;
  r.detail = "max |row sum - 1| = " + fmt(worst) + " over " + std::to_string(trials) + " inputs";
  return r;
}

CheckResult check_argmax_decomposition(int tables_per_n, int max_agents) {
  constexpr std::size_t A = envs::kNumActions;
  SeededRng rng(4, 3);
  int violations = 0;
  int tables = 0;
  for (int n = 2; n <= max_agents; ++n) {
    for (int k = 0; k < tables_per_n; ++k, ++tables) {
      std::vector<std::vector<double>> q(static_cast<std::size_t>(n), std::vector<double>(A));
      for (auto& row : q) {
        for (double& x : row) x = rng.uniform(-5.0, 5.0);
      }
      std::vector<std::size_t> joint(static_cast<std::size_t>(n), 0);
      std::vector<std::size_t> best_joint;
      double best = -std::numeric_limits<double>::infinity();
      std::vector<double> chosen(static_cast<std::size_t>(n));
      while (true) {
        for (std::size_t i = 0; i < joint.size(); ++i) chosen[i] = q[i][joint[i]];
        const double total = qlearn::mix(chosen);
        if (total > best) {
          best = total;
          best_joint = joint;
        }
        std::size_t i = 0;
        while (i < joint.size() && ++joint[i] == A) joint[i++] = 0;
        if (i == joint.size()) break;
      }
      for (std::size_t i = 0; i < joint.size(); ++i) {
        if (qlearn::greedy_action(q[i]) != best_joint[i]) {
          ++violations;
          break;
        }
      }
    }
  }
  CheckResult r;
  r.passed = violations == 0;
  r.detail = std::to_string(violations) + " violations over " + std::to_string(tables) + " exhaustive tables";
  return r;
}

CheckResult check_dynamic_alpha(int trials) {
  SeededRng rng(5, 4);
  double worst = 0.0;
  int bad_values = 0;
  for (int t = 0; t < trials; ++t) {
    const std::size_t B = 1 + rng.index(64);
    const std::size_t k = rng.index(B + 1);
    const double alpha = std::max(rng.uniform(), 1e-3);
    std::vector<std::size_t> order(B);
    for (std::size_t i = 0; i < B; ++i) order[i] = i;
    for (std::size_t i = B; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    std::vector<double> w(B);
    for (std::size_t j = 0; j < B; ++j) {
      const double target = rng.uniform(-10.0, 10.0);
      const bool under = order[j] < k;
      const double q = under ? target - rng.uniform(1e-6, 1.0) : target + (j % 3 == 0 ? 0.0 : rng.uniform(1e-6, 1.0));
      w[j] = qlearn::weighting(q, target, alpha);
      if (w[j] != 1.0 && w[j] != alpha) ++bad_values;
    }
    const double next = qlearn::update_alpha(w);
    const double expected = (static_cast<double>(k) + static_cast<double>(B - k) * alpha) / static_cast<double>(B);
    worst = std::max(worst, std::abs(next - expected));
    if (!(next > 0.0 && next <= 1.0)) ++bad_values;
  }
  CheckResult r;
  r.passed = worst <= 1e-14 && bad_values == 0;
  r.detail = "max |alpha' - (k + (B-k) alpha)/B| = " + fmt(worst) + " over " + std::to_string(trials) +
             " batches; " + std::to_string(bad_values) + " out-of-range weights";
  return r;
}

CheckResult check_election_hold(int episodes) {
  constexpr int kHold = 5;
  constexpr std::size_t n = 3;
  const envs::ParticleWorld world(envs::Scenario::kCoopNav, n);
  SeededRng init(6, Stream::kInit);
  efa::EfaConfig ec;
  ec.obs_dim = world.obs_dim();
  ec.hold_k = kHold;
  efa::EfaNet net(ec, init);
  SeededRng env(6, Stream::kEnv);
  SeededRng elect_rng(6, Stream::kElection);
  SeededRng act_rng(6, Stream::kExploration);
  const int length = world.constants().episode_length;
  const int expected = (length + kHold - 1) / kHold;
  int violations = 0;
  int wrong_counts = 0;
  for (int e = 0; e < episodes; ++e) {
    envs::WorldState s = world.reset(env);
    auto obs = world.observations(s);
    efa::EncoderState enc = efa::EncoderState::zeros(n, ec.hidden);
    std::vector<std::optional<std::size_t>> last(n);
    std::optional<efa::ElectionWeights> prev;
    int elections = 0;
    for (int t = 0; t < length; ++t) {
      efa::ElectionWeights w = efa::elect(net, obs, last, t, prev ? &*prev : nullptr, enc, elect_rng);
      if (w.age == 0) ++elections;
      if (t % kHold != 0 && (w.age == 0 || w.elected != prev->elected)) ++violations;
      if (t % kHold == 0 && w.age != 0) ++violations;
      std::vector<envs::Action> acts;
      for (std::size_t i = 0; i < n; ++i) {
        last[i] = act_rng.index(envs::kNumActions);
        acts.push_back(envs::action_from_index(*last[i]));
      }
      obs = world.step(s, acts).observations;
      prev = w;
    }
    if (elections != expected) ++wrong_counts;
  }
  CheckResult r;
  r.passed = violations == 0 && wrong_counts == 0;
  r.detail = std::to_string(violations) + " hold violations, " + std::to_string(wrong_counts) +
             " episodes without exactly " + std::to_string(expected) + " elections, over " +
             std::to_string(episodes) + " episodes";
  return r;
}

CheckResult check_counterfactual() {
  int failures = 0;
  std::string notes;
  SeededRng rng(7, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const double c = rng.uniform(-5.0, 5.0);
    const std::vector<double> q(envs::kNumActions, c);
    std::vector<double> pi(envs::kNumActions);
    double z = 0.0;
    for (double& p : pi) z += p = rng.uniform();
    for (double& p : pi) p /= z;
    const std::size_t taken = rng.index(envs::kNumActions);
    if (std::abs(qlearn::counterfactual_advantage(q, taken, pi)) > 1e-12) ++failures;

    std::vector<double> q2(envs::kNumActions);
    for (double& x : q2) x = rng.uniform(-5.0, 5.0);
    std::vector<double> det(envs::kNumActions, 0.0);
    det[taken] = 1.0;
    if (qlearn::counterfactual_advantage(q2, taken, det) != 0.0) ++failures;
  }
  if (failures) notes += " analytic cases failed " + std::to_string(failures) + "x;";

  // Q = (1, 2, 4), pi = (1/4, 1/4, 1/2), taken 0: 1 - (0.25 + 0.5 + 2) = -1.75.
  const std::vector<double> q = {1.0, 2.0, 4.0};
  const std::vector<double> pi = {0.25, 0.25, 0.5};
  const double a = qlearn::counterfactual_advantage(q, 0, pi);
  const double b = qlearn::counterfactual_advantage(q, 2, pi);
  if (a != -1.75 || b != 1.25) {
    ++failures;
    notes += " hand example gave " + fmt(a) + ", " + fmt(b) + ";";
  }

  // A critic network with a zeroed output layer is constant in the action.
  SeededRng init(7, Stream::kInit);
  qlearn::CentralCritic critic("c", 2, 4, envs::kNumActions, 8, init);
  critic.l3.weight.value.fill(0.0);
  critic.l3.bias.value.fill(0.7);
  Tensor in({1, critic.input_size()});
  for (double& x : in.data()) x = rng.uniform();
  Graph g;
  const Tensor out = critic.forward(g, g.constant(in)).value();
  const std::vector<double> uniform(envs::kNumActions, 1.0 / envs::kNumActions);
  if (qlearn::counterfactual_advantage(out.data(), 3, uniform) != 0.0) {
    ++failures;
    notes += " constant critic network gave nonzero advantage;";
  }
  CheckResult r;
  r.passed = failures == 0;
  r.detail = failures == 0 ? "constant critic, deterministic policy and hand example (-1.75, 1.25) exact"
                           : "failures:" + notes;
  return r;
}

CheckResult check_stackelberg(int games) {
  int disagreements = 0;
  SeededRng rng(8, 6);
  for (int k = 0; k < games; ++k) {
    std::vector<std::vector<double>> L(4, std::vector<double>(4));
    std::vector<std::vector<double>> F(4, std::vector<double>(4));
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        L[i][j] = static_cast<double>(rng.index(5));
        F[i][j] = static_cast<double>(rng.index(5));
      }
    }
    // Brute force over all pairs: (i, j) is admissible when j is a follower
    // best response to i that is worst for the leader among them.
    std::size_t bi = 0, bj = 0;
    double bv = -1e300;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        bool best_response = true;
        bool pessimistic = true;
        bool earliest = true;
        for (std::size_t j2 = 0; j2 < 4; ++j2) {
          if (F[i][j2] > F[i][j]) best_response = false;
          if (F[i][j2] == F[i][j] && L[i][j2] < L[i][j]) pessimistic = false;
          if (j2 < j && F[i][j2] == F[i][j] && L[i][j2] == L[i][j]) earliest = false;
        }
        if (best_response && pessimistic && earliest && L[i][j] > bv) {
          bv = L[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    const auto s = trainer::stackelberg_enumerate(L, F);
    if (s.leader != bi || s.follower != bj || s.value != bv) ++disagreements;
  }
  int example_failures = 0;
  {
    const auto s = trainer::stackelberg_enumerate({{2, 0}, {0, 1}}, {{2, 0}, {0, 1}});
    if (s.leader != 0 || s.follower != 0 || s.value != 2.0) ++example_failures;
  }
  {
    const auto s = trainer::stackelberg_enumerate({{3, 0}, {2, 2}}, {{0, 1}, {1, 0}});
    if (s.leader != 1 || s.follower != 0 || s.value != 2.0) ++example_failures;
  }
  {
    const auto s = trainer::stackelberg_enumerate({{5}}, {{-1}});
    if (s.leader != 0 || s.follower != 0 || s.value != 5.0) ++example_failures;
  }
  CheckResult r;
  r.passed = disagreements == 0 && example_failures == 0;
  r.detail = std::to_string(disagreements) + " disagreements over " + std::to_string(games) +
             " random 4x4 games; " + std::to_string(example_failures) + " worked examples wrong";
  return r;
}

CheckResult check_reduction_identity(int optimizer_steps, std::size_t batch_episodes) {
  trainer::RunConfig reduced;
  reduced.variant = qlearn::Variant::kEfaNaive;
  reduced.fixed_election = true;
  reduced.hp.alpha0 = 1.0;
  reduced.hp.lambda_cf = 0.0;
  reduced.hp.batch_episodes = batch_episodes;
  reduced.hp.buffer_capacity = std::max<std::size_t>(batch_episodes, 2000);
  reduced.total_episodes = static_cast<std::int64_t>(batch_episodes) + optimizer_steps;
  reduced.eval_every = 0;
  reduced.seed = 12;
  trainer::RunConfig plain = reduced;
  plain.variant = qlearn::Variant::kVdn;
  plain.fixed_election = false;

  const auto a = trainer::run_training(reduced);
  const auto b = trainer::run_training(plain);
  int compared = 0;
  int mismatches = 0;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (!a.records[i].updated) continue;
    ++compared;
    if (std::memcmp(&a.records[i].loss, &b.records[i].loss, sizeof(double)) != 0 ||
        a.records[i].reward != b.records[i].reward) {
      ++mismatches;
    }
  }
  CheckResult r;
  r.passed = mismatches == 0 && compared == optimizer_steps;
  r.detail = std::to_string(mismatches) + " bitwise loss mismatches over " + std::to_string(compared) +
             " optimizer steps";
  return r;
}

CheckResult check_determinism(const fs::path& scratch, std::int64_t episodes) {
  fs::create_directories(scratch);
  const fs::path game = scratch / "game.json";
  {
    std::ofstream g(game);
    g << "{\"leader\": [[2, 0], [0, 1]], \"follower\": [[2, 0], [0, 1]]}\n";
  }
  const fs::path config = scratch / "run.cfg";
  {
    std::ofstream c(config);
    c << "total_episodes = " << episodes << "\nbatch_episodes = 4\nbuffer_capacity = 50\n"
      << "checkpoint_every = 10\neval_every = 10\neval_episodes = 2\nhold_k = 5\n";
  }
  std::vector<std::string> mismatched;
  int failures = 0;
  for (const std::string sub : {"train", "evaluate", "ablate", "stackelberg", "plot-data"}) {
    std::string outputs[2];
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = scratch / (sub + "_" + std::to_string(rep));
      Invocation inv;
      inv.subcommand = sub;
      inv.config = config;
      inv.seed = 3;
      inv.out = dir;
      inv.quiet = true;
      inv.seeds = 2;
      inv.episodes = 5;
      if (sub == "evaluate" || sub == "plot-data") {
        Invocation train = inv;
        train.subcommand = "train";
        train.out = dir / "train";
        std::ostringstream o, e;
        if (run(train, o, e) != kExitOk) ++failures;
        inv.checkpoint = dir / "train" / "checkpoint.json";
        inv.input = dir / "train" / "metrics.jsonl";
        inv.window = 3;
      }
      if (sub == "stackelberg") inv.input = game;
      std::ostringstream out, err;
      if (run(inv, out, err) != kExitOk) ++failures;
      std::string bytes = out.str();
      if (fs::exists(dir)) {
        for (const auto& entry : fs::recursive_directory_iterator(dir)) {
          const std::string name = entry.path().filename().string();
          if (!entry.is_regular_file() || name == "timing.csv") continue;
          std::string content;
          read_file(entry.path(), content);
          bytes += fs::relative(entry.path(), dir).string() + "\n" + content;
        }
      }
      outputs[rep] = std::move(bytes);
    }
    if (outputs[0] != outputs[1] || outputs[0].empty()) mismatched.push_back(sub);
  }
  CheckResult r;
  r.passed = mismatched.empty() && failures == 0;
  std::string list;
  for (const auto& m : mismatched) list += " " + m;
  r.detail = mismatched.empty() ? "train, evaluate, ablate, stackelberg and plot-data outputs byte-identical"
                                : "outputs differ for" + list;
  if (failures) r.detail += "; " + std::to_string(failures) + " runs exited nonzero";
  return r;
}

int run_selftest(std::ostream& out, const fs::path& scratch) {
  const std::vector<std::pair<std::string, std::function<CheckResult()>>> checks = {
      {"gradients", [] { return check_gradients(2); }},
      {"gumbel_fidelity", [] { return check_gumbel_fidelity(3, 20000, 0.02); }},
      {"attention_normalization", [] { return check_attention_normalization(200); }},
      {"argmax_decomposition", [] { return check_argmax_decomposition(20, 4); }},
      {"dynamic_alpha", [] { return check_dynamic_alpha(50); }},
      {"election_hold", [] { return check_election_hold(100); }},
      {"counterfactual", [] { return check_counterfactual(); }},
      {"stackelberg", [] { return check_stackelberg(1000); }},
      {"reduction_identity", [] { return check_reduction_identity(5, 4); }},
      {"determinism", [&] { return check_determinism(scratch, 12); }},
  };
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    const CheckResult r = timed(name, fn);
    print_result(out, r);
    if (!r.passed) ++failures;
  }
  out << "selftest: " << (checks.size() - static_cast<std::size_t>(failures)) << "/" << checks.size()
      << " passed\n";
  return failures;
}

}  // namespace efa_marl::app
