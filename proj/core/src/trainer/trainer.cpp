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

#include "efa_marl/trainer/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace efa_marl::trainer {

using qlearn::Variant;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTeam = "team";
constexpr const char* kAdversary = "adversary";

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ArgumentError(std::string("invalid value for '") + field + "': " + why);
}

qlearn::LearnerConfig team_config(envs::Scenario scenario, std::size_t n_agents, Variant variant,
                                  const qlearn::Hyperparams& hp, bool fixed_election = false) {
  const envs::ParticleWorld world(scenario, n_agents);
  qlearn::LearnerConfig lc;
  lc.n_agents = n_agents;
  lc.obs_dim = world.obs_dim();
  lc.variant = variant;
  lc.hp = hp;
  lc.fixed_election = fixed_election;
  return lc;
}

/// The Deception adversary: one independent recurrent Q-learner.
qlearn::LearnerConfig adversary_config(std::size_t n_agents, const qlearn::Hyperparams& hp) {
  qlearn::LearnerConfig lc = team_config(envs::Scenario::kDeception, n_agents, Variant::kVdn, hp);
  lc.n_agents = 1;
  lc.init_salt = 1;
  return lc;
}

std::vector<envs::Action> to_actions(std::span<const std::size_t> idx) {
  std::vector<envs::Action> out;
  out.reserve(idx.size());
  for (std::size_t a : idx) out.push_back(envs::action_from_index(a));
  return out;
}

Tensor stack_obs(std::span<const envs::Observation> obs) {
  const std::size_t d = obs.front().size();
  Tensor t({obs.size(), d});
  for (std::size_t i = 0; i < obs.size(); ++i) std::copy(obs[i].begin(), obs[i].end(), &t(i, 0));
  return t;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void save_atomically(const fs::path& path, const qlearn::Checkpoint& ckpt) {
  fs::path tmp = path;
  tmp += ".tmp";
  qlearn::save_checkpoint(tmp, ckpt);
  fs::rename(tmp, path);
}

}  // namespace

// ---- config -------------------------------------------------------------------

void RunConfig::validate() const {
  require(n_agents >= 1, "n_agents", "must be >= 1");
  require(total_episodes >= 1, "total_episodes", "must be >= 1");
  require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
  require(eval_every >= 0, "eval_every", "must be >= 0");
  require(eval_episodes >= 1, "eval_episodes", "must be >= 1");
  hp.validate();
}

std::vector<std::pair<std::string, std::string>> config_fields(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> out = {
      {"scenario", std::string(envs::scenario_name(c.scenario))},
      {"n_agents", std::to_string(c.n_agents)},
      {"variant", std::string(qlearn::variant_name(c.variant))},
      {"total_episodes", std::to_string(c.total_episodes)},
      {"seed", std::to_string(c.seed)},
      {"fixed_election", c.fixed_election ? "true" : "false"},
      {"checkpoint_every", std::to_string(c.checkpoint_every)},
      {"eval_every", std::to_string(c.eval_every)},
      {"eval_episodes", std::to_string(c.eval_episodes)},
  };
  for (auto& kv : qlearn::hyperparam_fields(c.hp)) out.push_back(std::move(kv));
  return out;
}

bool set_config_field(RunConfig& c, std::string_view key, std::string_view value) {
  auto count = [&](std::string_view field) {
    const std::int64_t v = qlearn::parse_int(value, field);
    if (v < 0) throw ArgumentError("invalid value for '" + std::string(field) + "': must be >= 0");
    return v;
  };
  if (key == "scenario") {
    try {
      c.scenario = envs::parse_scenario(value);
    } catch (const ArgumentError&) {
      throw ArgumentError("invalid value for 'scenario': '" + std::string(value) +
                          "' (expected coop_nav or deception)");
    }
  } else if (key == "variant") {
    try {
      c.variant = qlearn::parse_variant(value);
    } catch (const ArgumentError&) {
      throw ArgumentError("invalid value for 'variant': '" + std::string(value) +
                          "' (expected efa-dqn, efa-naive or vdn)");
    }
  } else if (key == "n_agents") {
    c.n_agents = static_cast<std::size_t>(count(key));
  } else if (key == "total_episodes") {
    c.total_episodes = qlearn::parse_int(value, key);
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(count(key));
  } else if (key == "fixed_election") {
    c.fixed_election = qlearn::parse_bool(value, key);
  } else if (key == "checkpoint_every") {
    c.checkpoint_every = qlearn::parse_int(value, key);
  } else if (key == "eval_every") {
    c.eval_every = qlearn::parse_int(value, key);
  } else if (key == "eval_episodes") {
    c.eval_episodes = qlearn::parse_int(value, key);
  } else {
    return qlearn::set_hyperparam(c.hp, key, value);
  }
  return true;
}

std::string config_text(const RunConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_fields(c)) out += k + " = " + v + "\n";
  return out;
}

// ---- metrics --------------------------------------------------------------------

std::string to_jsonl(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["episode"] = r.episode;
  j["reward"] = r.reward;
  if (r.adversary_reward) j["adversary_reward"] = *r.adversary_reward;
  j["updated"] = r.updated;
  j["loss"] = r.loss;
  j["td_loss"] = r.td_loss;
  j["regularizer"] = r.regularizer;
  j["critic_loss"] = r.critic_loss;
  j["alpha"] = r.alpha;
  j["epsilon"] = r.epsilon;
  j["optimizer_steps"] = r.optimizer_steps;
  j["env_steps"] = r.env_steps;
  j["elected_counts"] = r.elected_counts;
  j["elected_sequence"] = r.elected_sequence;
  return j.dump();
}

double final_mean(std::span<const MetricsRecord> records, std::size_t window) {
  if (records.empty() || window == 0) return 0.0;
  const std::size_t k = std::min(window, records.size());
  double s = 0.0;
  for (std::size_t i = records.size() - k; i < records.size(); ++i) s += records[i].reward;
  return s / static_cast<double>(k);
}

// ---- policies -------------------------------------------------------------------

LearnerPolicy::LearnerPolicy(qlearn::Learner& learner, SeededRng election_rng)
    : learner_(learner), election_rng_(std::move(election_rng)), explore_rng_(election_rng_.fork(1)) {}

void LearnerPolicy::begin_episode() { state_ = learner_.begin_episode(); }

std::vector<std::size_t> LearnerPolicy::act(const envs::WorldState&,
                                            std::span<const envs::Observation> team_obs) {
  return learner_.act(state_, team_obs, 0.0, election_rng_, explore_rng_).actions;
}

std::vector<std::size_t> RandomPolicy::act(const envs::WorldState&, std::span<const envs::Observation>) {
  std::vector<std::size_t> out(n_);
  for (std::size_t& a : out) a = rng_.index(envs::kNumActions);
  return out;
}

EvalResult evaluate_policy(envs::Scenario scenario, std::size_t n_agents, Policy& team,
                           std::int64_t episodes, std::uint64_t seed, Policy* adversary) {
  if (episodes < 1) throw ArgumentError("evaluate: episodes must be >= 1");
  const envs::ParticleWorld world(scenario, n_agents);
  SeededRng env_rng = SeededRng(seed, Stream::kEval).fork(1);
  EvalResult res;
  for (std::int64_t ep = 0; ep < episodes; ++ep) {
    envs::WorldState state = world.reset(env_rng);
    std::vector<envs::Observation> obs = world.observations(state);
    team.begin_episode();
    if (adversary != nullptr) adversary->begin_episode();
    double total = 0.0;
    bool done = false;
    while (!done) {
      std::vector<std::size_t> joint =
          team.act(state, std::span<const envs::Observation>(obs.data(), n_agents));
      if (joint.size() != n_agents) throw DimensionError("evaluate: policy returned wrong action count");
      if (world.total_agents() > n_agents) {
        if (adversary != nullptr) {
          const auto a = adversary->act(state, std::span<const envs::Observation>(obs.data() + n_agents, 1));
          joint.push_back(a.at(0));
        } else {
          joint.push_back(static_cast<std::size_t>(envs::Action::kStop));
        }
      }
      const std::vector<envs::Action> actions = to_actions(joint);
      envs::StepResult r = world.step(state, actions);
      total += r.reward;
      done = r.done;
      obs = std::move(r.observations);
    }
    res.rewards.push_back(total);
  }
  res.mean = std::accumulate(res.rewards.begin(), res.rewards.end(), 0.0) /
             static_cast<double>(res.rewards.size());
  return res;
}

EvalResult evaluate(const qlearn::Checkpoint& ckpt, std::int64_t episodes, std::uint64_t seed) {
  const envs::Scenario scenario = envs::parse_scenario(ckpt.scenario);
  qlearn::Learner team(team_config(scenario, ckpt.n_agents, qlearn::parse_variant(ckpt.variant), ckpt.hp),
                       ckpt.seed);
  qlearn::restore(team, kTeam, ckpt);
  LearnerPolicy team_policy(team, SeededRng(seed, Stream::kEval).fork(2));
  if (scenario != envs::Scenario::kDeception) {
    return evaluate_policy(scenario, ckpt.n_agents, team_policy, episodes, seed);
  }
  qlearn::Learner adv(adversary_config(ckpt.n_agents, ckpt.hp), ckpt.seed);
  qlearn::restore(adv, kAdversary, ckpt);
  LearnerPolicy adv_policy(adv, SeededRng(seed, Stream::kEval).fork(3));
  return evaluate_policy(scenario, ckpt.n_agents, team_policy, episodes, seed, &adv_policy);
}

EvalResult evaluate(const fs::path& checkpoint, std::int64_t episodes, std::uint64_t seed) {
  return evaluate(qlearn::load_checkpoint(checkpoint), episodes, seed);
}

EvalResult random_baseline(envs::Scenario scenario, std::size_t n_agents, std::int64_t episodes,
                           std::uint64_t seed) {
  RandomPolicy policy(n_agents, SeededRng(seed, Stream::kExploration));
  return evaluate_policy(scenario, n_agents, policy, episodes, seed);
}

// ---- training -------------------------------------------------------------------

TrainingResult run_training(const RunConfig& config,
                            const std::function<void(const MetricsRecord&)>& on_record) {
  config.validate();
  const qlearn::Hyperparams& hp = config.hp;
  const std::size_t n = config.n_agents;
  const bool deception = config.scenario == envs::Scenario::kDeception;
  const envs::ParticleWorld world(config.scenario, n);

  std::ofstream metrics_out;
  std::ofstream timing_out;
  if (!config.output.empty()) {
    std::error_code ec;
    fs::create_directories(config.output, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + config.output.string() + "': " + ec.message());
    write_file(config.output / "config.txt", config_text(config));
    metrics_out = open_out(config.output / "metrics.jsonl");
    timing_out = open_out(config.output / "timing.csv");
    timing_out << "episode,wall_ms\n";
  }

  SeededRng env_rng(config.seed, Stream::kEnv);
  SeededRng election_rng(config.seed, Stream::kElection);
  SeededRng explore_rng(config.seed, Stream::kExploration);
  SeededRng replay_rng(config.seed, Stream::kReplay);
  SeededRng adv_explore_rng = explore_rng.fork(1);
  SeededRng adv_replay_rng = replay_rng.fork(1);

  qlearn::Learner learner(team_config(config.scenario, n, config.variant, hp, config.fixed_election), config.seed);
  std::optional<qlearn::Learner> adversary;
  if (deception) adversary.emplace(adversary_config(n, hp), config.seed);
  qlearn::ReplayBuffer buffer(hp.buffer_capacity);
  qlearn::ReplayBuffer adv_buffer(hp.buffer_capacity);

  TrainingResult result;
  std::int64_t env_steps = 0;

  auto make_checkpoint = [&](std::int64_t episodes) {
    qlearn::Checkpoint c;
    c.scenario = std::string(envs::scenario_name(config.scenario));
    c.variant = std::string(qlearn::variant_name(config.variant));
    c.n_agents = n;
    c.seed = config.seed;
    c.episodes = episodes;
    c.env_steps = env_steps;
    c.hp = hp;
    qlearn::capture(learner, kTeam, c);
    if (adversary) qlearn::capture(*adversary, kAdversary, c);
    return c;
  };

  for (std::int64_t ep = 1; ep <= config.total_episodes; ++ep) {
    const auto start = std::chrono::steady_clock::now();
    MetricsRecord rec;
    rec.episode = ep;
    rec.epsilon = qlearn::epsilon_at(env_steps, hp);
    rec.elected_counts.assign(n, 0);

    envs::WorldState state = world.reset(env_rng);
    std::vector<envs::Observation> obs = world.observations(state);
    auto es = learner.begin_episode();
    std::optional<qlearn::Learner::EpisodeState> adv_es;
    if (adversary) adv_es = adversary->begin_episode();
    qlearn::Episode episode;
    qlearn::Episode adv_episode;
    double total = 0.0;
    double adv_total = 0.0;
    bool done = false;
    while (!done) {
      const double eps = qlearn::epsilon_at(env_steps, hp);
      const std::span<const envs::Observation> team_obs(obs.data(), n);
      qlearn::Learner::Decision d = learner.act(es, team_obs, eps, election_rng, explore_rng);
      std::vector<std::size_t> joint = d.actions;
      std::optional<qlearn::Learner::Decision> adv_d;
      if (adversary) {
        adv_d = adversary->act(*adv_es, std::span<const envs::Observation>(obs.data() + n, 1), eps,
                               election_rng, adv_explore_rng);
        joint.push_back(adv_d->actions[0]);
      }
      const std::vector<envs::Action> actions = to_actions(joint);
      envs::StepResult r = world.step(state, actions);
      ++env_steps;
      done = r.done;
      total += r.reward;
      adv_total += r.adversary_reward;
      ++rec.elected_counts[d.election.elected];
      rec.elected_sequence.push_back(d.election.elected);

      qlearn::Transition tr;
      tr.obs = stack_obs(team_obs);
      tr.actions = d.actions;
      tr.reward = r.reward;
      tr.next_obs = stack_obs(std::span<const envs::Observation>(r.observations.data(), n));
      tr.done = r.done;
      tr.election = d.election.hard;
      tr.elected = d.election.elected;
      tr.election_step = d.election_step;
      tr.gumbel_noise = d.election.noise;
      episode.steps.push_back(std::move(tr));
      if (adversary) {
        qlearn::Transition at;
        at.obs = stack_obs(std::span<const envs::Observation>(obs.data() + n, 1));
        at.actions = adv_d->actions;
        at.reward = r.adversary_reward;
        at.next_obs = stack_obs(std::span<const envs::Observation>(r.observations.data() + n, 1));
        at.done = r.done;
        at.election = adv_d->election.hard;
        at.elected = 0;
        at.election_step = adv_d->election_step;
        at.gumbel_noise = adv_d->election.noise;
        adv_episode.steps.push_back(std::move(at));
      }
      obs = std::move(r.observations);
    }
    buffer.add(std::move(episode));
    if (adversary) adv_buffer.add(std::move(adv_episode));
    rec.reward = total;
    if (deception) rec.adversary_reward = adv_total;
    rec.alpha = learner.alpha();

    if (ep > static_cast<std::int64_t>(hp.batch_episodes)) {
      const auto batch = buffer.sample(hp.batch_episodes, replay_rng);
      const qlearn::UpdateStats s = learner.update(batch);
      rec.updated = true;
      rec.loss = s.loss;
      rec.td_loss = s.td_loss;
      rec.regularizer = s.regularizer;
      rec.critic_loss = s.critic_loss;
      rec.alpha = s.alpha_used;
      if (adversary) adversary->update(adv_buffer.sample(hp.batch_episodes, adv_replay_rng));
    }
    rec.optimizer_steps = learner.optimizer_steps();
    rec.env_steps = env_steps;

    if (config.eval_every > 0 && ep % config.eval_every == 0) {
      LearnerPolicy team_policy(learner, SeededRng(config.seed, Stream::kEval).fork(2));
      EvalResult e;
      if (adversary) {
        LearnerPolicy adv_policy(*adversary, SeededRng(config.seed, Stream::kEval).fork(3));
        e = evaluate_policy(config.scenario, n, team_policy, config.eval_episodes, config.seed, &adv_policy);
      } else {
        e = evaluate_policy(config.scenario, n, team_policy, config.eval_episodes, config.seed);
      }
      if (!result.best_eval || e.mean > *result.best_eval) result.best_eval = e.mean;
    }
    if (!config.output.empty() && config.checkpoint_every > 0 && ep % config.checkpoint_every == 0 &&
        ep != config.total_episodes) {
      save_atomically(config.output / "checkpoint.json", make_checkpoint(ep));
    }

    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (metrics_out.is_open()) {
      metrics_out << to_jsonl(rec) << '\n';
      timing_out << rec.episode << ',' << rec.wall_ms << '\n';
      if (!metrics_out || !timing_out) throw std::runtime_error("failed writing metrics to '" + config.output.string() + "'");
    }
    if (on_record) on_record(rec);
    result.records.push_back(std::move(rec));
  }

  result.final_mean = final_mean(result.records);
  result.checkpoint = make_checkpoint(config.total_episodes);
  if (!config.output.empty()) {
    metrics_out.flush();
    save_atomically(config.output / "checkpoint.json", result.checkpoint);
    std::ostringstream summary;
    summary << "variant,seed,final100_mean,best_eval\n"
            << qlearn::variant_name(config.variant) << ',' << config.seed << ','
            << qlearn::format_double(result.final_mean) << ','
            << (result.best_eval ? qlearn::format_double(*result.best_eval) : std::string()) << '\n';
    write_file(config.output / "summary.csv", summary.str());
  }
  return result;
}

// ---- ablation -------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

RunConfig variant_config(const RunConfig& base, Variant v) {
  RunConfig c = base;
  c.variant = v;
  if (v != Variant::kEfaDqn) {
    c.hp.alpha0 = 1.0;
    c.hp.lambda_cf = 0.0;
  }
  return c;
}

const AblationRow& AblationTable::row(Variant v) const {
  for (const AblationRow& r : rows) {
    if (r.variant == v) return r;
  }
  throw ArgumentError("ablation table has no row for " + std::string(qlearn::variant_name(v)));
}

AblationTable run_ablation(const RunConfig& base, std::span<const std::uint64_t> seeds, unsigned workers,
                           std::span<const Variant> variants) {
  if (seeds.empty()) throw ArgumentError("run_ablation: no seeds");
  if (variants.empty()) throw ArgumentError("run_ablation: no variants");
  base.validate();
  struct Job {
    RunConfig config;
    double final = 0.0;
    std::optional<double> best;
  };
  std::vector<Job> jobs;
  for (Variant v : variants) {
    for (std::uint64_t s : seeds) {
      RunConfig c = variant_config(base, v);
      c.seed = s;
      if (!base.output.empty()) {
        c.output = base.output / std::string(qlearn::variant_name(v)) / ("seed_" + std::to_string(s));
      }
      jobs.push_back({std::move(c), 0.0, std::nullopt});
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const TrainingResult r = run_training(jobs[i].config);
        jobs[i].final = r.final_mean;
        jobs[i].best = r.best_eval;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < count; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  AblationTable table;
  std::size_t j = 0;
  for (Variant v : variants) {
    AblationRow row;
    row.variant = v;
    for (std::uint64_t s : seeds) {
      row.seeds.push_back(s);
      row.finals.push_back(jobs[j].final);
      row.best_evals.push_back(jobs[j].best);
      ++j;
    }
    row.median = median(row.finals);
    row.mean = std::accumulate(row.finals.begin(), row.finals.end(), 0.0) / static_cast<double>(row.finals.size());
    table.rows.push_back(std::move(row));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const AblationRow& a, const AblationRow& b) {
    if (a.median != b.median) return a.median > b.median;
    return a.mean > b.mean;
  });
  if (!base.output.empty()) write_file(base.output / "ablation.csv", ablation_csv(table));
  return table;
}

std::string ablation_csv(const AblationTable& t) {
  std::ostringstream out;
  out << "variant,median,mean,seeds,finals\n";
  for (const AblationRow& r : t.rows) {
    out << qlearn::variant_name(r.variant) << ',' << qlearn::format_double(r.median) << ','
        << qlearn::format_double(r.mean) << ',';
    for (std::size_t i = 0; i < r.seeds.size(); ++i) out << (i ? ";" : "") << r.seeds[i];
    out << ',';
    for (std::size_t i = 0; i < r.finals.size(); ++i) out << (i ? ";" : "") << qlearn::format_double(r.finals[i]);
    out << '\n';
  }
  return out.str();
}

// ---- Stackelberg ------------------------------------------------------------------

StackelbergSolution stackelberg_enumerate(const std::vector<std::vector<double>>& leader_payoff,
                                          const std::vector<std::vector<double>>& follower_payoff) {
  const std::size_t p = leader_payoff.size();
  if (p == 0 || follower_payoff.size() != p) throw ArgumentError("stackelberg: payoff matrices need matching rows >= 1");
  const std::size_t q = leader_payoff.front().size();
  if (q == 0) throw ArgumentError("stackelberg: payoff matrices need columns >= 1");
  for (std::size_t i = 0; i < p; ++i) {
    if (leader_payoff[i].size() != q || follower_payoff[i].size() != q) {
      throw ArgumentError("stackelberg: ragged payoff matrix at row " + std::to_string(i));
    }
  }
  StackelbergSolution best;
  best.value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p; ++i) {
    const double top = *std::max_element(follower_payoff[i].begin(), follower_payoff[i].end());
    std::size_t response = q;
    for (std::size_t j = 0; j < q; ++j) {
      if (follower_payoff[i][j] != top) continue;
      if (response == q || leader_payoff[i][j] < leader_payoff[i][response]) response = j;
    }
    const double value = leader_payoff[i][response];
    if (value > best.value) best = {i, response, value};
  }
  return best;
}

}  // namespace efa_marl::trainer
