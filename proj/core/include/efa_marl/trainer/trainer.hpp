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
#include "efa_marl/qlearn/checkpoint.hpp"
#include "efa_marl/qlearn/learner.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace efa_marl::trainer {

struct RunConfig {
  envs::Scenario scenario = envs::Scenario::kCoopNav;
  std::size_t n_agents = 2;
  qlearn::Variant variant = qlearn::Variant::kEfaDqn;
  std::int64_t total_episodes = 3000;
  std::uint64_t seed = 0;
  /// Pins agent 0 as first mover for any variant (always on for vdn).
  bool fixed_election = false;
  qlearn::Hyperparams hp;
  /// Run directory; empty keeps everything in memory.
  std::filesystem::path output;
  std::int64_t checkpoint_every = 500;
  /// Greedy evaluation cadence for the summary's best-eval column; 0 disables.
  std::int64_t eval_every = 500;
  std::int64_t eval_episodes = 10;

  /// Throws ArgumentError naming the offending field.
  void validate() const;
};

/// Flat key/value view of a RunConfig (everything except `output`), in a
/// fixed order. Doubles round-trip exactly.
std::vector<std::pair<std::string, std::string>> config_fields(const RunConfig& c);
/// Returns false for an unknown key; throws ArgumentError naming the field
/// for a bad value.
bool set_config_field(RunConfig& c, std::string_view key, std::string_view value);
/// "key = value" lines, readable back by the CLI config parser.
std::string config_text(const RunConfig& c);

struct MetricsRecord {
  std::int64_t episode = 0;  ///< 1-based
  double reward = 0.0;
  std::optional<double> adversary_reward;
  bool updated = false;      ///< an optimizer step followed this episode
  double loss = 0.0;
  double td_loss = 0.0;
  double regularizer = 0.0;
  double critic_loss = 0.0;
  double alpha = 1.0;        ///< alpha used by this episode's update
  double epsilon = 0.0;      ///< at the episode's first step
  std::int64_t optimizer_steps = 0;
  std::int64_t env_steps = 0;
  std::vector<std::int64_t> elected_counts;
  std::vector<std::size_t> elected_sequence;  ///< first mover at each step
  double wall_ms = 0.0;      ///< kept out of the JSONL line
};

/// One JSON object, fields in declaration order, no trailing newline.
std::string to_jsonl(const MetricsRecord& r);

struct TrainingResult {
  std::vector<MetricsRecord> records;
  double final_mean = 0.0;  ///< mean reward of the last min(100, episodes) episodes
  std::optional<double> best_eval;
  qlearn::Checkpoint checkpoint;
};

/// Mean reward over the last `window` records (all when fewer).
double final_mean(std::span<const MetricsRecord> records, std::size_t window = 100);

/// Runs the whole training loop. With an output directory it writes
/// config.txt, metrics.jsonl, timing.csv, summary.csv and checkpoint.json.
/// `on_record` sees every record as it is produced.
TrainingResult run_training(const RunConfig& config,
                            const std::function<void(const MetricsRecord&)>& on_record = {});

// ---- evaluation -------------------------------------------------------------

/// Chooses the controlled team's joint action.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode() {}
  virtual std::vector<std::size_t> act(const envs::WorldState& state,
                                       std::span<const envs::Observation> team_obs) = 0;
};

/// Greedy (epsilon = 0) learner with elections active.
class LearnerPolicy : public Policy {
 public:
  LearnerPolicy(qlearn::Learner& learner, SeededRng election_rng);
  void begin_episode() override;
  std::vector<std::size_t> act(const envs::WorldState& state,
                               std::span<const envs::Observation> team_obs) override;

 private:
  qlearn::Learner& learner_;
  SeededRng election_rng_;
  SeededRng explore_rng_;
  qlearn::Learner::EpisodeState state_;
};

/// Uniform random actions (the epsilon = 1 baseline).
class RandomPolicy : public Policy {
 public:
  RandomPolicy(std::size_t n_agents, SeededRng rng) : n_(n_agents), rng_(std::move(rng)) {}
  std::vector<std::size_t> act(const envs::WorldState& state,
                               std::span<const envs::Observation> team_obs) override;

 private:
  std::size_t n_;
  SeededRng rng_;
};

struct EvalResult {
  double mean = 0.0;
  std::vector<double> rewards;
};

/// Rolls out `episodes` episodes with no learning. In Deception the
/// adversary follows `adversary` when given and stops otherwise.
EvalResult evaluate_policy(envs::Scenario scenario, std::size_t n_agents, Policy& team,
                           std::int64_t episodes, std::uint64_t seed, Policy* adversary = nullptr);

/// Restores the learner(s) from `ckpt` and evaluates them greedily.
EvalResult evaluate(const qlearn::Checkpoint& ckpt, std::int64_t episodes, std::uint64_t seed);
EvalResult evaluate(const std::filesystem::path& checkpoint, std::int64_t episodes, std::uint64_t seed);

/// Mean episode reward of uniformly random team actions.
EvalResult random_baseline(envs::Scenario scenario, std::size_t n_agents, std::int64_t episodes,
                           std::uint64_t seed);

// ---- ablation -----------------------------------------------------------------

struct AblationRow {
  qlearn::Variant variant = qlearn::Variant::kEfaDqn;
  std::vector<std::uint64_t> seeds;
  std::vector<double> finals;  ///< final-100 mean per seed
  std::vector<std::optional<double>> best_evals;
  double median = 0.0;
  double mean = 0.0;
};

struct AblationTable {
  /// Best first: median descending, ties by mean descending, then variant order.
  std::vector<AblationRow> rows;
  const AblationRow& row(qlearn::Variant v) const;
};

double median(std::vector<double> values);

inline constexpr qlearn::Variant kAllVariants[] = {qlearn::Variant::kEfaDqn, qlearn::Variant::kEfaNaive,
                                                   qlearn::Variant::kVdn};

/// Trains every variant (default efa-dqn, efa-naive and vdn) for every seed.
/// Runs go to <output>/<variant>/seed_<s> and the table to
/// <output>/ablation.csv. `workers` > 1 runs independent (variant, seed)
/// pairs in parallel.
AblationTable run_ablation(const RunConfig& base, std::span<const std::uint64_t> seeds, unsigned workers = 1,
                           std::span<const qlearn::Variant> variants = kAllVariants);

/// Applies a variant's fixed settings (alpha0 = 1 and lambda_cf = 0 for
/// efa-naive and vdn).
RunConfig variant_config(const RunConfig& base, qlearn::Variant v);

/// "variant,median,mean,seeds,finals" rows in table order.
std::string ablation_csv(const AblationTable& t);

// ---- Stackelberg oracle ---------------------------------------------------------

struct StackelbergSolution {
  std::size_t leader = 0;
  std::size_t follower = 0;
  double value = 0.0;
};

/// Leader maximizes its guaranteed payoff; the follower best-responds and
/// breaks ties against the leader; leader ties go to the lowest index.
/// Throws ArgumentError for empty or ragged matrices.
StackelbergSolution stackelberg_enumerate(const std::vector<std::vector<double>>& leader_payoff,
                                          const std::vector<std::vector<double>>& follower_payoff);

}  // namespace efa_marl::trainer
