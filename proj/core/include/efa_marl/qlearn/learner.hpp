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

#include "efa_marl/efa/election.hpp"
#include "efa_marl/qlearn/hyperparams.hpp"
#include "efa_marl/qlearn/qnet.hpp"
#include "efa_marl/qlearn/replay.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace efa_marl::qlearn {

/// efa-dqn: election + weighted TD with dynamic alpha + counterfactual term.
/// efa-naive: election with plain TD (alpha = 1, no counterfactual term).
/// vdn: no election (agent 0 is the formal first mover), plain VDN loss.
enum class Variant { kEfaDqn, kEfaNaive, kVdn };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);

struct LearnerConfig {
  std::size_t n_agents = 2;
  std::size_t obs_dim = 0;
  std::size_t n_actions = envs::kNumActions;
  Variant variant = Variant::kEfaDqn;
  Hyperparams hp;
  /// Pins the first mover to `fixed_agent` for any variant (always on for vdn).
  bool fixed_election = false;
  std::size_t fixed_agent = 0;
  /// Distinguishes parameter-init streams of learners sharing one seed.
  std::uint64_t init_salt = 0;
};

namespace detail {
struct BatchView;
}

struct LossParts {
  double td = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
  std::vector<double> weights;  ///< w per (t, b), t-major
};

struct UpdateStats {
  double loss = 0.0;
  double td_loss = 0.0;
  double regularizer = 0.0;
  double critic_loss = 0.0;
  double alpha_used = 1.0;
  double alpha_next = 1.0;
  bool synced = false;
};

/// Per-agent Q-networks with targets, the election network, and the
/// central critic with its target, plus dynamic alpha and counters.
class Learner {
 public:
  Learner(LearnerConfig config, std::uint64_t seed);

  const LearnerConfig& config() const noexcept { return config_; }
  std::size_t n_agents() const noexcept { return config_.n_agents; }
  bool election_fixed() const noexcept;
  bool uses_counterfactual() const noexcept;
  bool dynamic_alpha() const noexcept { return config_.variant == Variant::kEfaDqn; }
  double lambda_cf() const noexcept;

  // ---- acting -------------------------------------------------------------

  struct EpisodeState {
    efa::EncoderState encoder;
    std::vector<Tensor> hidden;
    std::optional<efa::ElectionWeights> election;
    std::vector<std::optional<std::size_t>> last_actions;
    int t = 0;
  };

  struct Decision {
    std::vector<std::size_t> actions;
    efa::ElectionWeights election;
    bool election_step = false;
    std::vector<Tensor> q;
  };

  EpisodeState begin_episode() const;

  /// Elects (or holds) the first mover, then picks its action before the
  /// others', all epsilon-greedy, and advances every recurrent state.
  Decision act(EpisodeState& state, std::span<const envs::Observation> obs, double epsilon,
               SeededRng& election_rng, SeededRng& explore_rng);

  // ---- learning -----------------------------------------------------------

  /// Builds the training objective on `g` (parameters bound trainable):
  ///   sum_j w_j (y_j - Q_tot,j)^2 + lambda_cf sum_j A_j log pi_f(greedy_j)
  /// for efa variants, or the plain summed squared TD error for vdn.
  /// Hidden states replay from episode start; A_j is a constant.
  Var loss(Graph& g, std::span<const Episode* const> batch, LossParts* parts = nullptr);

  /// The same plain VDN objective the vdn arm optimises, built without the
  /// election/weighting machinery.
  Var vdn_loss(Graph& g, std::span<const Episode* const> batch, LossParts* parts = nullptr);

  /// Critic regression loss: (Q_w(s,u)[a_f] - (r + gamma Q_target(s',u')[a'_f]))^2.
  Var critic_loss(Graph& g, std::span<const Episode* const> batch);
  /// One RMSProp step on the critic; returns the loss before the step.
  double critic_update(std::span<const Episode* const> batch);

  /// Counterfactual advantages per (t, b), t-major, from the online critic.
  std::vector<double> advantages(std::span<const Episode* const> batch,
                                 std::span<const Tensor> first_mover_q);

  /// Pins the advantages used by loss() (t-major, one per (t, b)); empty
  /// restores critic-computed values. Lets finite differences see A as the
  /// constant the analytic gradient treats it as.
  void pin_advantages(std::vector<double> advantages) { pinned_advantages_ = std::move(advantages); }

  /// One optimizer step on the batch, alpha update, critic step, and target
  /// sync when due.
  UpdateStats update(std::span<const Episode* const> batch);

  /// Copies online into target parameters (Q-nets and critic).
  void sync_targets();
  /// Syncs when `step_counter` is a positive multiple of the target period.
  bool sync_targets_if_due(std::int64_t step_counter);

  // ---- state --------------------------------------------------------------

  double alpha() const noexcept { return alpha_; }
  void set_alpha(double a) noexcept { alpha_ = a; }
  std::int64_t optimizer_steps() const noexcept { return optimizer_steps_; }
  void set_optimizer_steps(std::int64_t s) noexcept { optimizer_steps_ = s; }
  void set_sync_count(std::int64_t s) noexcept { sync_count_ = s; }
  std::int64_t sync_count() const noexcept { return sync_count_; }

  std::vector<AgentQNet>& qnets() noexcept { return qnets_; }
  std::vector<AgentQNet>& target_qnets() noexcept { return target_qnets_; }
  efa::EfaNet& efa_net() noexcept { return efa_; }
  CentralCritic& critic() noexcept { return critic_; }
  CentralCritic& target_critic() noexcept { return target_critic_; }

  /// Parameters updated by the main optimizer step.
  std::vector<Parameter*> trainable_parameters();
  /// Every tensor owned by the learner (online, target, election, critic).
  std::vector<Parameter*> all_parameters();

 private:
  std::vector<std::vector<Tensor>> target_q(const detail::BatchView& bv);
  std::vector<Var> replay_elections(Graph& g, const detail::BatchView& bv);
  std::vector<std::vector<Var>> online_q(Graph& g, const detail::BatchView& bv,
                                         std::span<const Var> election_weights);
  Tensor critic_inputs(const detail::BatchView& bv) const;
  std::vector<double> advantages(const detail::BatchView& bv, std::span<const Tensor> first_mover_q);

  LearnerConfig config_;
  std::vector<AgentQNet> qnets_;
  std::vector<AgentQNet> target_qnets_;
  efa::EfaNet efa_;
  CentralCritic critic_;
  CentralCritic target_critic_;
  double alpha_;
  std::int64_t optimizer_steps_ = 0;
  std::int64_t sync_count_ = 0;
  std::vector<double> pinned_advantages_;
};

}  // namespace efa_marl::qlearn
