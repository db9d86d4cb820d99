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

#include "efa_marl/qlearn/learner.hpp"

#include "efa_marl/numerics/optim.hpp"

#include <algorithm>
#include <cmath>

namespace efa_marl::qlearn {

namespace detail {

/// Time-major view of a batch of equal-length episodes.
struct BatchView {
  std::size_t batch = 0;   // B
  std::size_t steps = 0;   // T
  std::size_t agents = 0;  // n
  std::size_t obs_dim = 0;
  std::vector<std::vector<Tensor>> obs;                     // [t][i] B x d, t = 0..T
  std::vector<std::vector<std::vector<std::size_t>>> acts;  // [t][i][b]
  std::vector<std::vector<std::size_t>> elected;            // [t][b]
  std::vector<std::vector<double>> reward;                  // [t][b]
  std::vector<std::vector<char>> done;                      // [t][b]
  std::vector<const Episode*> episodes;
};

}  // namespace detail

using detail::BatchView;

namespace {

BatchView make_view(std::span<const Episode* const> batch, std::size_t n, std::size_t d) {
  if (batch.empty()) throw ArgumentError("learner: empty batch");
  BatchView v;
  v.batch = batch.size();
  v.steps = batch.front()->length();
  v.agents = n;
  v.obs_dim = d;
  v.episodes.assign(batch.begin(), batch.end());
  for (const Episode* e : batch) {
    if (!e->complete() || e->length() != v.steps) {
      throw ArgumentError("learner: batch needs complete episodes of equal length");
    }
    if (e->steps.front().obs.rows() != n || e->steps.front().obs.cols() != d) {
      throw DimensionError("learner: episode observations " + e->steps.front().obs.shape_string() +
                           " vs " + shape_string({n, d}));
    }
  }
  const std::size_t B = v.batch;
  const std::size_t T = v.steps;
  v.obs.assign(T + 1, std::vector<Tensor>(n, Tensor({B, d})));
  v.acts.assign(T, std::vector<std::vector<std::size_t>>(n, std::vector<std::size_t>(B)));
  v.elected.assign(T, std::vector<std::size_t>(B));
  v.reward.assign(T, std::vector<double>(B));
  v.done.assign(T, std::vector<char>(B));
  for (std::size_t b = 0; b < B; ++b) {
    const Episode& e = *batch[b];
    for (std::size_t t = 0; t <= T; ++t) {
      const Tensor& src = t < T ? e.steps[t].obs : e.steps[T - 1].next_obs;
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(&src(i, 0), d, &v.obs[t][i](b, 0));
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      const Transition& s = e.steps[t];
      for (std::size_t i = 0; i < n; ++i) v.acts[t][i][b] = s.actions[i];
      v.elected[t][b] = s.elected;
      v.reward[t][b] = s.reward;
      v.done[t][b] = s.done ? 1 : 0;
    }
  }
  return v;
}

Tensor column(const std::vector<double>& values) { return Tensor({values.size(), 1}, values); }

Tensor elected_mask(const BatchView& v, std::size_t t, std::size_t agent) {
  Tensor m({v.batch});
  for (std::size_t b = 0; b < v.batch; ++b) m[b] = v.elected[t][b] == agent ? 1.0 : 0.0;
  return m;
}

bool any_elected(const BatchView& v, std::size_t t, std::size_t agent) {
  return std::find(v.elected[t].begin(), v.elected[t].end(), agent) != v.elected[t].end();
}

Var chosen_qtot(const BatchView& v, const std::vector<std::vector<Var>>& q, std::size_t t) {
  Var qtot = ops::gather_cols(q[0][t], v.acts[t][0]);
  for (std::size_t i = 1; i < v.agents; ++i) qtot = qtot + ops::gather_cols(q[i][t], v.acts[t][i]);
  return qtot;
}

std::vector<double> td_targets(const BatchView& v, const std::vector<std::vector<Tensor>>& tq,
                               std::size_t t, double gamma) {
  std::vector<double> y(v.batch);
  for (std::size_t b = 0; b < v.batch; ++b) {
    double next = 0.0;
    if (!v.done[t][b]) {
      for (std::size_t i = 0; i < v.agents; ++i) next += tq[i][t + 1].mat().row(static_cast<Eigen::Index>(b)).maxCoeff();
    }
    y[b] = td_target(v.reward[t][b], v.done[t][b] != 0, next, gamma);
  }
  return y;
}

}  // namespace

Variant parse_variant(std::string_view name) {
  if (name == "efa-dqn") return Variant::kEfaDqn;
  if (name == "efa-naive") return Variant::kEfaNaive;
  if (name == "vdn") return Variant::kVdn;
  throw ArgumentError("unknown variant '" + std::string(name) + "' (expected efa-dqn, efa-naive or vdn)");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kEfaDqn: return "efa-dqn";
    case Variant::kEfaNaive: return "efa-naive";
    case Variant::kVdn: return "vdn";
  }
  return "efa-dqn";
}

Learner::Learner(LearnerConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.hp.validate();
  if (config_.n_agents < 1) throw ArgumentError("learner: n_agents must be >= 1");
  if (config_.fixed_agent >= config_.n_agents) throw ArgumentError("learner: fixed_agent out of range");
  const Hyperparams& hp = config_.hp;
  const SeededRng init(seed, Stream::kInit);
  const std::uint64_t salt = config_.init_salt * 1000;
  for (std::size_t i = 0; i < config_.n_agents; ++i) {
    SeededRng r = init.fork(salt + 100 + i);
    qnets_.emplace_back("agent" + std::to_string(i), config_.obs_dim, hp.hidden, config_.n_actions, r);
    SeededRng rt = init.fork(salt + 100 + i);
    target_qnets_.emplace_back("target_agent" + std::to_string(i), config_.obs_dim, hp.hidden,
                               config_.n_actions, rt);
  }
  efa::EfaConfig ec;
  ec.obs_dim = config_.obs_dim;
  ec.n_actions = config_.n_actions;
  ec.hidden = hp.hidden;
  ec.heads = hp.heads;
  ec.hold_k = hp.hold_k;
  ec.beta = hp.beta;
  ec.encoder_activation = hp.encoder_activation;
  SeededRng re = init.fork(salt + 200);
  efa_ = efa::EfaNet(ec, re);
  SeededRng rc = init.fork(salt + 300);
  critic_ = CentralCritic("critic", config_.n_agents, config_.obs_dim, config_.n_actions, hp.hidden, rc);
  SeededRng rct = init.fork(salt + 300);
  target_critic_ = CentralCritic("target_critic", config_.n_agents, config_.obs_dim,
                                 config_.n_actions, hp.hidden, rct);
  alpha_ = dynamic_alpha() ? hp.alpha0 : 1.0;
}

bool Learner::election_fixed() const noexcept {
  return config_.fixed_election || config_.variant == Variant::kVdn;
}

bool Learner::uses_counterfactual() const noexcept {
  return config_.variant == Variant::kEfaDqn && config_.hp.lambda_cf > 0.0;
}

double Learner::lambda_cf() const noexcept {
  return config_.variant == Variant::kEfaDqn ? config_.hp.lambda_cf : 0.0;
}

Learner::EpisodeState Learner::begin_episode() const {
  EpisodeState s;
  s.encoder = efa::EncoderState::zeros(config_.n_agents, config_.hp.hidden);
  s.hidden.assign(config_.n_agents, Tensor({config_.hp.hidden}));
  s.last_actions.assign(config_.n_agents, std::nullopt);
  return s;
}

Learner::Decision Learner::act(EpisodeState& state, std::span<const envs::Observation> obs,
                               double epsilon, SeededRng& election_rng, SeededRng& explore_rng) {
  const std::size_t n = config_.n_agents;
  if (obs.size() != n) {
    throw DimensionError("act: " + std::to_string(obs.size()) + " observations for " +
                         std::to_string(n) + " agents");
  }
  Decision d;
  const int k = config_.hp.hold_k;
  if (election_fixed()) {
    d.election = efa::fixed_election(n, config_.fixed_agent, state.t % k);
    d.election_step = state.t % k == 0;
  } else {
    const efa::ElectionWeights* prev = state.election ? &*state.election : nullptr;
    d.election = efa::elect(efa_, obs, state.last_actions, state.t, prev, state.encoder, election_rng);
    d.election_step = d.election.age == 0;
  }
  const std::size_t f = d.election.elected;
  d.q.resize(n);
  d.actions.assign(n, 0);
  // The first mover acts on W . o, which is its own observation.
  const envs::Observation first_obs = efa::first_move_observation(obs, d.election);
  for (std::size_t i = 0; i < n; ++i) {
    auto [q, h] = q_values(qnets_[i], i == f ? first_obs : obs[i], state.hidden[i]);
    d.q[i] = std::move(q);
    state.hidden[i] = std::move(h);
  }
  d.actions[f] = select_action(d.q[f].data(), epsilon, explore_rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i != f) d.actions[i] = select_action(d.q[i].data(), epsilon, explore_rng);
  }
  for (std::size_t i = 0; i < n; ++i) state.last_actions[i] = d.actions[i];
  state.election = d.election;
  ++state.t;
  return d;
}

std::vector<std::vector<Tensor>> Learner::target_q(const BatchView& v) {
  Graph g;
  g.set_frozen(true);
  std::vector<std::vector<Tensor>> out(v.agents);
  for (std::size_t i = 0; i < v.agents; ++i) {
    Var h = g.constant(Tensor({v.batch, config_.hp.hidden}));
    for (std::size_t t = 0; t <= v.steps; ++t) {
      auto o = target_qnets_[i].forward(g, g.constant(v.obs[t][i]), h);
      h = o.hidden;
      out[i].push_back(o.q.value());
    }
  }
  return out;
}

std::vector<Var> Learner::replay_elections(Graph& g, const BatchView& v) {
  const std::size_t n = v.agents;
  const std::size_t B = v.batch;
  const std::size_t d = v.obs_dim;
  const std::size_t A = config_.n_actions;
  const auto k = static_cast<std::size_t>(config_.hp.hold_k);
  const std::size_t last_election = ((v.steps - 1) / k) * k;
  std::vector<Var> weights(v.steps);
  Var enc = g.constant(Tensor({B * n, config_.hp.hidden}));
  Var current;
  for (std::size_t t = 0; t <= last_election; ++t) {
    Tensor inputs({B * n, d + A});
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(&v.obs[t][i](b, 0), d, &inputs(b * n + i, 0));
        if (t > 0) inputs(b * n + i, d + v.acts[t - 1][i][b]) = 1.0;
      }
    }
    enc = efa_.encode(g, g.constant(std::move(inputs)), enc);
    if (t % k == 0) {
      std::vector<Var> rows;
      rows.reserve(B);
      for (std::size_t b = 0; b < B; ++b) {
        const Transition& s = v.episodes[b]->steps[t];
        Var h = ops::slice_rows(enc, b * n, n);
        Var logits = efa_.logits(g, efa_.aggregate(g, h));
        const Tensor noise = s.gumbel_noise.size() == n ? Tensor({1, n}, s.gumbel_noise.values())
                                                        : Tensor({1, n});
        const Tensor hard({1, n}, s.election.values());
        rows.push_back(gumbel_softmax_with_noise(logits, config_.hp.beta, noise, hard).hard);
      }
      current = ops::stack_rows(rows);
    }
    weights[t] = current;
  }
  for (std::size_t t = last_election + 1; t < v.steps; ++t) weights[t] = current;
  return weights;
}

std::vector<std::vector<Var>> Learner::online_q(Graph& g, const BatchView& v,
                                                std::span<const Var> election_weights) {
  const std::size_t n = v.agents;
  std::vector<std::vector<Var>> obs_vars(v.steps, std::vector<Var>(n));
  for (std::size_t t = 0; t < v.steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) obs_vars[t][i] = g.constant(v.obs[t][i]);
  }
  std::vector<Var> first_obs(v.steps);
  std::vector<std::vector<Var>> q(n, std::vector<Var>(v.steps));
  for (std::size_t i = 0; i < n; ++i) {
    Var h = g.constant(Tensor({v.batch, config_.hp.hidden}));
    for (std::size_t t = 0; t < v.steps; ++t) {
      Var x = obs_vars[t][i];
      if (!election_weights.empty() && any_elected(v, t, i)) {
        if (first_obs[t].graph == nullptr) {
          first_obs[t] = efa::first_move_observation(obs_vars[t], election_weights[t]);
        }
        // Elected rows read W . o (forward value o_i, gradient into W);
        // the remaining rows read their own observation.
        const Tensor mask = elected_mask(v, t, i);
        Tensor keep = v.obs[t][i];
        for (std::size_t b = 0; b < v.batch; ++b) {
          if (mask[b] != 0.0) keep.mat().row(static_cast<Eigen::Index>(b)).setZero();
        }
        x = ops::add_const(ops::mul_col(first_obs[t], g.constant(mask)), keep);
      }
      auto out = qnets_[i].forward(g, x, h);
      h = out.hidden;
      q[i][t] = out.q;
    }
  }
  return q;
}

Tensor Learner::critic_inputs(const BatchView& v) const {
  const std::size_t n = v.agents;
  const std::size_t d = v.obs_dim;
  Tensor in({v.steps * v.batch, critic_.input_size()});
  std::vector<double> all_obs(n * d);
  std::vector<std::size_t> joint(n);
  for (std::size_t t = 0; t < v.steps; ++t) {
    for (std::size_t b = 0; b < v.batch; ++b) {
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(&v.obs[t][i](b, 0), d, all_obs.begin() + static_cast<std::ptrdiff_t>(i * d));
        joint[i] = v.acts[t][i][b];
      }
      const std::size_t row = t * v.batch + b;
      critic_.fill_input(std::span<double>(&in(row, 0), critic_.input_size()), all_obs, joint,
                         v.elected[t][b]);
    }
  }
  return in;
}

std::vector<double> Learner::advantages(const BatchView& v, std::span<const Tensor> first_mover_q) {
  Graph g;
  g.set_frozen(true);
  const Tensor c = critic_.forward(g, g.constant(critic_inputs(v))).value();
  std::vector<double> adv(v.steps * v.batch);
  for (std::size_t t = 0; t < v.steps; ++t) {
    const Tensor pi = [&] {
      Graph sg;
      return ops::softmax_rows(sg.constant(first_mover_q[t])).value();
    }();
    for (std::size_t b = 0; b < v.batch; ++b) {
      const std::size_t row = t * v.batch + b;
      const std::size_t taken = v.acts[t][v.elected[t][b]][b];
      const std::span<const double> crow(&c(row, 0), c.cols());
      const std::span<const double> prow(&pi(b, 0), pi.cols());
      adv[row] = counterfactual_advantage(crow, taken, prow);
    }
  }
  return adv;
}

std::vector<double> Learner::advantages(std::span<const Episode* const> batch,
                                        std::span<const Tensor> first_mover_q) {
  return advantages(make_view(batch, config_.n_agents, config_.obs_dim), first_mover_q);
}

Var Learner::loss(Graph& g, std::span<const Episode* const> batch, LossParts* parts) {
  if (config_.variant == Variant::kVdn) return vdn_loss(g, batch, parts);
  const BatchView v = make_view(batch, config_.n_agents, config_.obs_dim);
  const auto tq = target_q(v);
  std::vector<Var> election;
  if (!election_fixed() && config_.hp.efa_grad) election = replay_elections(g, v);
  const auto q = online_q(g, v, election);

  const double alpha = alpha_;
  std::vector<double> weights;
  weights.reserve(v.steps * v.batch);
  Var td;
  for (std::size_t t = 0; t < v.steps; ++t) {
    Var qtot = chosen_qtot(v, q, t);
    const std::vector<double> y = td_targets(v, tq, t, config_.hp.gamma);
    std::vector<double> w(v.batch);
    for (std::size_t b = 0; b < v.batch; ++b) {
      double target_same = 0.0;
      for (std::size_t i = 0; i < v.agents; ++i) target_same += tq[i][t](b, v.acts[t][i][b]);
      w[b] = weighting(qtot.value()[b], target_same, alpha);
    }
    weights.insert(weights.end(), w.begin(), w.end());
    Var diff = ops::add_const(ops::scale(qtot, -1.0), column(y));
    Var term = ops::sum(ops::mul_const(diff * diff, column(w)));
    td = t == 0 ? term : td + term;
  }

  Var total = td;
  double reg_value = 0.0;
  const double lambda = lambda_cf();
  if (lambda > 0.0) {
    std::vector<Var> first_q(v.steps);
    std::vector<Tensor> first_q_values(v.steps);
    for (std::size_t t = 0; t < v.steps; ++t) {
      Var acc;
      for (std::size_t i = 0; i < v.agents; ++i) {
        if (!any_elected(v, t, i)) continue;
        Var part = ops::mul_col(q[i][t], g.constant(elected_mask(v, t, i)));
        acc = acc.graph == nullptr ? part : acc + part;
      }
      first_q[t] = acc;
      first_q_values[t] = acc.value();
    }
    std::vector<double> adv = pinned_advantages_;
    if (adv.empty()) {
      adv = advantages(v, first_q_values);
    } else if (adv.size() != v.steps * v.batch) {
      throw DimensionError("loss: " + std::to_string(adv.size()) + " pinned advantages for " +
                           std::to_string(v.steps * v.batch) + " samples");
    }
    Var reg;
    for (std::size_t t = 0; t < v.steps; ++t) {
      std::vector<std::size_t> greedy(v.batch);
      for (std::size_t b = 0; b < v.batch; ++b) {
        greedy[b] = greedy_action(std::span<const double>(&first_q_values[t](b, 0), first_q_values[t].cols()));
      }
      const std::vector<double> a(adv.begin() + static_cast<std::ptrdiff_t>(t * v.batch),
                                  adv.begin() + static_cast<std::ptrdiff_t>((t + 1) * v.batch));
      Var logp = ops::gather_cols(ops::log_softmax_rows(first_q[t]), greedy);
      Var term = ops::sum(ops::mul_const(logp, column(a)));
      reg = t == 0 ? term : reg + term;
    }
    reg_value = reg.value()[0];
    total = td + ops::scale(reg, lambda);
  }
  if (parts != nullptr) {
    parts->td = td.value()[0];
    parts->regularizer = reg_value;
    parts->total = total.value()[0];
    parts->weights = std::move(weights);
  }
  return total;
}

Var Learner::vdn_loss(Graph& g, std::span<const Episode* const> batch, LossParts* parts) {
  const BatchView v = make_view(batch, config_.n_agents, config_.obs_dim);
  const auto tq = target_q(v);
  const auto q = online_q(g, v, {});
  Var td;
  for (std::size_t t = 0; t < v.steps; ++t) {
    Var qtot = chosen_qtot(v, q, t);
    Var diff = ops::add_const(ops::scale(qtot, -1.0), column(td_targets(v, tq, t, config_.hp.gamma)));
    Var term = ops::sum(diff * diff);
    td = t == 0 ? term : td + term;
  }
  if (parts != nullptr) {
    parts->td = td.value()[0];
    parts->regularizer = 0.0;
    parts->total = parts->td;
    parts->weights.assign(v.steps * v.batch, 1.0);
  }
  return td;
}

Var Learner::critic_loss(Graph& g, std::span<const Episode* const> batch) {
  const BatchView v = make_view(batch, config_.n_agents, config_.obs_dim);
  const Tensor inputs = critic_inputs(v);
  Tensor next_values;
  {
    Graph tg;
    tg.set_frozen(true);
    next_values = target_critic_.forward(tg, tg.constant(inputs)).value();
  }
  std::vector<std::size_t> taken(v.steps * v.batch);
  std::vector<double> y(v.steps * v.batch);
  for (std::size_t t = 0; t < v.steps; ++t) {
    for (std::size_t b = 0; b < v.batch; ++b) {
      taken[t * v.batch + b] = v.acts[t][v.elected[t][b]][b];
    }
  }
  for (std::size_t t = 0; t < v.steps; ++t) {
    for (std::size_t b = 0; b < v.batch; ++b) {
      const std::size_t row = t * v.batch + b;
      double next = 0.0;
      if (!v.done[t][b]) {
        const std::size_t next_row = (t + 1) * v.batch + b;
        next = next_values(next_row, taken[next_row]);
      }
      y[row] = td_target(v.reward[t][b], v.done[t][b] != 0, next, config_.hp.gamma);
    }
  }
  Var chosen = ops::gather_cols(critic_.forward(g, g.constant(inputs)), taken);
  Var diff = ops::add_const(ops::scale(chosen, -1.0), column(y));
  return ops::sum(diff * diff);
}

double Learner::critic_update(std::span<const Episode* const> batch) {
  Graph g;
  Var l = critic_loss(g, batch);
  g.backward(l);
  auto params = critic_.parameters();
  rmsprop_step(params, config_.hp.lr, config_.hp.rms_decay);
  return l.value()[0];
}

UpdateStats Learner::update(std::span<const Episode* const> batch) {
  UpdateStats stats;
  stats.alpha_used = alpha_;
  LossParts parts;
  {
    Graph g;
    Var l = loss(g, batch, &parts);
    g.backward(l);
  }
  auto params = trainable_parameters();
  rmsprop_step(params, config_.hp.lr, config_.hp.rms_decay);
  if (dynamic_alpha()) alpha_ = update_alpha(parts.weights);
  stats.alpha_next = alpha_;
  stats.loss = parts.total;
  stats.td_loss = parts.td;
  stats.regularizer = parts.regularizer;
  if (uses_counterfactual()) stats.critic_loss = critic_update(batch);
  ++optimizer_steps_;
  stats.synced = sync_targets_if_due(optimizer_steps_);
  return stats;
}

void Learner::sync_targets() {
  for (std::size_t i = 0; i < qnets_.size(); ++i) {
    auto dst = target_qnets_[i].parameters();
    auto src = qnets_[i].parameters();
    copy_values(dst, src);
  }
  auto dst = target_critic_.parameters();
  auto src = critic_.parameters();
  copy_values(dst, src);
  ++sync_count_;
}

bool Learner::sync_targets_if_due(std::int64_t step_counter) {
  if (step_counter <= 0 || step_counter % config_.hp.target_period != 0) return false;
  sync_targets();
  return true;
}

std::vector<Parameter*> Learner::trainable_parameters() {
  std::vector<Parameter*> out;
  for (AgentQNet& net : qnets_) {
    for (Parameter* p : net.parameters()) out.push_back(p);
  }
  if (!election_fixed()) {
    for (Parameter* p : efa_.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> Learner::all_parameters() {
  std::vector<Parameter*> out;
  for (AgentQNet& net : qnets_) {
    for (Parameter* p : net.parameters()) out.push_back(p);
  }
  for (AgentQNet& net : target_qnets_) {
    for (Parameter* p : net.parameters()) out.push_back(p);
  }
  for (Parameter* p : efa_.parameters()) out.push_back(p);
  for (Parameter* p : critic_.parameters()) out.push_back(p);
  for (Parameter* p : target_critic_.parameters()) out.push_back(p);
  return out;
}

}  // namespace efa_marl::qlearn
