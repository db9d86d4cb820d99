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

#include "efa_marl/efa/election.hpp"
#include "efa_marl/numerics/layers.hpp"
#include "support.hpp"

#include <cmath>
#include <optional>
#include <vector>

using namespace efa_marl;
using namespace efa_marl::efa;
using efa_marl::test::random_tensor;

namespace {

EfaConfig small_config(std::size_t obs_dim = 6) {
  EfaConfig c;
  c.obs_dim = obs_dim;
  c.hidden = 8;
  c.heads = 2;
  c.hold_k = 5;
  return c;
}

std::vector<envs::Observation> random_obs(std::size_t n, std::size_t dim, SeededRng& rng) {
  std::vector<envs::Observation> obs(n, envs::Observation(dim));
  for (auto& o : obs)
    for (double& x : o) x = rng.uniform(-1, 1);
  return obs;
}

}  // namespace

TEST_CASE("activation names") {
  CHECK(parse_activation("relu") == Activation::kRelu);
  CHECK(parse_activation("tanh") == Activation::kTanh);
  CHECK(activation_name(Activation::kIdentity) == "identity");
  CHECK_THROWS_AS(parse_activation("gelu"), ArgumentError);
}

TEST_CASE("encode") {
  SeededRng init(1, Stream::kInit);
  EfaNet net(small_config(), init);
  SeededRng rng(2, 1);
  const auto obs = random_obs(3, 6, rng);
  const std::vector<std::optional<std::size_t>> last = {std::nullopt, 2, 4};
  SUBCASE("zero parameters halve the previous hidden state") {
    for (Parameter* p : net.parameters()) p->value.fill(0.0);
    EncoderState prev{random_tensor({3, 8}, rng)};
    const auto [h, next] = encode(net, obs, last, prev);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == 0.5 * prev.hidden[i]);
    CHECK(next.hidden == h);
  }
  SUBCASE("identical inputs give identical rows") {
    const std::vector<envs::Observation> same(3, obs[0]);
    const std::vector<std::optional<std::size_t>> none(3, std::nullopt);
    const auto [h, next] = encode(net, same, none, EncoderState::zeros(3, 8));
    for (std::size_t i = 1; i < 3; ++i)
      for (std::size_t c = 0; c < 8; ++c) CHECK(h(i, c) == h(0, c));
  }
  SUBCASE("matches per-agent sequential evaluation") {
    const auto [h, next] = encode(net, obs, last, EncoderState::zeros(3, 8));
    for (std::size_t i = 0; i < 3; ++i) {
      const std::vector<envs::Observation> one = {obs[i]};
      const std::vector<std::optional<std::size_t>> one_last = {last[i]};
      const auto [hi, ni] = encode(net, one, one_last, EncoderState::zeros(1, 8));
      for (std::size_t c = 0; c < 8; ++c) CHECK(h(i, c) == doctest::Approx(hi(0, c)).epsilon(1e-14));
    }
  }
  SUBCASE("encoder inputs carry the one-hot last action") {
    const Tensor in = encoder_inputs(obs, last, envs::kNumActions);
    REQUIRE(in.cols() == 6 + envs::kNumActions);
    for (std::size_t a = 0; a < envs::kNumActions; ++a) {
      CHECK(in(0, 6 + a) == 0.0);
      CHECK(in(1, 6 + a) == (a == 2 ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("aggregate") {
  SeededRng init(3, Stream::kInit);
  EfaNet net(small_config(), init);
  SeededRng rng(4, 1);
  SUBCASE("single agent bypass is deterministic") {
    const Tensor h = random_tensor({1, 8}, rng);
    CHECK(aggregate(net, h) == aggregate(net, h));
    CHECK(aggregate(net, h).cols() == 8);
  }
  SUBCASE("rows permute with the input") {
    const Tensor h = random_tensor({3, 8}, rng);
    const Tensor out = aggregate(net, h);
    const std::vector<std::size_t> perm = {1, 2, 0};
    Tensor hp({3, 8});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t c = 0; c < 8; ++c) hp(i, c) = h(perm[i], c);
    const Tensor outp = aggregate(net, hp);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t c = 0; c < 8; ++c) CHECK(outp(i, c) == doctest::Approx(out(perm[i], c)).epsilon(1e-13));
  }
}

TEST_CASE("generate") {
  SeededRng init(5, Stream::kInit);
  EfaNet net(small_config(), init);
  SeededRng rng(6, Stream::kElection);
  SUBCASE("one agent is always elected") {
    const ElectionWeights w = generate(net, random_tensor({1, 8}, rng), 1.0, rng);
    CHECK(w.elected == 0);
    CHECK(w.hard == Tensor::vector({1.0}));
    CHECK(w.age == 0);
    CHECK(w.valid());
  }
  SUBCASE("identical features elect uniformly") {
    const Tensor row = random_tensor({1, 8}, rng);
    Tensor m({4, 8});
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < 8; ++c) m(i, c) = row(0, c);
    std::vector<double> freq(4, 0.0);
    constexpr int kDraws = 100000;
    for (int k = 0; k < kDraws; ++k) freq[generate(net, m, 1.0, rng).elected] += 1.0 / kDraws;
    for (double f : freq) CHECK(std::abs(f - 0.25) <= 0.01);
  }
  SUBCASE("shifted logits leave the soft distribution") {
    const Tensor logits = random_tensor({4}, rng);
    Tensor shifted = logits;
    for (double& x : shifted.data()) x += 3.7;
    const Tensor noise = random_tensor({4}, rng);
    Graph g;
    const Tensor a = gumbel_softmax_with_noise(g.constant(logits), 1.0, noise).soft.value();
    const Tensor b = gumbel_softmax_with_noise(g.constant(shifted), 1.0, noise).soft.value();
    for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
  }
}

TEST_CASE("elect holds for K steps") {
  SeededRng init(7, Stream::kInit);
  EfaNet net(small_config(), init);
  SeededRng rng(8, Stream::kElection), obs_rng(9, 1);
  const std::vector<std::optional<std::size_t>> last(3, std::nullopt);
  SUBCASE("fresh election at t = 0") {
    EncoderState st = EncoderState::zeros(3, 8);
    const ElectionWeights w = elect(net, random_obs(3, 6, obs_rng), last, 0, nullptr, st, rng);
    CHECK(w.age == 0);
    CHECK(w.valid());
  }
  SUBCASE("held election between steps") {
    EncoderState st = EncoderState::zeros(3, 8);
    ElectionWeights prev = fixed_election(3, 2, 2);
    const Tensor before = st.hidden;
    const ElectionWeights w = elect(net, random_obs(3, 6, obs_rng), last, 3, &prev, st, rng);
    CHECK(w.elected == 2);
    CHECK(w.age == 3);
    CHECK_FALSE(st.hidden == before);  // encoder still advances
  }
  SUBCASE("five elections in a 25-step episode") {
    EncoderState st = EncoderState::zeros(3, 8);
    std::optional<ElectionWeights> prev;
    std::vector<int> steps;
    for (int t = 0; t < 25; ++t) {
      const ElectionWeights w = elect(net, random_obs(3, 6, obs_rng), last, t, prev ? &*prev : nullptr, st, rng);
      if (w.age == 0) steps.push_back(t);
      if (prev && t % 5 != 0) CHECK(w.elected == prev->elected);
      prev = w;
    }
    CHECK(steps == std::vector<int>{0, 5, 10, 15, 20});
  }
}

TEST_CASE("fixed election") {
  const ElectionWeights w = fixed_election(3, 1);
  CHECK(w.elected == 1);
  CHECK(w.hard == Tensor::vector({0, 1, 0}));
  CHECK(w.valid());
}

TEST_CASE("first-move observation") {
  SeededRng rng(10, 1);
  const auto obs = random_obs(3, 4, rng);
  SUBCASE("selects the elected agent") {
    CHECK(first_move_observation(obs, fixed_election(3, 1)) == obs[1]);
  }
  SUBCASE("joint permutation gives the same output") {
    const std::vector<envs::Observation> permuted = {obs[2], obs[0], obs[1]};
    CHECK(first_move_observation(permuted, fixed_election(3, 0)) == first_move_observation(obs, fixed_election(3, 2)));
  }
  SUBCASE("generator receives gradient through the soft path") {
    SeededRng init(11, Stream::kInit);
    EfaNet net(small_config(4), init);
    for (Parameter* p : net.parameters()) p->zero_grad();
    Graph g;
    const Tensor inputs = random_tensor({3, 4 + envs::kNumActions}, rng);
    Var h = net.encode(g, g.constant(inputs), g.constant(Tensor({3, 8})));
    Var logits = net.logits(g, net.aggregate(g, h));
    const Tensor noise = random_tensor({1, 3}, rng);
    Var w = gumbel_softmax_with_noise(logits, 1.0, noise).hard;
    std::vector<Var> ov;
    for (const auto& o : obs) ov.push_back(g.constant(Tensor({1, 4}, o)));
    const Tensor c = random_tensor({1, 4}, rng);
    g.backward(ops::sum(ops::mul_const(first_move_observation(ov, w), c)));
    double norm = 0.0;
    for (double v : net.generator.weight.grad.data()) norm += v * v;
    CHECK(norm > 0.0);
  }
}
