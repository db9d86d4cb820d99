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

#include "efa_marl/numerics/rng.hpp"
#include "efa_marl/numerics/tensor.hpp"

#include <cstddef>
#include <deque>
#include <vector>

namespace efa_marl::qlearn {

/// One environment step of the controlled team.
struct Transition {
  Tensor obs;                        ///< n x obs_dim
  std::vector<std::size_t> actions;  ///< joint action
  double reward = 0.0;
  Tensor next_obs;                   ///< n x obs_dim
  bool done = false;
  Tensor election;                   ///< one-hot over agents (held value)
  std::size_t elected = 0;
  bool election_step = false;        ///< true where the election was recomputed
  Tensor gumbel_noise;               ///< noise used at election steps
};

struct Episode {
  std::vector<Transition> steps;

  std::size_t length() const { return steps.size(); }
  /// Non-empty, exactly the last step done, consistent shapes.
  bool complete() const;
};

/// Ring buffer of complete episodes; the oldest episode is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  /// Throws ArgumentError for an incomplete episode.
  void add(Episode episode);
  /// `count` distinct episodes drawn uniformly; throws if fewer are stored.
  std::vector<const Episode*> sample(std::size_t count, SeededRng& rng) const;

  std::size_t size() const noexcept { return episodes_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const Episode& at(std::size_t i) const { return episodes_.at(i); }

 private:
  std::size_t capacity_;
  std::deque<Episode> episodes_;
};

}  // namespace efa_marl::qlearn
