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

#include "efa_marl/qlearn/replay.hpp"

#include <numeric>
#include <string>

namespace efa_marl::qlearn {

bool Episode::complete() const {
  if (steps.empty() || !steps.back().done) return false;
  const Transition& first = steps.front();
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const Transition& s = steps[t];
    if (s.done != (t + 1 == steps.size())) return false;
    if (!s.obs.same_shape(first.obs) || !s.next_obs.same_shape(first.obs)) return false;
    if (s.actions.size() != first.obs.rows() || s.election.size() != first.obs.rows()) return false;
  }
  return true;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ArgumentError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::add(Episode episode) {
  if (!episode.complete()) throw ArgumentError("ReplayBuffer: only complete episodes are stored");
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
}

std::vector<const Episode*> ReplayBuffer::sample(std::size_t count, SeededRng& rng) const {
  if (count > episodes_.size()) {
    throw ArgumentError("ReplayBuffer: requested " + std::to_string(count) + " episodes, have " +
                        std::to_string(episodes_.size()));
  }
  std::vector<std::size_t> idx(episodes_.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<const Episode*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(&episodes_[idx[i]]);
  return out;
}

}  // namespace efa_marl::qlearn
