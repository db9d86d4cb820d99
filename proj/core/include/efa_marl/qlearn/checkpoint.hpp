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

#include "efa_marl/qlearn/learner.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace efa_marl::qlearn {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "efa-marl-checkpoint";

/// Raised when a checkpoint cannot be read or does not match this build.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LearnerCounters {
  std::int64_t optimizer_steps = 0;
  std::int64_t sync_count = 0;
  double alpha = 1.0;
};

/// Everything needed to rebuild a run: metadata, hyperparameters, counters
/// and every tensor keyed by "<role>/<parameter name>".
struct Checkpoint {
  int version = kCheckpointVersion;
  std::string scenario;
  std::string variant;
  std::size_t n_agents = 0;
  std::uint64_t seed = 0;
  std::int64_t episodes = 0;
  std::int64_t env_steps = 0;
  Hyperparams hp;
  std::map<std::string, LearnerCounters> counters;
  std::map<std::string, Tensor> tensors;
};

/// Adds the learner's tensors (values and RMSProp state) and counters under `role`.
void capture(Learner& learner, const std::string& role, Checkpoint& ckpt);
/// Inverse of capture(); throws CheckpointError on missing or mis-shaped tensors.
void restore(Learner& learner, const std::string& role, const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws CheckpointError on I/O failure, malformed content or a version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace efa_marl::qlearn
