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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace efa_marl::app {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Worst finite-difference relative error over every network composite and
/// the learner losses, for `seeds` seeds. Passes at <= 1e-3.
CheckResult check_gradients(int seeds);

/// Total-variation distance between hard Gumbel-Softmax selection
/// frequencies and softmax(logits), n = 4, beta = 1.
CheckResult check_gumbel_fidelity(int vectors, int samples, double max_tv);

/// Attention rows sum to 1 within 1e-6 for random n in [2, 8].
CheckResult check_attention_normalization(int trials);

/// Exhaustive joint argmax of summed Q tables equals per-agent argmaxes,
/// n in [2, max_agents], |A| = 5.
CheckResult check_argmax_decomposition(int tables_per_n, int max_agents = 5);

/// alpha' = (k + (B - k) alpha) / B from synthetic batches with k underestimates.
CheckResult check_dynamic_alpha(int trials);

/// Elected index changes only at steps divisible by K, with ceil(T / K)
/// elections per episode.
CheckResult check_election_hold(int episodes);

/// Analytic advantage cases and a hand-computed three-action example.
CheckResult check_counterfactual();

/// Enumeration agrees with a brute-force pair search on random 4 x 4 games
/// and reproduces the two worked 2 x 2 games.
CheckResult check_stackelberg(int games);

/// efa-naive with alpha0 = 1, lambda_cf = 0 and a fixed election reproduces
/// the vdn arm's per-step losses bit for bit.
CheckResult check_reduction_identity(int optimizer_steps, std::size_t batch_episodes = 30);

/// Every subcommand, run twice with the same config and seed under
/// `scratch`, writes byte-identical output.
CheckResult check_determinism(const std::filesystem::path& scratch, std::int64_t episodes);

/// Runs `check` with timing and exception capture.
CheckResult timed(const std::string& name, const std::function<CheckResult()>& check);

/// Prints "PASS name: detail" or "FAIL name: detail".
void print_result(std::ostream& out, const CheckResult& r);

/// Desk-sized versions of every check; returns the number of failures.
int run_selftest(std::ostream& out, const std::filesystem::path& scratch);

}  // namespace efa_marl::app
