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
#include <random>
#include <string_view>

namespace efa_marl {

/// Named random streams split from one root seed.
enum class Stream : std::uint64_t {
  kEnv = 1,
  kElection = 2,
  kExploration = 3,
  kInit = 4,
  kReplay = 5,
  kEval = 6,
};

/// Deterministic generator identified by (seed, stream id).
///
/// Identical (seed, stream, call sequence) always yields identical draws
/// within one build.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream);
  SeededRng(std::uint64_t seed, Stream stream)
      : SeededRng(seed, static_cast<std::uint64_t>(stream)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on the open interval (0, 1).
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  /// Standard Gumbel(0, 1) draw: -log(-log(u)).
  double gumbel();

  /// Child generator for a sub-stream, independent of this one's position.
  SeededRng fork(std::uint64_t sub_stream) const;

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace efa_marl
