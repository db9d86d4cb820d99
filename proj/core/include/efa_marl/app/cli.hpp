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

#include "efa_marl/trainer/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace efa_marl::app {

/// Config file or override problem; the message names the line or field.
class ConfigError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Splits "key=value"; throws ConfigError without '='.
std::pair<std::string, std::string> parse_override(std::string_view text);

/// Flat "key = value" text; '#' starts a comment, blank lines are skipped.
/// Defaults < file < overrides (applied in order). `source` prefixes error
/// messages as "<source>:<line>: ...".
trainer::RunConfig parse_config_text(std::string_view text, std::string_view source,
                                     const Overrides& overrides = {});
/// Reads `path` when given (throws ConfigError when missing), then as above.
trainer::RunConfig parse_config(const std::optional<std::filesystem::path>& path,
                                const Overrides& overrides = {});

/// Trailing mean over at most `window` values at each position.
std::vector<double> rolling_mean(std::span<const double> values, std::size_t window);

/// "episode,rolling_mean" CSV from a metrics JSONL file. Throws ConfigError
/// naming the line of a malformed record, std::runtime_error when unreadable.
std::string export_plot_data(const std::filesystem::path& metrics, std::size_t window = 100);

/// {"leader": [[...]], "follower": [[...]]}
std::pair<std::vector<std::vector<double>>, std::vector<std::vector<double>>> read_game(
    const std::filesystem::path& path);

struct Invocation {
  std::string subcommand;  ///< train, evaluate, ablate, selftest, stackelberg, plot-data
  std::optional<std::filesystem::path> config;
  Overrides overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  bool quiet = false;

  std::optional<std::filesystem::path> checkpoint;  ///< evaluate
  std::int64_t episodes = 100;                      ///< evaluate
  int seeds = 5;                                    ///< ablate
  unsigned workers = 1;                             ///< ablate
  std::optional<std::filesystem::path> input;       ///< stackelberg game, plot-data metrics
  std::size_t window = 100;                         ///< plot-data
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// --out, else $EFA_MARL_OUT, else "runs".
std::filesystem::path output_dir(const Invocation& inv);

/// Dispatches a parsed invocation. Returns 0 on success, 1 on a runtime
/// failure and 2 on a usage or configuration error.
int run(const Invocation& inv, std::ostream& out, std::ostream& err);

}  // namespace efa_marl::app
