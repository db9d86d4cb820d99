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

#include "efa_marl/app/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using efa_marl::app::Invocation;

void add_common(CLI::App* sub, Invocation& inv, std::vector<std::string>& sets) {
  sub->add_option("--config", inv.config, "Flat key = value config file");
  sub->add_option("--set", sets, "Override one config field (key=value), repeatable");
  sub->add_option("--seed", inv.seed, "Root seed (overrides config and --set)");
  sub->add_option("--out", inv.out, "Output directory (default $EFA_MARL_OUT or ./runs)");
  sub->add_flag("--quiet", inv.quiet, "Suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elected first-move multi-agent Q-learning"};
  app.require_subcommand(1);
  Invocation inv;
  std::vector<std::string> sets;

  auto* train = app.add_subcommand("train", "Train one run");
  add_common(train, inv, sets);

  auto* evaluate = app.add_subcommand("evaluate", "Greedy rollouts of a checkpoint");
  add_common(evaluate, inv, sets);
  evaluate->add_option("--checkpoint", inv.checkpoint, "Checkpoint file (default <out>/checkpoint.json)");
  evaluate->add_option("--episodes", inv.episodes, "Evaluation episodes")->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "Train efa-dqn, efa-naive and vdn over several seeds");
  add_common(ablate, inv, sets);
  ablate->add_option("--seeds", inv.seeds, "Number of consecutive seeds from --seed")->check(CLI::PositiveNumber);
  ablate->add_option("--workers", inv.workers, "Parallel training runs")->check(CLI::PositiveNumber);

  auto* selftest = app.add_subcommand("selftest", "Run the invariant suite");
  selftest->add_flag("--quiet", inv.quiet, "Suppress progress output");

  auto* stackelberg = app.add_subcommand("stackelberg", "Solve a leader/follower matrix game");
  stackelberg->add_option("game", inv.input, "JSON file {\"leader\": [[...]], \"follower\": [[...]]}")->required();

  auto* plot = app.add_subcommand("plot-data", "Rolling-mean reward CSV from a metrics file");
  plot->add_option("metrics", inv.input, "metrics.jsonl (default <out>/metrics.jsonl)");
  plot->add_option("--window", inv.window, "Rolling window")->check(CLI::PositiveNumber);
  plot->add_option("--out", inv.out, "Run directory holding metrics.jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? efa_marl::app::kExitOk : efa_marl::app::kExitUsage;
  }
  inv.subcommand = app.get_subcommands().front()->get_name();
  try {
    for (const std::string& s : sets) inv.overrides.push_back(efa_marl::app::parse_override(s));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return efa_marl::app::kExitUsage;
  }
  return efa_marl::app::run(inv, std::cout, std::cerr);
}
