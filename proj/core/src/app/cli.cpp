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

#include "efa_marl/app/checks.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <ostream>
#include <random>
#include <sstream>

namespace efa_marl::app {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

void apply(trainer::RunConfig& c, std::string_view key, std::string_view value, const std::string& where) {
  try {
    if (!trainer::set_config_field(c, key, value)) {
      throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const ArgumentError& e) {
    throw ConfigError(where + e.what());
  }
}

std::string read_text(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

trainer::RunConfig config_of(const Invocation& inv) {
  Overrides overrides = inv.overrides;
  if (inv.seed) overrides.emplace_back("seed", std::to_string(*inv.seed));
  return parse_config(inv.config, overrides);
}

int cmd_train(const Invocation& inv, std::ostream& out) {
  trainer::RunConfig c = config_of(inv);
  c.output = output_dir(inv);
  auto progress = [&](const trainer::MetricsRecord& r) {
    if (!inv.quiet && (r.episode % 100 == 0 || r.episode == c.total_episodes)) {
      out << "episode " << r.episode << " reward " << r.reward << " alpha " << r.alpha << '\n';
    }
  };
  const trainer::TrainingResult res = trainer::run_training(c, progress);
  if (!inv.quiet) {
    out << "final-100 mean reward " << res.final_mean << "\nwrote " << c.output.string() << '\n';
  }
  return kExitOk;
}

int cmd_evaluate(const Invocation& inv, std::ostream& out) {
  const fs::path dir = output_dir(inv);
  const fs::path ckpt_path = inv.checkpoint ? *inv.checkpoint : dir / "checkpoint.json";
  const qlearn::Checkpoint ckpt = qlearn::load_checkpoint(ckpt_path);
  std::uint64_t seed = ckpt.seed;
  if (inv.seed || inv.config || !inv.overrides.empty()) seed = config_of(inv).seed;
  const trainer::EvalResult res = trainer::evaluate(ckpt, inv.episodes, seed);
  make_dirs(dir);
  std::string lines;
  for (std::size_t i = 0; i < res.rewards.size(); ++i) {
    nlohmann::ordered_json j;
    j["episode"] = i + 1;
    j["reward"] = res.rewards[i];
    lines += j.dump() + "\n";
  }
  write_text(dir / "evaluation.jsonl", lines);
  out << "mean reward " << qlearn::format_double(res.mean) << " over " << res.rewards.size() << " episodes\n";
  return kExitOk;
}

int cmd_ablate(const Invocation& inv, std::ostream& out) {
  trainer::RunConfig c = config_of(inv);
  if (inv.seeds < 1) throw ConfigError("invalid value for 'seeds': must be >= 1");
  c.output = output_dir(inv);
  make_dirs(c.output);
  write_text(c.output / "config.txt", trainer::config_text(c));
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < inv.seeds; ++s) seeds.push_back(c.seed + static_cast<std::uint64_t>(s));
  const trainer::AblationTable t = trainer::run_ablation(c, seeds, inv.workers);
  out << trainer::ablation_csv(t);
  return kExitOk;
}

int cmd_stackelberg(const Invocation& inv, std::ostream& out) {
  if (!inv.input) throw ConfigError("stackelberg needs a game file");
  const auto [leader, follower] = read_game(*inv.input);
  const trainer::StackelbergSolution s = trainer::stackelberg_enumerate(leader, follower);
  out << "leader " << s.leader << " follower " << s.follower << " value " << qlearn::format_double(s.value) << '\n';
  return kExitOk;
}

int cmd_plot_data(const Invocation& inv, std::ostream& out) {
  const fs::path metrics = inv.input ? *inv.input : output_dir(inv) / "metrics.jsonl";
  if (inv.window < 1) throw ConfigError("invalid value for 'window': must be >= 1");
  out << export_plot_data(metrics, inv.window);
  return kExitOk;
}

int cmd_selftest(std::ostream& out) {
  const fs::path scratch = fs::temp_directory_path() / ("efa_marl_selftest_" + std::to_string(std::random_device{}()));
  int failures = 0;
  try {
    failures = run_selftest(out, scratch);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(scratch, ec);
    throw;
  }
  std::error_code ec;
  fs::remove_all(scratch, ec);
  return failures == 0 ? kExitOk : kExitFailure;
}

}  // namespace

std::pair<std::string, std::string> parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || trim(text.substr(0, eq)).empty()) {
    throw ConfigError("override '" + std::string(text) + "' is not key=value");
  }
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

trainer::RunConfig parse_config_text(std::string_view text, std::string_view source, const Overrides& overrides) {
  trainer::RunConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + "missing key before '='");
    apply(c, key, trim(line.substr(eq + 1)), where);
  }
  for (const auto& [k, v] : overrides) apply(c, k, v, "override: ");
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

trainer::RunConfig parse_config(const std::optional<fs::path>& path, const Overrides& overrides) {
  if (!path) return parse_config_text({}, "defaults", overrides);
  return parse_config_text(read_text(*path, "config file"), path->string(), overrides);
}

std::vector<double> rolling_mean(std::span<const double> values, std::size_t window) {
  if (window < 1) throw ArgumentError("rolling_mean: window must be >= 1");
  std::vector<double> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t j = first; j <= i; ++j) s += values[j];
    out.push_back(s / static_cast<double>(i + 1 - first));
  }
  return out;
}

std::string export_plot_data(const fs::path& metrics, std::size_t window) {
  std::ifstream in(metrics, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open metrics file '" + metrics.string() + "'");
  std::vector<std::int64_t> episodes;
  std::vector<double> rewards;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      episodes.push_back(j.at("episode").get<std::int64_t>());
      rewards.push_back(j.at("reward").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(metrics.string() + ":" + std::to_string(line_no) + ": malformed metrics record (" +
                        e.what() + ")");
    }
  }
  const std::vector<double> means = rolling_mean(rewards, window);
  std::string csv = "episode,rolling_mean\n";
  for (std::size_t i = 0; i < means.size(); ++i) {
    csv += std::to_string(episodes[i]) + "," + qlearn::format_double(means[i]) + "\n";
  }
  return csv;
}

std::pair<std::vector<std::vector<double>>, std::vector<std::vector<double>>> read_game(const fs::path& path) {
  const std::string text = read_text(path, "game file");
  try {
    const auto j = nlohmann::json::parse(text);
    return {j.at("leader").get<std::vector<std::vector<double>>>(),
            j.at("follower").get<std::vector<std::vector<double>>>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed game file '" + path.string() + "': " + e.what());
  }
}

fs::path output_dir(const Invocation& inv) {
  if (inv.out) return *inv.out;
  if (const char* env = std::getenv("EFA_MARL_OUT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

int run(const Invocation& inv, std::ostream& out, std::ostream& err) {
  try {
    if (inv.subcommand == "train") return cmd_train(inv, out);
    if (inv.subcommand == "evaluate") return cmd_evaluate(inv, out);
    if (inv.subcommand == "ablate") return cmd_ablate(inv, out);
    if (inv.subcommand == "stackelberg") return cmd_stackelberg(inv, out);
    if (inv.subcommand == "plot-data") return cmd_plot_data(inv, out);
    if (inv.subcommand == "selftest") return cmd_selftest(out);
    err << "error: unknown subcommand '" << inv.subcommand << "'\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace efa_marl::app
