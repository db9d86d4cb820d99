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

#include "efa_marl/qlearn/hyperparams.hpp"

#include <algorithm>
#include <charconv>

namespace efa_marl::qlearn {

namespace {

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ArgumentError(std::string("invalid value for '") + field + "': " + why);
}

}  // namespace

void Hyperparams::validate() const {
  require(gamma >= 0.0 && gamma <= 1.0, "gamma", "must lie in [0, 1]");
  require(lr > 0.0, "lr", "must be positive");
  require(rms_decay > 0.0 && rms_decay < 1.0, "rms_decay", "must lie in (0, 1)");
  require(eps_start >= 0.0 && eps_start <= 1.0, "eps_start", "must lie in [0, 1]");
  require(eps_end >= 0.0 && eps_end <= eps_start, "eps_end", "must lie in [0, eps_start]");
  require(eps_anneal_steps > 0, "eps_anneal_steps", "must be positive");
  require(batch_episodes >= 1, "batch_episodes", "must be >= 1");
  require(target_period >= 1, "target_period", "must be >= 1");
  require(hold_k >= 1, "hold_k", "must be >= 1");
  require(heads >= 1, "heads", "must be >= 1");
  require(hidden >= 1 && hidden % heads == 0, "hidden", "must be a positive multiple of heads");
  require(beta > 0.0, "beta", "must be positive");
  require(lambda_cf >= 0.0, "lambda_cf", "must be >= 0");
  require(alpha0 > 0.0 && alpha0 <= 1.0, "alpha0", "must lie in (0, 1]");
  require(buffer_capacity >= batch_episodes, "buffer_capacity", "must be >= batch_episodes");
}

double epsilon_at(std::int64_t env_step, const Hyperparams& hp) {
  const double frac = static_cast<double>(std::min(std::max<std::int64_t>(env_step, 0), hp.eps_anneal_steps)) /
                      static_cast<double>(hp.eps_anneal_steps);
  return hp.eps_start - (hp.eps_start - hp.eps_end) * frac;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view text, std::string_view field) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ArgumentError("invalid value for '" + std::string(field) + "': expected a number, got '" +
                        std::string(text) + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view text, std::string_view field) {
  std::int64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ArgumentError("invalid value for '" + std::string(field) + "': expected an integer, got '" +
                        std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view text, std::string_view field) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ArgumentError("invalid value for '" + std::string(field) + "': expected true or false, got '" +
                      std::string(text) + "'");
}

namespace {

std::size_t parse_count(std::string_view text, std::string_view field) {
  const std::int64_t v = parse_int(text, field);
  if (v < 0) throw ArgumentError("invalid value for '" + std::string(field) + "': must be >= 0");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> hyperparam_fields(const Hyperparams& hp) {
  return {
      {"gamma", format_double(hp.gamma)},
      {"lr", format_double(hp.lr)},
      {"rms_decay", format_double(hp.rms_decay)},
      {"eps_start", format_double(hp.eps_start)},
      {"eps_end", format_double(hp.eps_end)},
      {"eps_anneal_steps", std::to_string(hp.eps_anneal_steps)},
      {"batch_episodes", std::to_string(hp.batch_episodes)},
      {"target_period", std::to_string(hp.target_period)},
      {"hold_k", std::to_string(hp.hold_k)},
      {"heads", std::to_string(hp.heads)},
      {"hidden", std::to_string(hp.hidden)},
      {"beta", format_double(hp.beta)},
      {"lambda_cf", format_double(hp.lambda_cf)},
      {"alpha0", format_double(hp.alpha0)},
      {"buffer_capacity", std::to_string(hp.buffer_capacity)},
      {"efa_grad", hp.efa_grad ? "true" : "false"},
      {"encoder_activation", std::string(efa::activation_name(hp.encoder_activation))},
  };
}

bool set_hyperparam(Hyperparams& hp, std::string_view key, std::string_view value) {
  if (key == "gamma") hp.gamma = parse_double(value, key);
  else if (key == "lr") hp.lr = parse_double(value, key);
  else if (key == "rms_decay") hp.rms_decay = parse_double(value, key);
  else if (key == "eps_start") hp.eps_start = parse_double(value, key);
  else if (key == "eps_end") hp.eps_end = parse_double(value, key);
  else if (key == "eps_anneal_steps") hp.eps_anneal_steps = parse_int(value, key);
  else if (key == "batch_episodes") hp.batch_episodes = parse_count(value, key);
  else if (key == "target_period") hp.target_period = parse_int(value, key);
  else if (key == "hold_k") hp.hold_k = static_cast<int>(parse_int(value, key));
  else if (key == "heads") hp.heads = parse_count(value, key);
  else if (key == "hidden") hp.hidden = parse_count(value, key);
  else if (key == "beta") hp.beta = parse_double(value, key);
  else if (key == "lambda_cf") hp.lambda_cf = parse_double(value, key);
  else if (key == "alpha0") hp.alpha0 = parse_double(value, key);
  else if (key == "buffer_capacity") hp.buffer_capacity = parse_count(value, key);
  else if (key == "efa_grad") hp.efa_grad = parse_bool(value, key);
  else if (key == "encoder_activation") {
    try {
      hp.encoder_activation = efa::parse_activation(value);
    } catch (const ArgumentError&) {
      throw ArgumentError("invalid value for 'encoder_activation': '" + std::string(value) + "'");
    }
  } else {
    return false;
  }
  return true;
}

}  // namespace efa_marl::qlearn
