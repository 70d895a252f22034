// Copyright 2026 The GDB Authors. All Rights Reserved.
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

// Plain-text training configuration: one `key = value` per line, `#` starts
// a comment. Unknown keys are errors.

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gdb/error.hpp"
#include "gdb/pipeline.hpp"

namespace gdb {

using ConfigValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw ArgumentError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ArgumentError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ArgumentError("config key '" + key + "' needs at least one value");
  return out;
}

}  // namespace detail

inline ConfigValues parse_config(const std::string& text) {
  ConfigValues out;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ArgumentError("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second)
      throw ArgumentError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return out;
}

inline ConfigValues read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Applies `values` on top of `cfg`. Every key must be known.
inline void apply_config(const ConfigValues& values, TrainConfig& cfg) {
  using detail::parse_bool, detail::parse_int_list, detail::parse_number;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"patch", [&](auto& k, auto& v) { cfg.patch = parse_number<int>(k, v); }},
      {"global_size", [&](auto& k, auto& v) { cfg.global_size = parse_number<int>(k, v); }},
      {"batch", [&](auto& k, auto& v) { cfg.batch = parse_number<int>(k, v); }},
      {"steps", [&](auto& k, auto& v) { cfg.steps = parse_number<int>(k, v); }},
      {"d_steps_per_g", [&](auto& k, auto& v) { cfg.d_steps_per_g = parse_number<int>(k, v); }},
      {"seed", [&](auto& k, auto& v) { cfg.seed = parse_number<std::uint64_t>(k, v); }},
      {"lr_g", [&](auto& k, auto& v) { cfg.lr_g = parse_number<double>(k, v); }},
      {"lr_d", [&](auto& k, auto& v) { cfg.lr_d = parse_number<double>(k, v); }},
      {"beta1", [&](auto& k, auto& v) { cfg.beta1 = parse_number<double>(k, v); }},
      {"beta2", [&](auto& k, auto& v) { cfg.beta2 = parse_number<double>(k, v); }},
      {"adversarial", [&](auto& k, auto& v) { cfg.adversarial = parse_bool(k, v); }},
      {"coarse_base", [&](auto& k, auto& v) { cfg.model.coarse_base = parse_number<int>(k, v); }},
      {"n_res", [&](auto& k, auto& v) { cfg.model.n_res = parse_number<int>(k, v); }},
      {"refine_base", [&](auto& k, auto& v) { cfg.model.refine_base = parse_number<int>(k, v); }},
      {"disc_base", [&](auto& k, auto& v) { cfg.model.disc_base = parse_number<int>(k, v); }},
      {"dilations", [&](auto& k, auto& v) { cfg.model.dilations = parse_int_list(k, v); }},
      {"lambda_d", [&](auto& k, auto& v) { cfg.weights.lambda_d = parse_number<double>(k, v); }},
      {"lambda_b", [&](auto& k, auto& v) { cfg.weights.lambda_b = parse_number<double>(k, v); }},
      {"lambda_l1", [&](auto& k, auto& v) { cfg.weights.lambda_l1 = parse_number<double>(k, v); }},
      {"lambda_a", [&](auto& k, auto& v) { cfg.weights.lambda_a = parse_number<double>(k, v); }},
      {"lambda_i",
       [&](auto& k, auto& v) {
         std::stringstream ss(v);
         std::string item;
         std::vector<double> w;
         while (std::getline(ss, item, ',')) w.push_back(parse_number<double>(k, detail::trim(item)));
         if (w.size() != 4) throw ArgumentError("config key 'lambda_i' needs exactly 4 values");
         std::copy(w.begin(), w.end(), cfg.weights.lambda_i.begin());
       }},
      {"stop_gradient_on_flip", [&](auto& k, auto& v) { cfg.weights.stop_gradient_on_flip = parse_bool(k, v); }},
  };
  for (const auto& [key, value] : values) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ArgumentError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  cfg.validate();
}

}  // namespace gdb
