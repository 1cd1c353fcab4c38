// Copyright 2026 The Factood Authors
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

// Matched-budget evaluation suites: an ID support plus its k-factor shells.
//
// Seeds and routes are a pure function of the suite, never of the policy
// being evaluated, so every compared model sees the same episodes.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "factood/errors.hpp"
#include "factood/factor_space.hpp"
#include "factood/random.hpp"

namespace factood {

inline constexpr int kMaxSuiteK = 3;

struct TestSuite {
  IdSupport id_support;
  std::map<int, std::vector<EnvConfig>> shells;
  int episodes_per_config = 0;
  std::uint64_t seed_base = 0;
  std::string route_set_id = "default";
  // Distinct routes in the pool; episode j drives route (j mod route_pool).
  int route_pool = 0;

  // Noise/episode seed for episode `episode` of configuration `config`.
  std::uint64_t episode_seed(const EnvConfig& config, int episode) const {
    return seed_base ^ stable_hash(format_tag(config), static_cast<std::uint64_t>(episode));
  }

  // Route seed for episode `episode`; shared by every configuration.
  std::uint64_t route_seed(int episode) const {
    const int pool = route_pool > 0 ? route_pool : episodes_per_config;
    return stable_hash("route:" + route_set_id,
                       static_cast<std::uint64_t>(episode % std::max(pool, 1)));
  }

  // (config, k) pairs in shell order.
  std::vector<std::pair<EnvConfig, int>> rows() const {
    std::vector<std::pair<EnvConfig, int>> out;
    for (const auto& [k, configs] : shells) {
      for (const auto& c : configs) out.emplace_back(c, k);
    }
    return out;
  }

  bool operator==(const TestSuite&) const = default;
};

inline TestSuite build_suite(const IdSupport& support, const std::set<int>& ks,
                             int budget, std::uint64_t seed_base,
                             std::string route_set_id = "default", int route_pool = 0) {
  if (support.empty()) throw ValidationError("cannot build a suite for an empty support");
  if (budget < 1) throw ValidationError("episode budget must be >= 1");
  if (route_pool < 0) throw ValidationError("route pool must be >= 0");
  for (int k : ks) {
    if (k < 0 || k > kMaxSuiteK) {
      throw ValidationError("suite k must be in [0, 3], got " + std::to_string(k));
    }
  }
  TestSuite suite;
  suite.id_support = support;
  suite.episodes_per_config = budget;
  suite.seed_base = seed_base;
  suite.route_set_id = std::move(route_set_id);
  suite.route_pool = route_pool > 0 ? route_pool : budget;
  for (int k : ks) suite.shells[k] = shell(support, k);
  return suite;
}

struct LeakageViolation {
  std::string tag;
  int k = 0;
  std::string reason;

  bool operator==(const LeakageViolation&) const = default;
};

// Empty iff the suite is leak-free: no ID member in a k >= 1 shell, every
// shell member at the distance its shell claims, no config in two shells.
inline std::vector<LeakageViolation> check_leakage(const TestSuite& suite) {
  std::vector<LeakageViolation> out;
  std::map<EnvConfig, int> first_shell;
  for (const auto& [k, configs] : suite.shells) {
    for (const auto& c : configs) {
      const auto tag = format_tag(c);
      if (k >= 1 && suite.id_support.contains(c)) {
        out.push_back({tag, k, "ID member appears in OOD shell"});
      } else if (const int d = suite.id_support.distance(c); d != k) {
        out.push_back({tag, k, "distance " + std::to_string(d) + " != shell " + std::to_string(k)});
      }
      if (auto [it, fresh] = first_shell.emplace(c, k); !fresh) {
        out.push_back({tag, k, "also listed in shell " + std::to_string(it->second)});
      }
    }
  }
  return out;
}

inline std::map<int, std::vector<EnvConfig>> stratify(const IdSupport& support, Axis axis) {
  if (support.empty()) throw ValidationError("cannot stratify an empty support");
  std::map<int, std::vector<EnvConfig>> parts;
  for (const auto& m : support.members()) parts[m.level(axis)].push_back(m);
  return parts;
}

// ---------------------------------------------------------------------------
// Serialization: a small JSON document, keys in sorted order.

inline nlohmann::json suite_to_json(const TestSuite& suite) {
  nlohmann::json j;
  j["format"] = "factood-suite/1";
  j["support"] = suite.id_support.tags();
  j["episodes_per_config"] = suite.episodes_per_config;
  j["seed_base"] = suite.seed_base;
  j["route_set"] = suite.route_set_id;
  j["route_pool"] = suite.route_pool;
  nlohmann::json shells = nlohmann::json::object();
  for (const auto& [k, configs] : suite.shells) {
    std::vector<std::string> tags;
    for (const auto& c : configs) tags.push_back(format_tag(c));
    shells[std::to_string(k)] = tags;
  }
  j["shells"] = shells;
  return j;
}

inline TestSuite suite_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "factood-suite/1") {
      throw ValidationError("unsupported suite format " + j.at("format").dump());
    }
    TestSuite s;
    s.id_support = IdSupport::from_tags(j.at("support").get<std::vector<std::string>>());
    s.episodes_per_config = j.at("episodes_per_config").get<int>();
    s.seed_base = j.at("seed_base").get<std::uint64_t>();
    s.route_set_id = j.at("route_set").get<std::string>();
    s.route_pool = j.at("route_pool").get<int>();
    for (const auto& [key, tags] : j.at("shells").items()) {
      auto& configs = s.shells[std::stoi(key)];
      for (const auto& t : tags) configs.push_back(parse_tag(t.get<std::string>()));
    }
    if (s.episodes_per_config < 1) throw ValidationError("episodes_per_config must be >= 1");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed suite file: ") + e.what());
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ValidationError*>(&e)) throw;
    throw ValidationError(std::string("malformed suite file: ") + e.what());
  }
}

inline std::string suite_to_text(const TestSuite& suite) {
  return suite_to_json(suite).dump(2) + "\n";
}

inline void write_suite(const std::string& path, const TestSuite& suite) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write suite file " + path);
  out << suite_to_text(suite);
}

inline TestSuite read_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open suite file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("suite file " + path + " is not valid JSON: " + e.what());
  }
  return suite_from_json(j);
}

}  // namespace factood
