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

// Closed-loop evaluation protocol.
//
// An episode runs observe -> window -> act -> step for a fixed horizon and
// ends early at the first infraction. Route completion is
// steps_traveled / horizon for early terminations and 1.0 otherwise; success
// means the horizon was completed with no termination event.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "factood/driving_sim.hpp"
#include "factood/errors.hpp"
#include "factood/policies.hpp"
#include "factood/split_builder.hpp"
#include "factood/table_io.hpp"

namespace factood {

struct DriveContext {
  const EpisodeState& state;
  const Route& route;
  std::span<const Observation> window;
};

// Anything that turns a drive context into controls.
template <class D>
concept Driver = requires(const D& d, const DriveContext& ctx) {
  { d.clip() } -> std::convertible_to<ClipSpec>;
  { d.act(ctx) } -> std::convertible_to<Controls>;
};

class PolicyDriver {
 public:
  explicit PolicyDriver(const Policy& policy) : policy_(&policy) {}
  ClipSpec clip() const { return policy_->clip; }
  Controls act(const DriveContext& ctx) const { return predict(*policy_, ctx.window); }

 private:
  const Policy* policy_;
};

// The privileged expert, driven through the same loop as learned policies.
class ExpertDriver {
 public:
  explicit ExpertDriver(const SimParams& params = default_sim_params()) : params_(&params) {}
  ClipSpec clip() const { return {}; }
  Controls act(const DriveContext& ctx) const {
    return expert_controls(ctx.state, ctx.route, *params_);
  }

 private:
  const SimParams* params_;
};

class ConstantDriver {
 public:
  explicit ConstantDriver(Controls c) : controls_(c) {}
  ClipSpec clip() const { return {}; }
  Controls act(const DriveContext&) const { return controls_; }

 private:
  Controls controls_;
};

struct StepRecord {
  int step = 0;
  double u = 0.0, d = 0.0, psi = 0.0, v = 0.0;
  double steer = 0.0, throttle = 0.0;
  EventSet events = kNoEvent;

  bool operator==(const StepRecord&) const = default;
};

inline std::string step_record_json(const StepRecord& r) {
  nlohmann::json events = nlohmann::json::array();
  for (Event e : kAllEvents) {
    if (r.events & e) events.push_back(event_name(e));
  }
  return nlohmann::json{{"step", r.step},   {"u", r.u},         {"d", r.d},
                        {"psi", r.psi},     {"v", r.v},         {"steer", r.steer},
                        {"throttle", r.throttle}, {"events", events}}
      .dump();
}

struct EpisodeResult {
  std::string tag;
  std::uint64_t seed = 0;
  int steps_traveled = 0;
  bool terminated_early = false;
  std::optional<Event> termination_event;
  EventSet infractions = kNoEvent;
  double wall_time_ms = 0.0;
  double predict_ms = 0.0;  // summed over predict calls
  int predict_calls = 0;
  std::vector<StepRecord> log;

  bool success() const { return !terminated_early; }
  bool has(Event e) const { return (infractions & e) != 0; }
};

struct RunOptions {
  bool keep_log = false;
  bool measure_time = false;
  const SimParams* params = nullptr;
};

template <Driver D>
EpisodeResult run_episode(const D& driver, const EnvConfig& config, const Route& route,
                          std::uint64_t seed, int horizon, const RunOptions& opts = {}) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  const SimParams& p = opts.params ? *opts.params : default_sim_params();
  const ClipSpec clip = driver.clip();
  clip.validate();
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();

  const Route skinned = reskin(route, config.agent);
  EpisodeResult r;
  r.tag = format_tag(config);
  r.seed = seed;
  auto state = EpisodeState::start(seed, p);
  FrameHistory history;
  for (int t = 0; t < horizon; ++t) {
    history.push(observe(state, skinned, config, p));
    const auto window = history.window(clip);
    const DriveContext ctx{state, skinned, window};
    Controls c;
    if (opts.measure_time) {
      const auto a = Clock::now();
      c = driver.act(ctx);
      r.predict_ms += std::chrono::duration<double, std::milli>(Clock::now() - a).count();
    } else {
      c = driver.act(ctx);
    }
    ++r.predict_calls;
    c = c.clipped(p);
    const auto res = step(state, skinned, c, p.dt, p);
    state = res.state;
    if (opts.keep_log) {
      r.log.push_back({t, state.u, state.d, state.psi, state.v, c.steer, c.throttle, res.events});
    }
    if (res.events != kNoEvent) {
      r.steps_traveled = t;
      r.terminated_early = true;
      r.termination_event = primary_event(res.events);
      r.infractions = res.events;
      break;
    }
    r.steps_traveled = t + 1;
  }
  if (opts.measure_time) {
    r.wall_time_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }
  return r;
}

inline double route_completion(const EpisodeResult& r, int horizon) {
  if (!r.terminated_early) return 1.0;
  return static_cast<double>(r.steps_traveled) / static_cast<double>(horizon);
}

// ---------------------------------------------------------------------------
// Suite evaluation

struct EvalRow {
  std::string policy;
  std::string tag;
  int k = 0;
  int n = 0;
  double success = 0.0;  // fraction
  double completion_mean = 0.0;
  double completion_std = 0.0;
  std::array<int, 4> infractions{};  // collision, out_of_lane, off_road, stability
  double mean_predict_ms = 0.0;
};

struct EvalTable {
  std::vector<EvalRow> rows;
};

struct EpisodeRecord {
  std::string policy;
  std::string tag;
  int k = 0;
  int episode = 0;
  std::uint64_t seed = 0;
  std::uint64_t route_seed = 0;
  int steps = 0;
  double completion = 0.0;
  bool success = false;
  std::string event;
};

struct Evaluation {
  EvalTable table;
  std::vector<EpisodeRecord> episodes;
};

struct EvalOptions {
  int jobs = 1;
  bool measure_time = false;
  std::string log_dir;  // per-episode step logs when non-empty
  const SimParams* params = nullptr;
};

// Noise-stream override used for paired calibration runs: episode seeds are
// re-derived with this salt while routes stay fixed.
struct NoiseSalt {
  std::uint64_t value = 0;
};

inline EvalRow aggregate_row(const std::string& policy, const EnvConfig& config, int k,
                             std::span<const EpisodeResult> results, int horizon) {
  EvalRow row;
  row.policy = policy;
  row.tag = format_tag(config);
  row.k = k;
  row.n = static_cast<int>(results.size());
  double sum = 0.0, sum_sq = 0.0, predict = 0.0;
  long calls = 0;
  int successes = 0;
  for (const auto& r : results) {
    const double c = route_completion(r, horizon);
    sum += c;
    sum_sq += c * c;
    successes += r.success() ? 1 : 0;
    for (std::size_t e = 0; e < kAllEvents.size(); ++e) row.infractions[e] += r.has(kAllEvents[e]) ? 1 : 0;
    predict += r.predict_ms;
    calls += r.predict_calls;
  }
  if (row.n > 0) {
    const double n = row.n;
    row.success = successes / n;
    row.completion_mean = sum / n;
    if (row.n > 1) {
      row.completion_std = std::sqrt(std::max(0.0, (sum_sq - n * row.completion_mean * row.completion_mean) / (n - 1.0)));
    }
  }
  row.mean_predict_ms = calls > 0 ? predict / static_cast<double>(calls) : 0.0;
  return row;
}

template <Driver D>
Evaluation evaluate(const D& driver, const std::string& policy_id, const TestSuite& suite,
                    const EvalOptions& opts = {}, std::optional<NoiseSalt> salt = std::nullopt) {
  if (const auto leaks = check_leakage(suite); !leaks.empty()) {
    throw ValidationError("suite is leaky: " + leaks.front().tag + " (" + leaks.front().reason +
                          ") and " + std::to_string(leaks.size() - 1) + " more");
  }
  const SimParams& p = opts.params ? *opts.params : default_sim_params();
  const auto rows = suite.rows();
  const int budget = suite.episodes_per_config;
  const std::size_t total = rows.size() * static_cast<std::size_t>(budget);
  std::vector<EpisodeResult> results(total);
  std::vector<std::uint64_t> route_seeds(total);

  RunOptions run;
  run.keep_log = !opts.log_dir.empty();
  run.measure_time = opts.measure_time;
  run.params = &p;

  auto work = [&](std::size_t i) {
    const auto& [config, k] = rows[i / static_cast<std::size_t>(budget)];
    const int j = static_cast<int>(i % static_cast<std::size_t>(budget));
    std::uint64_t seed = suite.episode_seed(config, j);
    if (salt) seed = mix64(seed ^ mix64(salt->value));
    route_seeds[i] = suite.route_seed(j);
    const Route route = generate_route(route_seeds[i], config.scene, p);
    results[i] = run_episode(driver, config, route, seed, p.horizon, run);
  };

  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1 || total < 2) {
    for (std::size_t i = 0; i < total; ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (int w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < total; i = next++) {
          try {
            work(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  Evaluation out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& [config, k] = rows[r];
    const std::span<const EpisodeResult> slice(results.data() + r * static_cast<std::size_t>(budget),
                                               static_cast<std::size_t>(budget));
    out.table.rows.push_back(aggregate_row(policy_id, config, k, slice, p.horizon));
    for (int j = 0; j < budget; ++j) {
      const std::size_t i = r * static_cast<std::size_t>(budget) + static_cast<std::size_t>(j);
      const auto& res = results[i];
      out.episodes.push_back({policy_id, res.tag, k, j, res.seed, route_seeds[i],
                              res.steps_traveled, route_completion(res, p.horizon), res.success(),
                              res.termination_event ? event_name(*res.termination_event) : "none"});
    }
  }

  if (!opts.log_dir.empty()) {
    namespace fs = std::filesystem;
    for (std::size_t i = 0; i < total; ++i) {
      const auto& res = results[i];
      const fs::path dir = fs::path(opts.log_dir) / policy_id / res.tag;
      fs::create_directories(dir);
      std::ofstream f(dir / ("episode_" + std::to_string(i % static_cast<std::size_t>(budget)) + ".jsonl"));
      if (!f) throw RuntimeFailure("cannot write episode log under " + dir.string());
      for (const auto& rec : res.log) f << step_record_json(rec) << "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Table files

inline const std::vector<std::string>& eval_table_header() {
  static const std::vector<std::string> header = {
      "policy", "tag", "k", "n", "success", "completion_mean", "completion_std",
      "collision", "out_of_lane", "off_road", "stability", "mean_predict_ms"};
  return header;
}

inline std::string eval_table_to_csv(const EvalTable& t) {
  CsvTable csv;
  csv.header = eval_table_header();
  for (const auto& r : t.rows) {
    csv.rows.push_back({r.policy, r.tag, std::to_string(r.k), std::to_string(r.n),
                        fixed4(r.success), fixed4(r.completion_mean), fixed4(r.completion_std),
                        std::to_string(r.infractions[0]), std::to_string(r.infractions[1]),
                        std::to_string(r.infractions[2]), std::to_string(r.infractions[3]),
                        fixed4(r.mean_predict_ms)});
  }
  return csv.to_text();
}

inline EvalTable eval_table_from_csv(const CsvTable& csv) {
  for (const auto& h : eval_table_header()) csv.column(h);
  EvalTable t;
  for (const auto& cells : csv.rows) {
    auto get = [&](const char* name) { return cells[csv.column(name)]; };
    EvalRow r;
    r.policy = get("policy");
    r.tag = format_tag(parse_tag(get("tag")));
    r.k = parse_int(get("k"), "k");
    r.n = parse_int(get("n"), "n");
    r.success = parse_number(get("success"), "success");
    r.completion_mean = parse_number(get("completion_mean"), "completion_mean");
    r.completion_std = parse_number(get("completion_std"), "completion_std");
    r.infractions = {parse_int(get("collision"), "collision"),
                     parse_int(get("out_of_lane"), "out_of_lane"),
                     parse_int(get("off_road"), "off_road"),
                     parse_int(get("stability"), "stability")};
    r.mean_predict_ms = parse_number(get("mean_predict_ms"), "mean_predict_ms");
    t.rows.push_back(r);
  }
  return t;
}

inline std::string episodes_to_csv(std::span<const EpisodeRecord> episodes) {
  CsvTable csv;
  csv.header = {"policy", "tag", "k", "episode", "seed", "route_seed",
                "steps", "completion", "success", "event"};
  for (const auto& e : episodes) {
    csv.rows.push_back({e.policy, e.tag, std::to_string(e.k), std::to_string(e.episode),
                        std::to_string(e.seed), std::to_string(e.route_seed),
                        std::to_string(e.steps), fixed4(e.completion), e.success ? "1" : "0",
                        e.event});
  }
  return csv.to_text();
}

inline std::vector<EpisodeRecord> episodes_from_csv(const CsvTable& csv) {
  std::vector<EpisodeRecord> out;
  for (const auto& cells : csv.rows) {
    auto get = [&](const char* name) { return cells[csv.column(name)]; };
    EpisodeRecord e;
    e.policy = get("policy");
    e.tag = get("tag");
    e.k = parse_int(get("k"), "k");
    e.episode = parse_int(get("episode"), "episode");
    e.seed = std::stoull(get("seed"));
    e.route_seed = std::stoull(get("route_seed"));
    e.steps = parse_int(get("steps"), "steps");
    e.completion = parse_number(get("completion"), "completion");
    e.success = get("success") == "1";
    e.event = get("event");
    out.push_back(e);
  }
  return out;
}

}  // namespace factood
