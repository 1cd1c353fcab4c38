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

// Declarative study recipes: a grid of (policy, support, trace budget)
// points, each collected, trained, evaluated and analysed the same way.
//
// Recipe format (JSON, "factood-study/1"):
//
//   {
//     "format": "factood-study/1",
//     "id": "S1",
//     "seed": 17,
//     "policies": [{"name": "mlp", "kind": "mlp", "frames": 1, "stride": 1,
//                   "hidden": 32, "encoder_seed": 1}],
//     "supports": [["RSuDDC"]],
//     "traces": [5],
//     "ks": [0, 1, 2],
//     "episodes": 20,
//     "metric": "success",
//     "train": {"learning_rate": 0.001, "max_epochs": 30, ...},
//     "loss": {"steer": 1.0, "throttle": 1.0}
//   }
//
// Only "id", "policies", "supports" and "traces" are required.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "factood/analysis.hpp"
#include "factood/errors.hpp"
#include "factood/factor_space.hpp"
#include "factood/policies.hpp"
#include "factood/random.hpp"
#include "factood/rollout_eval.hpp"
#include "factood/split_builder.hpp"
#include "factood/trainer.hpp"

namespace factood {

struct PolicySpec {
  std::string name;
  PolicyKind kind = PolicyKind::Linear;
  ClipSpec clip{1, 1};
  std::size_t hidden = 0;
  std::optional<std::uint64_t> encoder_seed;
};

struct StudySpec {
  std::string id;
  std::uint64_t seed = 0;
  std::vector<PolicySpec> policies;
  // Tags as written in the recipe; the first one is the drop baseline.
  std::vector<std::vector<std::string>> supports;
  std::vector<int> traces;
  std::set<int> ks{0, 1};
  int episodes = 20;
  int route_pool = 0;
  Metric metric = Metric::Success;
  TrainConfig train;
  LossWeights loss;
  double interaction_tol = 1.0;
};

inline constexpr const char* kStudyIds[] = {"S1", "S2", "S3", "S4", "S5"};

inline void validate(const StudySpec& s) {
  if (std::find(std::begin(kStudyIds), std::end(kStudyIds), s.id) == std::end(kStudyIds)) {
    throw ValidationError("study id must be one of S1..S5, got '" + s.id + "'");
  }
  if (s.policies.empty()) throw ValidationError("study needs at least one policy");
  if (s.supports.empty()) throw ValidationError("study needs at least one support");
  if (s.traces.empty()) throw ValidationError("study needs at least one trace budget");
  std::set<std::string> names;
  for (const auto& p : s.policies) {
    if (p.name.empty()) throw ValidationError("policy entries need a name");
    if (!names.insert(p.name).second) throw ValidationError("duplicate policy name " + p.name);
    p.clip.validate();
  }
  for (const auto& sup : s.supports) {
    if (sup.empty()) throw ValidationError("study supports must be non-empty");
    for (const auto& t : sup) parse_tag(t);
  }
  for (int t : s.traces) {
    if (t < 1) throw ValidationError("trace budgets must be >= 1");
  }
  for (int k : s.ks) {
    if (k < 0 || k > kMaxSuiteK) throw ValidationError("study ks must lie in [0, 3]");
  }
  if (s.episodes < 1) throw ValidationError("episodes must be >= 1");
  s.train.validate();
  s.loss.validate();
}

inline nlohmann::json study_to_json(const StudySpec& s) {
  nlohmann::json j;
  j["format"] = "factood-study/1";
  j["id"] = s.id;
  j["seed"] = s.seed;
  nlohmann::json pols = nlohmann::json::array();
  for (const auto& p : s.policies) {
    nlohmann::json pj{{"name", p.name},         {"kind", kind_name(p.kind)},
                      {"frames", p.clip.frames}, {"stride", p.clip.stride},
                      {"hidden", p.hidden}};
    if (p.encoder_seed) pj["encoder_seed"] = *p.encoder_seed;
    pols.push_back(pj);
  }
  j["policies"] = pols;
  j["supports"] = s.supports;
  j["traces"] = s.traces;
  j["ks"] = s.ks;
  j["episodes"] = s.episodes;
  j["route_pool"] = s.route_pool;
  j["metric"] = s.metric == Metric::Success ? "success" : "completion";
  j["train"] = {{"learning_rate", s.train.learning_rate},
                {"max_epochs", s.train.max_epochs},
                {"patience", s.train.patience},
                {"validation_fraction", s.train.validation_fraction},
                {"batch_size", s.train.batch_size},
                {"validation_interval", s.train.validation_interval}};
  j["loss"] = {{"steer", s.loss.steer}, {"throttle", s.loss.throttle}};
  j["interaction_tol"] = s.interaction_tol;
  return j;
}

inline StudySpec study_from_json(const nlohmann::json& j) {
  try {
    if (j.contains("format") && j.at("format") != "factood-study/1") {
      throw ValidationError("unsupported study format " + j.at("format").dump());
    }
    StudySpec s;
    s.id = j.at("id").get<std::string>();
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& pj : j.at("policies")) {
      PolicySpec p;
      p.kind = parse_kind(pj.at("kind").get<std::string>());
      p.name = pj.value("name", kind_name(p.kind));
      p.clip = {pj.value("frames", 1), pj.value("stride", 1)};
      p.hidden = pj.value("hidden", std::size_t{0});
      if (pj.contains("encoder_seed")) p.encoder_seed = pj.at("encoder_seed").get<std::uint64_t>();
      s.policies.push_back(p);
    }
    s.supports = j.at("supports").get<std::vector<std::vector<std::string>>>();
    s.traces = j.at("traces").get<std::vector<int>>();
    if (j.contains("ks")) s.ks = j.at("ks").get<std::set<int>>();
    s.episodes = j.value("episodes", s.episodes);
    s.route_pool = j.value("route_pool", 0);
    s.metric = parse_metric(j.value("metric", std::string("success")));
    if (j.contains("train")) {
      const auto& t = j.at("train");
      s.train.learning_rate = t.value("learning_rate", s.train.learning_rate);
      s.train.max_epochs = t.value("max_epochs", s.train.max_epochs);
      s.train.patience = t.value("patience", s.train.patience);
      s.train.validation_fraction = t.value("validation_fraction", s.train.validation_fraction);
      s.train.batch_size = t.value("batch_size", s.train.batch_size);
      s.train.validation_interval = t.value("validation_interval", s.train.validation_interval);
    }
    if (j.contains("loss")) {
      s.loss.steer = j.at("loss").value("steer", 1.0);
      s.loss.throttle = j.at("loss").value("throttle", 1.0);
    }
    s.interaction_tol = j.value("interaction_tol", 1.0);
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed study recipe: ") + e.what());
  }
}

// A manifest embeds the recipe, so either file can drive a run.
inline StudySpec read_study(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open study file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("study file " + path + " is not valid JSON: " + e.what());
  }
  if (j.value("format", std::string()) == "factood-manifest/1") return study_from_json(j.at("study"));
  return study_from_json(j);
}

inline std::string support_key(const std::vector<std::string>& tags) {
  std::string out;
  for (const auto& t : tags) out += (out.empty() ? "" : "-") + t;
  return out;
}

struct GridPoint {
  std::string id;
  const PolicySpec* policy = nullptr;
  std::size_t support_index = 0;
  int traces = 0;
};

inline std::vector<GridPoint> grid(const StudySpec& s) {
  std::vector<GridPoint> out;
  for (const auto& p : s.policies) {
    for (std::size_t i = 0; i < s.supports.size(); ++i) {
      for (int t : s.traces) {
        out.push_back({p.name + "__" + support_key(s.supports[i]) + "__t" + std::to_string(t), &p, i, t});
      }
    }
  }
  return out;
}

struct PointResult {
  std::string id;
  std::string status = "ok";
  std::string train_digest;
  std::uint64_t demo_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t train_seed = 0;
  EvalTable table;
};

struct StudyResult {
  std::vector<TestSuite> suites;  // one per support
  std::vector<PointResult> points;
};

struct StudyOptions {
  int jobs = 1;
  bool measure_time = false;
};

// Suites share one seed base and route set, so a configuration common to two
// supports is driven on identical (route, seed) pairs.
inline TestSuite study_suite(const StudySpec& s, std::size_t support_index) {
  std::set<int> ks = s.ks;
  ks.insert(0);
  return build_suite(IdSupport::from_tags(s.supports[support_index]), ks, s.episodes,
                     derive_seed(s.seed, "suite", s.id, 0), "study-" + s.id, s.route_pool);
}

inline void run_point(const StudySpec& s, const GridPoint& g, const TestSuite& suite,
                      const std::filesystem::path& dir, int eval_jobs, bool measure_time,
                      PointResult& out) {
  const auto& ps = *g.policy;
  const auto& tags = s.supports[g.support_index];
  out.demo_seed = derive_seed(s.seed, "demos", support_key(tags), 0);
  out.init_seed = derive_seed(s.seed, "init", ps.name, 0);
  out.train_seed = derive_seed(s.seed, "train", g.id, 0);

  const DemoDataset data = collect_demos(suite.id_support, g.traces, ps.clip, out.demo_seed);
  PolicyOptions po;
  po.hidden = ps.hidden;
  if (ps.encoder_seed) po.encoder_seed = *ps.encoder_seed;
  const Policy init = fit_normalizer(make_policy(ps.kind, ps.clip, out.init_seed, po), data);
  TrainConfig cfg = s.train;
  cfg.seed = out.train_seed;
  const TrainResult trained = train(init, data, cfg, s.loss);
  out.train_digest = trained.log.digest;

  EvalOptions eo;
  eo.jobs = eval_jobs;
  eo.measure_time = measure_time;
  const Evaluation ev = evaluate(PolicyDriver(trained.policy), g.id, suite, eo);
  out.table = ev.table;

  const DropReport rep = drops(accuracy_table(ev.table, s.metric), tags.front(), s.interaction_tol);
  std::filesystem::create_directories(dir);
  write_policy((dir / "policy.json").string(), trained.policy);
  write_text((dir / "train_log.txt").string(), train_log_to_text(trained.log, cfg.to_json(s.loss)));
  write_text((dir / "eval.csv").string(), eval_table_to_csv(ev.table));
  write_text((dir / "episodes.csv").string(), episodes_to_csv(ev.episodes));
  write_text((dir / "drops.csv").string(), drops_to_csv(rep));
  write_text((dir / "per_k.csv").string(), per_k_to_csv(rep.per_k));
  write_text((dir / "interactions.csv").string(), interactions_to_csv(rep));
}

// Failed points are recorded in the manifest; the rest still run.
inline StudyResult run_study(const StudySpec& s, const std::string& out_dir,
                             const StudyOptions& opts = {}) {
  validate(s);
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "suites");

  StudyResult res;
  for (std::size_t i = 0; i < s.supports.size(); ++i) {
    res.suites.push_back(study_suite(s, i));
    write_suite((root / "suites" / (support_key(s.supports[i]) + ".json")).string(), res.suites.back());
  }

  const auto points = grid(s);
  res.points.resize(points.size());
  const int jobs = std::max(1, opts.jobs);
  const int workers = std::min<int>(jobs, static_cast<int>(points.size()));
  const int eval_jobs = std::max(1, jobs / std::max(workers, 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      auto& pr = res.points[i];
      pr.id = points[i].id;
      try {
        run_point(s, points[i], res.suites[points[i].support_index], root / "points" / pr.id,
                  eval_jobs, opts.measure_time, pr);
      } catch (const std::exception& e) {
        pr.status = std::string("failed: ") + e.what();
        pr.table = {};
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  EvalTable all;
  for (const auto& pr : res.points) {
    all.rows.insert(all.rows.end(), pr.table.rows.begin(), pr.table.rows.end());
  }
  write_text((root / "eval_all.csv").string(), eval_table_to_csv(all));

  nlohmann::json m;
  m["format"] = "factood-manifest/1";
  m["study"] = study_to_json(s);
  nlohmann::json suites = nlohmann::json::object();
  for (std::size_t i = 0; i < res.suites.size(); ++i) {
    suites[support_key(s.supports[i])] = {{"seed_base", res.suites[i].seed_base},
                                          {"route_set", res.suites[i].route_set_id},
                                          {"route_pool", res.suites[i].route_pool}};
  }
  m["suites"] = suites;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& pr : res.points) {
    pts.push_back({{"id", pr.id},
                   {"status", pr.status},
                   {"demo_seed", pr.demo_seed},
                   {"init_seed", pr.init_seed},
                   {"train_seed", pr.train_seed},
                   {"train_digest", pr.train_digest}});
  }
  m["points"] = pts;
  write_text((root / "manifest.json").string(), m.dump(2) + "\n");
  return res;
}

// Merges the per-point tables of a finished study into combined drops,
// per-k, interaction and theme tables plus a short markdown summary.
inline void emit_report(const std::string& study_dir, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path root(study_dir);
  const fs::path manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("no manifest.json in " + study_dir);
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest is not valid JSON: " + std::string(e.what()));
  }
  if (m.value("format", std::string()) != "factood-manifest/1") {
    throw ValidationError(manifest_path.string() + " is not a study manifest");
  }
  const StudySpec spec = study_from_json(m.at("study"));
  std::map<std::string, std::string> status;
  for (const auto& pj : m.at("points")) status[pj.at("id")] = pj.at("status");

  DropReport all;
  std::ostringstream md;
  md << "# Study " << spec.id << "\n\n";
  md << "| point | k | n | mean " << (spec.metric == Metric::Success ? "success" : "completion")
     << " (%) | mean drop |\n|---|---|---|---|---|\n";
  int failed = 0;
  for (const auto& g : grid(spec)) {
    const auto it = status.find(g.id);
    if (it == status.end() || it->second != "ok") {
      ++failed;
      continue;
    }
    const auto table = read_csv((root / "points" / g.id / "eval.csv").string());
    const DropReport rep = drops(accuracy_table(table, spec.metric),
                                 spec.supports[g.support_index].front(), spec.interaction_tol);
    all.rows.insert(all.rows.end(), rep.rows.begin(), rep.rows.end());
    all.per_k.insert(all.per_k.end(), rep.per_k.begin(), rep.per_k.end());
    all.shifts.insert(all.shifts.end(), rep.shifts.begin(), rep.shifts.end());
    all.interactions.insert(all.interactions.end(), rep.interactions.begin(), rep.interactions.end());
    for (const auto& l : rep.per_k) {
      md << "| " << g.id << " | " << l.k << " | " << l.n << " | " << fixed4(l.mean_value) << " | "
         << fixed4(l.mean_drop) << " |\n";
    }
  }
  if (failed > 0) md << "\n" << failed << " grid point(s) failed; see manifest.json.\n";
  const auto themes = all_themes(all);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  write_text((out / "drops.csv").string(), drops_to_csv(all));
  write_text((out / "per_k.csv").string(), per_k_to_csv(all.per_k));
  write_text((out / "interactions.csv").string(), interactions_to_csv(all));
  write_text((out / "themes.csv").string(), themes_to_csv(themes));
  write_text((out / "report.md").string(), md.str());
}

}  // namespace factood
