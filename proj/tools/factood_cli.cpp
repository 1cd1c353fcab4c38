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

// factood: command-line front end.
//
// Exit status: 0 success, 1 validation error (bad flags, bad input files),
// 2 runtime failure.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "factood/analysis.hpp"
#include "factood/errors.hpp"
#include "factood/factor_space.hpp"
#include "factood/policies.hpp"
#include "factood/rollout_eval.hpp"
#include "factood/split_builder.hpp"
#include "factood/study_harness.hpp"
#include "factood/table_io.hpp"
#include "factood/trainer.hpp"

namespace {

using namespace factood;

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

std::set<int> parse_ks(const std::string& text) {
  std::set<int> ks;
  for (const auto& piece : split_list(text)) ks.insert(parse_int(piece, "k"));
  return ks;
}

struct Flags {
  // shared
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
  // space / shell / suite
  std::string support;
  int k = 1;
  std::string ks = "0,1,2,3";
  int episodes = 100;
  std::string route_set = "default";
  int route_pool = 0;
  std::string suite;
  // demos / train
  int traces = 5;
  int frames = 1;
  int stride = 1;
  std::string demos;
  std::string kind = "linear";
  std::size_t hidden = 0;
  std::uint64_t encoder_seed = 1;
  double lr = 1e-3;
  int max_epochs = 200;
  int patience = 10;
  int batch_size = 64;
  double val_fraction = 0.2;
  double steer_weight = 1.0;
  double throttle_weight = 1.0;
  std::string log;
  // eval
  std::string policy;
  bool expert = false;
  std::string id;
  std::string episodes_out;
  std::string log_dir;
  bool time = false;
  std::optional<std::uint64_t> noise_seed;
  // analyze
  std::string table;
  std::string baseline;
  std::string metric = "success";
  std::string per_k_out;
  std::string theme;
  std::string singles;
  double combo = 0.0;
  double tol = 1.0;
  std::string episodes_a;
  std::string episodes_b;
  std::string p_values;
  double alpha = 0.05;
  int resamples = kPairedResamples;
  // study / report
  std::string spec;
  std::string study_dir;
};

void cmd_space_enumerate(const Flags& f) {
  std::string text;
  for (const auto& c : enumerate_space()) text += format_tag(c) + "\n";
  emit(text, f.out);
}

void cmd_shell(const Flags& f) {
  const auto members = shell(parse_support(f.support), f.k);
  std::vector<std::string> tags;
  for (const auto& c : members) tags.push_back(format_tag(c));
  std::sort(tags.begin(), tags.end());
  std::string text;
  for (const auto& t : tags) text += t + "\n";
  emit(text, f.out);
}

void cmd_suite_build(const Flags& f) {
  const auto suite = build_suite(parse_support(f.support), parse_ks(f.ks), f.episodes, f.seed,
                                 f.route_set, f.route_pool);
  emit(suite_to_text(suite), f.out);
}

int cmd_suite_check(const Flags& f) {
  const auto leaks = check_leakage(read_suite(f.suite));
  if (leaks.empty()) {
    std::cout << "OK\n";
    return 0;
  }
  for (const auto& v : leaks) std::cout << "LEAK " << v.tag << " k=" << v.k << ": " << v.reason << "\n";
  return 1;
}

void cmd_demos(const Flags& f) {
  const auto data = collect_demos(parse_support(f.support), f.traces, {f.frames, f.stride}, f.seed);
  if (f.out.empty()) throw ValidationError("demos collect needs --out");
  write_demos(f.out, data);
  std::cerr << "collected " << data.samples.size() << " samples from " << data.trace_count
            << " traces\n";
}

void cmd_train(const Flags& f) {
  if (f.out.empty()) throw ValidationError("train needs --out");
  const DemoDataset data = read_demos(f.demos);
  PolicyOptions po;
  po.hidden = f.hidden;
  po.encoder_seed = f.encoder_seed;
  const Policy init = fit_normalizer(
      make_policy(parse_kind(f.kind), data.clip, derive_seed(f.seed, "init", f.kind, 0), po), data);
  TrainConfig cfg;
  cfg.learning_rate = f.lr;
  cfg.max_epochs = f.max_epochs;
  cfg.patience = f.patience;
  cfg.batch_size = f.batch_size;
  cfg.validation_fraction = f.val_fraction;
  cfg.seed = f.seed;
  const LossWeights w{f.steer_weight, f.throttle_weight};
  const TrainResult res = train(init, data, cfg, w);
  write_policy(f.out, res.policy);
  const std::string log = train_log_to_text(res.log, cfg.to_json(w));
  if (!f.log.empty()) write_text(f.log, log);
  std::cerr << "best validation loss " << res.log.best_val << " at step " << res.log.best_step
            << "\n";
}

void cmd_eval(const Flags& f) {
  const TestSuite suite = read_suite(f.suite);
  EvalOptions eo;
  eo.jobs = f.jobs;
  eo.measure_time = f.time;
  eo.log_dir = f.log_dir;
  std::optional<NoiseSalt> salt;
  if (f.noise_seed) salt = NoiseSalt{*f.noise_seed};
  Evaluation ev;
  if (f.expert) {
    ev = evaluate(ExpertDriver(), f.id.empty() ? "expert" : f.id, suite, eo, salt);
  } else {
    if (f.policy.empty()) throw ValidationError("eval needs --policy or --expert");
    const Policy p = read_policy(f.policy);
    ev = evaluate(PolicyDriver(p), f.id.empty() ? kind_name(p.kind) : f.id, suite, eo, salt);
  }
  emit(eval_table_to_csv(ev.table), f.out);
  if (!f.episodes_out.empty()) write_text(f.episodes_out, episodes_to_csv(ev.episodes));
}

void cmd_analyze_drops(const Flags& f) {
  const auto acc = accuracy_table(read_csv(f.table), parse_metric(f.metric));
  const auto rep = drops(acc, f.baseline, f.tol);
  emit(drops_to_csv(rep), f.out);
  if (!f.per_k_out.empty()) write_text(f.per_k_out, per_k_to_csv(rep.per_k));
}

// A table with from/to columns is a shift fixture; otherwise drops are
// computed against --baseline first.
DropReport load_shifts(const Flags& f) {
  const auto csv = read_csv(f.table);
  if (csv.has_column("from")) return shift_report(csv);
  return drops(accuracy_table(csv, parse_metric(f.metric)), f.baseline, f.tol);
}

void cmd_analyze_themes(const Flags& f) {
  const DropReport rep = load_shifts(f);
  std::vector<ThemeAggregate> themes;
  if (f.theme.empty()) {
    themes = all_themes(rep);
  } else {
    themes.push_back(theme_aggregate(rep, parse_axes(f.theme)));
  }
  emit(themes_to_csv(themes), f.out);
}

void cmd_analyze_interactions(const Flags& f) {
  if (!f.singles.empty()) {
    const auto singles = parse_number_list(f.singles, "--singles");
    std::cout << interaction_name(classify_interaction(singles, f.combo, f.tol)) << "\n";
    return;
  }
  if (f.table.empty()) throw ValidationError("analyze interactions needs --singles/--combo or --table");
  emit(interactions_to_csv(load_shifts(f)), f.out);
}

void cmd_analyze_stats(const Flags& f) {
  if (!f.p_values.empty()) {
    const auto p = parse_number_list(f.p_values, "--p-values");
    const auto reject = holm(p, f.alpha);
    CsvTable csv;
    csv.header = {"index", "p", "reject"};
    for (std::size_t i = 0; i < p.size(); ++i) {
      csv.rows.push_back({std::to_string(i), fixed4(p[i]), reject[i] ? "1" : "0"});
    }
    emit(csv.to_text(), f.out);
    return;
  }
  if (f.episodes_a.empty() || f.episodes_b.empty()) {
    throw ValidationError("analyze stats needs --a and --b episode tables, or --p-values");
  }
  const auto a = episodes_from_csv(read_csv(f.episodes_a));
  const auto b = episodes_from_csv(read_csv(f.episodes_b));
  const bool success = parse_metric(f.metric) == Metric::Success;
  std::map<std::string, std::map<int, const EpisodeRecord*>> by_tag;
  for (const auto& e : b) by_tag[e.tag][e.episode] = &e;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> paired;
  std::vector<std::string> order;
  for (const auto& e : a) {
    const auto t = by_tag.find(e.tag);
    if (t == by_tag.end() || !t->second.count(e.episode)) {
      throw ValidationError("episode " + e.tag + "#" + std::to_string(e.episode) + " has no partner");
    }
    const EpisodeRecord& o = *t->second.at(e.episode);
    if (o.route_seed != e.route_seed) {
      throw ValidationError("episode " + e.tag + "#" + std::to_string(e.episode) +
                            " was driven on different routes");
    }
    if (!paired.count(e.tag)) order.push_back(e.tag);
    auto& [xa, xb] = paired[e.tag];
    xa.push_back(success ? (e.success ? 1.0 : 0.0) : e.completion);
    xb.push_back(success ? (o.success ? 1.0 : 0.0) : o.completion);
  }
  std::vector<double> ps;
  for (const auto& tag : order) {
    const auto& [xa, xb] = paired[tag];
    ps.push_back(paired_test(xa, xb, f.resamples, f.seed == 0 ? kPairedSeed : f.seed));
  }
  const auto reject = ps.empty() ? std::vector<bool>{} : holm(ps, f.alpha);
  CsvTable csv;
  csv.header = {"tag", "n", "mean_a", "mean_b", "p", "reject_holm"};
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& [xa, xb] = paired[order[i]];
    const auto mean = [](const std::vector<double>& v) {
      return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    csv.rows.push_back({order[i], std::to_string(xa.size()), fixed4(mean(xa)), fixed4(mean(xb)),
                        fixed4(ps[i]), reject[i] ? "1" : "0"});
  }
  emit(csv.to_text(), f.out);
}

int cmd_study_run(const Flags& f, bool seed_given) {
  StudySpec s = read_study(f.spec);
  if (seed_given) s.seed = f.seed;
  if (f.out.empty()) throw ValidationError("study run needs --out <dir>");
  StudyOptions so;
  so.jobs = f.jobs;
  so.measure_time = f.time;
  const auto res = run_study(s, f.out, so);
  int failed = 0;
  for (const auto& p : res.points) {
    std::cout << p.id << " " << p.status << "\n";
    failed += p.status == "ok" ? 0 : 1;
  }
  return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  Flags f;
  CLI::App app{"factood: factorized OOD evaluation for imitation driving policies"};
  app.require_subcommand(1);
  std::function<int()> action;
  auto set_action = [&](CLI::App* cmd, std::function<int()> fn) {
    cmd->callback([&action, fn] { action = fn; });
  };
  auto seed_opt = [&](CLI::App* cmd) { return cmd->add_option("--seed", f.seed, "Random seed"); };

  // space enumerate
  auto* space = app.add_subcommand("space", "Factor space queries");
  space->require_subcommand(1);
  auto* enumerate = space->add_subcommand("enumerate", "List all configuration tags in canonical order");
  enumerate->add_option("--out", f.out, "Output file (default stdout)");
  set_action(enumerate, [&] { cmd_space_enumerate(f); return 0; });

  // shell
  auto* shell_cmd = app.add_subcommand("shell", "List the k-factor shell of a support");
  shell_cmd->add_option("--support", f.support, "Comma-separated ID tags")->required();
  shell_cmd->add_option("--k", f.k, "Number of changed factors (0..5)")->required();
  shell_cmd->add_option("--out", f.out, "Output file (default stdout)");
  set_action(shell_cmd, [&] { cmd_shell(f); return 0; });

  // suite build|check
  auto* suite = app.add_subcommand("suite", "Evaluation suites");
  suite->require_subcommand(1);
  auto* build = suite->add_subcommand("build", "Build a matched-budget suite");
  build->add_option("--support", f.support, "Comma-separated ID tags")->required();
  build->add_option("--ks", f.ks, "Comma-separated shell levels (0..3)");
  build->add_option("--episodes", f.episodes, "Episodes per configuration");
  build->add_option("--route-set", f.route_set, "Route set identifier");
  build->add_option("--route-pool", f.route_pool, "Distinct routes (default: episodes)");
  build->add_option("--out", f.out, "Output file (default stdout)");
  seed_opt(build);
  set_action(build, [&] { cmd_suite_build(f); return 0; });
  auto* check = suite->add_subcommand("check", "Check a suite for ID leakage");
  check->add_option("--suite", f.suite, "Suite file")->required();
  set_action(check, [&] { return cmd_suite_check(f); });

  // demos collect
  auto* demos = app.add_subcommand("demos", "Expert demonstrations");
  demos->require_subcommand(1);
  auto* collect = demos->add_subcommand("collect", "Collect expert traces on a support");
  collect->add_option("--support", f.support, "Comma-separated ID tags")->required();
  collect->add_option("--traces", f.traces, "Traces per configuration");
  collect->add_option("--frames", f.frames, "Clip frames T");
  collect->add_option("--stride", f.stride, "Clip stride");
  collect->add_option("--out", f.out, "Output JSONL file")->required();
  seed_opt(collect);
  set_action(collect, [&] { cmd_demos(f); return 0; });

  // train
  auto* train_cmd = app.add_subcommand("train", "Fit a policy to demonstrations");
  train_cmd->add_option("--demos", f.demos, "Demonstrations file")->required();
  train_cmd->add_option("--kind", f.kind, "linear | mlp | frozen_encoder_head | recurrent");
  train_cmd->add_option("--hidden", f.hidden, "Hidden width (0 = kind default)");
  train_cmd->add_option("--encoder-seed", f.encoder_seed, "Frozen encoder seed");
  train_cmd->add_option("--lr", f.lr, "Learning rate (1e-3 or 1e-4)");
  train_cmd->add_option("--max-epochs", f.max_epochs, "Epoch cap");
  train_cmd->add_option("--patience", f.patience, "Early-stop patience in validation checks");
  train_cmd->add_option("--batch-size", f.batch_size, "Minibatch size");
  train_cmd->add_option("--val-fraction", f.val_fraction, "Fraction of traces held out");
  train_cmd->add_option("--steer-weight", f.steer_weight, "Loss weight on steering");
  train_cmd->add_option("--throttle-weight", f.throttle_weight, "Loss weight on throttle");
  train_cmd->add_option("--out", f.out, "Policy checkpoint")->required();
  train_cmd->add_option("--log", f.log, "Training manifest output");
  seed_opt(train_cmd);
  set_action(train_cmd, [&] { cmd_train(f); return 0; });

  // eval
  auto* eval = app.add_subcommand("eval", "Closed-loop evaluation over a suite");
  eval->add_option("--suite", f.suite, "Suite file")->required();
  eval->add_option("--policy", f.policy, "Policy checkpoint");
  eval->add_flag("--expert", f.expert, "Evaluate the privileged expert");
  eval->add_option("--id", f.id, "Policy id written to the table");
  eval->add_option("--out", f.out, "EvalTable output (default stdout)");
  eval->add_option("--episodes-out", f.episodes_out, "Per-episode table output");
  eval->add_option("--log-dir", f.log_dir, "Directory for per-step JSONL logs");
  eval->add_flag("--time", f.time, "Measure predict wall time");
  eval->add_option("--jobs", f.jobs, "Parallel episode workers")->check(CLI::PositiveNumber);
  eval->add_option("--seed", f.noise_seed, "Re-draw observation noise with this salt");
  set_action(eval, [&] { cmd_eval(f); return 0; });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Drops, themes, interactions and statistics");
  analyze->require_subcommand(1);
  auto* a_drops = analyze->add_subcommand("drops", "Drops relative to the ID baseline");
  a_drops->add_option("--table", f.table, "EvalTable or accuracy fixture")->required();
  a_drops->add_option("--baseline", f.baseline, "Baseline tag (default: the k=0 row)");
  a_drops->add_option("--metric", f.metric, "success | completion");
  a_drops->add_option("--per-k-out", f.per_k_out, "Per-k means output");
  a_drops->add_option("--out", f.out, "Output (default stdout)");
  set_action(a_drops, [&] { cmd_analyze_drops(f); return 0; });
  auto* a_themes = analyze->add_subcommand("themes", "Themed aggregation of shifts");
  a_themes->add_option("--table", f.table, "Shift fixture or EvalTable")->required();
  a_themes->add_option("--baseline", f.baseline, "Baseline tag for EvalTables");
  a_themes->add_option("--theme", f.theme, "Axes, e.g. scene+time (default: all themes)");
  a_themes->add_option("--metric", f.metric, "success | completion");
  a_themes->add_option("--out", f.out, "Output (default stdout)");
  set_action(a_themes, [&] { cmd_analyze_themes(f); return 0; });
  auto* a_inter = analyze->add_subcommand("interactions", "Additivity of combined shifts");
  a_inter->add_option("--singles", f.singles, "Comma-separated single-factor drops");
  a_inter->add_option("--combo", f.combo, "Drop of the combined shift");
  a_inter->add_option("--tol", f.tol, "Tolerance in percentage points");
  a_inter->add_option("--table", f.table, "EvalTable (with --baseline)");
  a_inter->add_option("--baseline", f.baseline, "Baseline tag");
  a_inter->add_option("--metric", f.metric, "success | completion");
  a_inter->add_option("--out", f.out, "Output (default stdout)");
  set_action(a_inter, [&] { cmd_analyze_interactions(f); return 0; });
  auto* a_stats = analyze->add_subcommand("stats", "Paired tests with Holm correction");
  a_stats->add_option("--a", f.episodes_a, "Per-episode table of policy A");
  a_stats->add_option("--b", f.episodes_b, "Per-episode table of policy B");
  a_stats->add_option("--metric", f.metric, "success | completion");
  a_stats->add_option("--p-values", f.p_values, "Apply Holm to these p-values instead");
  a_stats->add_option("--alpha", f.alpha, "Family-wise level");
  a_stats->add_option("--resamples", f.resamples, "Sign-flip resamples");
  a_stats->add_option("--out", f.out, "Output (default stdout)");
  seed_opt(a_stats);
  set_action(a_stats, [&] { cmd_analyze_stats(f); return 0; });

  // study run
  auto* study = app.add_subcommand("study", "Study recipes");
  study->require_subcommand(1);
  auto* run = study->add_subcommand("run", "Run a study recipe or replay a manifest");
  run->add_option("spec", f.spec, "Recipe or manifest file")->required();
  run->add_option("--out", f.out, "Output directory")->required();
  run->add_option("--jobs", f.jobs, "Parallel workers")->check(CLI::PositiveNumber);
  run->add_flag("--time", f.time, "Measure predict wall time");
  auto* study_seed = seed_opt(run);
  set_action(run, [&] { return cmd_study_run(f, study_seed->count() > 0); });

  // report emit
  auto* report = app.add_subcommand("report", "Reports");
  report->require_subcommand(1);
  auto* report_emit = report->add_subcommand("emit", "Merge a study's tables for plotting");
  report_emit->add_option("--study", f.study_dir, "Study output directory")->required();
  report_emit->add_option("--out", f.out, "Report directory")->required();
  set_action(report_emit, [&] { emit_report(f.study_dir, f.out); return 0; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    return action ? action() : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
}
