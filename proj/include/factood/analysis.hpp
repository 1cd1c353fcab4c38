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

// Drops relative to an ID baseline, per-k curves, themed aggregation,
// interaction classification and paired statistics.
//
// All accuracies and drops are in percentage points.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "factood/errors.hpp"
#include "factood/factor_space.hpp"
#include "factood/random.hpp"
#include "factood/rollout_eval.hpp"
#include "factood/table_io.hpp"

namespace factood {

// Tag "*" marks an aggregate row (e.g. a published per-level mean) that has
// no single configuration behind it.
inline constexpr const char* kAggregateTag = "*";

struct AccuracyRow {
  std::string policy;
  std::string tag;
  int k = 0;
  double value = 0.0;
};

struct AccuracyTable {
  std::vector<AccuracyRow> rows;

  std::vector<std::string> policies() const {
    std::vector<std::string> out;
    for (const auto& r : rows) {
      if (std::find(out.begin(), out.end(), r.policy) == out.end()) out.push_back(r.policy);
    }
    return out;
  }
};

enum class Metric { Success, Completion };

inline Metric parse_metric(std::string_view s) {
  if (s == "success") return Metric::Success;
  if (s == "completion") return Metric::Completion;
  throw ValidationError("unknown metric '" + std::string(s) + "' (expected success or completion)");
}

inline AccuracyTable accuracy_table(const EvalTable& t, Metric metric = Metric::Success) {
  AccuracyTable out;
  for (const auto& r : t.rows) {
    const double v = metric == Metric::Success ? r.success : r.completion_mean;
    out.rows.push_back({r.policy, r.tag, r.k, 100.0 * v});
  }
  return out;
}

// Accepts either an EvalTable file or a fixture with columns
// policy,tag,k,value (value already in percent).
inline AccuracyTable accuracy_table(const CsvTable& csv, Metric metric = Metric::Success) {
  if (csv.has_column("success")) return accuracy_table(eval_table_from_csv(csv), metric);
  AccuracyTable out;
  const auto cp = csv.column("policy"), ct = csv.column("tag"), ck = csv.column("k"),
             cv = csv.column("value");
  for (const auto& cells : csv.rows) {
    if (cells[ct] != kAggregateTag) parse_tag(cells[ct]);
    out.rows.push_back({cells[cp], cells[ct], parse_int(cells[ck], "k"),
                        parse_number(cells[cv], "value")});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Drops

struct DropRow {
  std::string policy;
  std::string tag;
  int k = 0;
  double value = 0.0;
  double drop = 0.0;
};

struct LevelMean {
  std::string policy;
  int k = 0;
  int n = 0;
  double mean_value = 0.0;
  double mean_drop = 0.0;
};

enum class Interaction { SubAdditive, Additive, SuperAdditive };

inline std::string interaction_name(Interaction i) {
  switch (i) {
    case Interaction::SubAdditive: return "sub_additive";
    case Interaction::Additive: return "additive";
    case Interaction::SuperAdditive: return "super_additive";
  }
  return "?";
}

// One shift from a source configuration to a target. Source and target are
// tags; `axes` lists the axes on which they differ, in canonical order.
struct ShiftRecord {
  std::string policy;
  std::string from;
  std::string to;
  std::vector<Axis> axes;
  double drop = 0.0;
};

struct InteractionRecord {
  std::string policy;
  std::string from;
  std::string to;
  std::vector<Axis> axes;
  double combo = 0.0;
  std::vector<double> singles;
  Interaction kind = Interaction::Additive;
};

struct DropReport {
  std::string baseline;
  std::vector<DropRow> rows;
  std::vector<LevelMean> per_k;
  std::vector<ShiftRecord> shifts;
  std::vector<InteractionRecord> interactions;
};

inline Interaction classify_interaction(std::span<const double> singles, double combo,
                                        double tol = 1.0) {
  if (singles.empty()) throw ValidationError("classify_interaction needs at least one single drop");
  if (!(tol >= 0.0)) throw ValidationError("interaction tolerance must be >= 0");
  std::vector<double> sorted(singles.begin(), singles.end());
  std::sort(sorted.begin(), sorted.end());
  const double sum = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  if (combo < sum - tol) return Interaction::SubAdditive;
  if (combo > sum + tol) return Interaction::SuperAdditive;
  return Interaction::Additive;
}

inline std::string axes_label(const std::vector<Axis>& axes) {
  std::string out;
  for (Axis a : axes) out += (out.empty() ? "" : "+") + std::string(axis_name(a));
  return out;
}

inline std::vector<Axis> parse_axes(std::string_view text) {
  std::string normalized(text);
  std::replace(normalized.begin(), normalized.end(), '+', ',');
  std::vector<Axis> out;
  for (const auto& piece : split_list(normalized)) out.push_back(parse_axis(piece));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw ValidationError("empty axis set");
  return out;
}

// Unweighted per-k means of the raw values, no baseline required.
inline std::vector<LevelMean> per_k_means(const AccuracyTable& t) {
  std::map<std::pair<std::string, int>, std::pair<int, double>> acc;
  for (const auto& r : t.rows) {
    auto& [n, s] = acc[{r.policy, r.k}];
    ++n;
    s += r.value;
  }
  std::vector<LevelMean> out;
  for (const auto& policy : t.policies()) {
    for (const auto& [key, ns] : acc) {
      if (key.first != policy) continue;
      out.push_back({policy, key.second, ns.first, ns.second / ns.first, 0.0});
    }
  }
  return out;
}

// Baseline per policy is the row tagged `baseline_tag`, or the policy's
// single k = 0 row when `baseline_tag` is empty.
inline DropReport drops(const AccuracyTable& t, const std::string& baseline_tag, double tol = 1.0) {
  DropReport rep;
  rep.baseline = baseline_tag;
  for (const auto& policy : t.policies()) {
    const AccuracyRow* base = nullptr;
    for (const auto& r : t.rows) {
      if (r.policy != policy) continue;
      const bool hit = baseline_tag.empty() ? r.k == 0 : r.tag == baseline_tag;
      if (!hit) continue;
      if (base != nullptr) throw ValidationError("policy " + policy + " has more than one baseline row");
      base = &r;
    }
    if (base == nullptr) {
      throw ValidationError("policy " + policy + " has no baseline row" +
                            (baseline_tag.empty() ? " (k = 0)" : " for " + baseline_tag));
    }
    std::map<int, std::pair<int, std::pair<double, double>>> levels;
    std::map<std::string, double> by_tag;
    for (const auto& r : t.rows) {
      if (r.policy != policy) continue;
      const double d = base->value - r.value;
      rep.rows.push_back({policy, r.tag, r.k, r.value, d});
      auto& [n, sums] = levels[r.k];
      ++n;
      sums.first += r.value;
      sums.second += d;
      by_tag[r.tag] = d;
      if (r.tag != kAggregateTag && base->tag != kAggregateTag && &r != base) {
        const EnvConfig from = parse_tag(base->tag), to = parse_tag(r.tag);
        rep.shifts.push_back({policy, base->tag, r.tag, changed_axes(from, to), d});
      }
    }
    for (const auto& [k, v] : levels) {
      rep.per_k.push_back({policy, k, v.first, v.second.first / v.first, v.second.second / v.first});
    }
    // Multi-axis shifts whose single-axis components were also measured.
    if (base->tag == kAggregateTag) continue;
    const EnvConfig from = parse_tag(base->tag);
    for (const auto& s : rep.shifts) {
      if (s.policy != policy || s.axes.size() < 2) continue;
      const EnvConfig to = parse_tag(s.to);
      std::vector<double> singles;
      for (Axis a : s.axes) {
        const auto it = by_tag.find(format_tag(from.with_level(a, to.level(a))));
        if (it == by_tag.end()) break;
        singles.push_back(it->second);
      }
      if (singles.size() != s.axes.size()) continue;
      rep.interactions.push_back({policy, s.from, s.to, s.axes, s.drop, singles,
                                  classify_interaction(singles, s.drop, tol)});
    }
  }
  return rep;
}

// Shift fixtures: columns policy,from,to,drop.
inline DropReport shift_report(const CsvTable& csv) {
  DropReport rep;
  const auto cp = csv.column("policy"), cf = csv.column("from"), ct = csv.column("to"),
             cd = csv.column("drop");
  for (const auto& cells : csv.rows) {
    const EnvConfig from = parse_tag(cells[cf]), to = parse_tag(cells[ct]);
    rep.shifts.push_back({cells[cp], cells[cf], cells[ct], changed_axes(from, to),
                          parse_number(cells[cd], "drop")});
  }
  return rep;
}

struct ThemeAggregate {
  std::vector<Axis> theme;
  std::vector<ShiftRecord> members;
  std::optional<double> mean_drop;
};

inline ThemeAggregate theme_aggregate(const DropReport& rep, std::vector<Axis> theme) {
  std::sort(theme.begin(), theme.end());
  theme.erase(std::unique(theme.begin(), theme.end()), theme.end());
  ThemeAggregate agg;
  agg.theme = theme;
  double sum = 0.0;
  for (const auto& s : rep.shifts) {
    if (s.axes != theme) continue;
    agg.members.push_back(s);
    sum += s.drop;
  }
  if (!agg.members.empty()) agg.mean_drop = sum / static_cast<double>(agg.members.size());
  return agg;
}

// Every theme present in the report, ordered by axis set.
inline std::vector<ThemeAggregate> all_themes(const DropReport& rep) {
  std::set<std::vector<Axis>> themes;
  for (const auto& s : rep.shifts) {
    if (!s.axes.empty()) themes.insert(s.axes);
  }
  std::vector<ThemeAggregate> out;
  for (const auto& th : themes) out.push_back(theme_aggregate(rep, th));
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

inline constexpr int kPairedResamples = 10000;
inline constexpr std::uint64_t kPairedSeed = 0x5eed0f11ab1e5ULL;

// Two-sided sign-flip permutation test on paired differences.
inline double paired_test(std::span<const double> a, std::span<const double> b,
                          int resamples = kPairedResamples, std::uint64_t seed = kPairedSeed) {
  if (a.size() != b.size()) {
    throw ValidationError("paired_test needs equal lengths, got " + std::to_string(a.size()) +
                          " and " + std::to_string(b.size()));
  }
  if (resamples < 1) throw ValidationError("paired_test needs at least one resample");
  std::vector<double> d(a.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d[i] = a[i] - b[i];
    scale += std::abs(d[i]);
  }
  const double observed = std::abs(std::accumulate(d.begin(), d.end(), 0.0));
  const double eps = 1e-12 * std::max(scale, 1.0);
  Rng rng(seed);
  long hits = 0;
  for (int r = 0; r < resamples; ++r) {
    double s = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (i % 64 == 0) bits = rng.bits();
      s += (bits & 1U) ? d[i] : -d[i];
      bits >>= 1U;
    }
    if (std::abs(s) >= observed - eps) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(resamples + 1);
}

inline std::vector<bool> holm(std::span<const double> p, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
  for (double v : p) {
    if (!(v > 0.0 && v <= 1.0)) throw ValidationError("p-values must be in (0, 1]");
  }
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return p[x] < p[y]; });
  std::vector<bool> reject(p.size(), false);
  const auto m = static_cast<double>(p.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (p[order[i]] > alpha / (m - static_cast<double>(i))) break;
    reject[order[i]] = true;
  }
  return reject;
}

// ---------------------------------------------------------------------------
// Tables

inline std::string drops_to_csv(const DropReport& rep) {
  CsvTable csv;
  csv.header = {"policy", "tag", "k", "value", "drop"};
  for (const auto& r : rep.rows) {
    csv.rows.push_back({r.policy, r.tag, std::to_string(r.k), fixed4(r.value), fixed4(r.drop)});
  }
  return csv.to_text();
}

inline std::string per_k_to_csv(std::span<const LevelMean> levels, bool with_drop = true) {
  CsvTable csv;
  csv.header = {"policy", "k", "n", "mean_value"};
  if (with_drop) csv.header.push_back("mean_drop");
  for (const auto& l : levels) {
    std::vector<std::string> row{l.policy, std::to_string(l.k), std::to_string(l.n), fixed4(l.mean_value)};
    if (with_drop) row.push_back(fixed4(l.mean_drop));
    csv.rows.push_back(std::move(row));
  }
  return csv.to_text();
}

inline std::string interactions_to_csv(const DropReport& rep) {
  CsvTable csv;
  csv.header = {"policy", "from", "to", "axes", "combo", "singles_sum", "class"};
  for (const auto& r : rep.interactions) {
    std::vector<double> s = r.singles;
    std::sort(s.begin(), s.end());
    csv.rows.push_back({r.policy, r.from, r.to, axes_label(r.axes), fixed4(r.combo),
                        fixed4(std::accumulate(s.begin(), s.end(), 0.0)), interaction_name(r.kind)});
  }
  return csv.to_text();
}

// One row per member shift plus a "mean" row per theme.
inline std::string themes_to_csv(std::span<const ThemeAggregate> themes) {
  CsvTable csv;
  csv.header = {"theme", "policy", "from", "to", "drop"};
  for (const auto& th : themes) {
    const auto label = axes_label(th.theme);
    for (const auto& m : th.members) csv.rows.push_back({label, m.policy, m.from, m.to, fixed4(m.drop)});
    if (th.mean_drop) csv.rows.push_back({label, "mean", "", "", fixed4(*th.mean_drop)});
  }
  return csv.to_text();
}

}  // namespace factood
