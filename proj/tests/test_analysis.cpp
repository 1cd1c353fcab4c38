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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "factood/analysis.hpp"

namespace factood {
namespace {

const std::string kFixtures = FACTOOD_FIXTURES;

AccuracyTable only(const AccuracyTable& t, const std::string& policy) {
  AccuracyTable out;
  for (const auto& r : t.rows) {
    if (r.policy == policy) out.rows.push_back(r);
  }
  return out;
}

const LevelMean& level(const std::vector<LevelMean>& v, const std::string& policy, int k) {
  for (const auto& l : v) {
    if (l.policy == policy && l.k == k) return l;
  }
  throw std::runtime_error("missing level");
}

TEST(Analysis, PerLevelFixtureValues) {
  const auto t = accuracy_table(read_csv(kFixtures + "/per_k_fm.csv"));
  const auto levels = per_k_means(t);
  EXPECT_DOUBLE_EQ(level(levels, "DINO+ViT", 1).mean_value, 86.20);
  EXPECT_DOUBLE_EQ(level(levels, "DINO+ViT", 2).mean_value, 81.86);
  EXPECT_DOUBLE_EQ(level(levels, "DINO+ViT", 3).mean_value, 85.33);
  EXPECT_DOUBLE_EQ(level(levels, "BLIP+ViT", 3).mean_value, 89.82);
  EXPECT_EQ(t.policies().size(), 5u);
}

TEST(Analysis, PerLevelDropsAgainstBaseline) {
  const auto t = accuracy_table(read_csv(kFixtures + "/per_k_fm.csv"));
  const auto rep = drops(only(t, "Pass+ViT"), "");
  EXPECT_NEAR(level(rep.per_k, "Pass+ViT", 1).mean_drop, 36.72, 1e-9);
  EXPECT_NEAR(level(rep.per_k, "Pass+ViT", 3).mean_drop, 50.57, 1e-9);
  EXPECT_TRUE(rep.shifts.empty());
  EXPECT_TRUE(rep.interactions.empty());
  EXPECT_THROW(drops(only(t, "DINO+ViT"), ""), ValidationError);
}

TEST(Analysis, ThemesFilterByExactAxisSet) {
  const auto rep = shift_report(read_csv(kFixtures + "/stage1_shifts.csv"));
  EXPECT_DOUBLE_EQ(*theme_aggregate(rep, {Axis::Scene}).mean_drop, 31.15);
  EXPECT_DOUBLE_EQ(*theme_aggregate(rep, {Axis::Weather}).mean_drop, 6.86);
  EXPECT_DOUBLE_EQ(*theme_aggregate(rep, {Axis::Agent}).mean_drop, 10.27);
  EXPECT_DOUBLE_EQ(*theme_aggregate(rep, {Axis::Time}).mean_drop, (31.00 + 67.40) / 2.0);
  EXPECT_EQ(theme_aggregate(rep, {Axis::Season}).members.size(), 3u);
  const auto st = theme_aggregate(rep, {Axis::Time, Axis::Scene});
  ASSERT_EQ(st.members.size(), 1u);
  EXPECT_DOUBLE_EQ(*st.mean_drop, 28.63);
  EXPECT_FALSE(theme_aggregate(rep, {Axis::Scene, Axis::Weather}).mean_drop);
  EXPECT_EQ(all_themes(rep).size(), 8u);
}

TEST(Analysis, FixtureInteractions) {
  const std::vector<double> scene_time{31.15, 31.00};
  EXPECT_EQ(classify_interaction(scene_time, 28.63), Interaction::SubAdditive);
  const std::vector<double> season_time{15.23, 31.00};
  EXPECT_EQ(classify_interaction(season_time, 81.02), Interaction::SuperAdditive);
  EXPECT_EQ(classify_interaction(scene_time, 62.15), Interaction::Additive);
  EXPECT_EQ(classify_interaction(scene_time, 62.15 + 1.0), Interaction::Additive);
  EXPECT_EQ(classify_interaction(scene_time, 62.15 + 1.01), Interaction::SuperAdditive);
  EXPECT_THROW(classify_interaction(std::vector<double>{}, 1.0), ValidationError);
}

TEST(Analysis, ClassificationIgnoresSingleOrder) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 40.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s{u(gen), u(gen), u(gen)};
    const double combo = u(gen) * 3.0;
    const auto kind = classify_interaction(s, combo, 0.5);
    std::sort(s.begin(), s.end());
    do {
      EXPECT_EQ(classify_interaction(s, combo, 0.5), kind);
    } while (std::next_permutation(s.begin(), s.end()));
  }
}

TEST(Analysis, DropsFindInteractionsFromMeasuredSingles) {
  AccuracyTable t;
  t.rows = {{"p", "RSuDDC", 0, 100.0}, {"p", "USuDDC", 1, 70.0}, {"p", "RSuDNC", 1, 60.0},
            {"p", "USuDNC", 2, 50.0},  {"p", "UWSNC", 3, 10.0}};
  const auto rep = drops(t, "RSuDDC");
  ASSERT_EQ(rep.shifts.size(), 4u);
  ASSERT_EQ(rep.interactions.size(), 1u);
  const auto& i = rep.interactions[0];
  EXPECT_EQ(i.to, "USuDNC");
  EXPECT_EQ(i.axes, (std::vector<Axis>{Axis::Scene, Axis::Time}));
  EXPECT_DOUBLE_EQ(i.combo, 50.0);
  EXPECT_EQ(i.kind, Interaction::SubAdditive);
  EXPECT_DOUBLE_EQ(level(rep.per_k, "p", 1).mean_drop, 35.0);
  EXPECT_EQ(rep.rows.size(), 5u);
  EXPECT_THROW(drops(t, "UFSNA"), ValidationError);
}

TEST(Analysis, DuplicateBaselineIsRejected) {
  AccuracyTable t;
  t.rows = {{"p", "RSuDDC", 0, 100.0}, {"p", "RSuDNC", 0, 90.0}};
  EXPECT_THROW(drops(t, ""), ValidationError);
  EXPECT_NO_THROW(drops(t, "RSuDNC"));
}

TEST(Analysis, AxesParsing) {
  EXPECT_EQ(parse_axes("time+scene"), (std::vector<Axis>{Axis::Scene, Axis::Time}));
  EXPECT_EQ(parse_axes("scene,time"), parse_axes("time+scene"));
  EXPECT_EQ(axes_label(parse_axes("time+scene")), "scene+time");
  EXPECT_THROW(parse_axes(""), ValidationError);
  EXPECT_THROW(parse_axes("colour"), ValidationError);
}

TEST(Analysis, PairedTestBasics) {
  const std::vector<double> a{0.5, 0.7, 0.9, 0.1, 0.3, 0.6, 0.4, 0.8, 0.2, 1.0};
  EXPECT_DOUBLE_EQ(paired_test(a, a), 1.0);
  std::vector<double> b = a;
  for (auto& x : b) x -= 0.3;
  // All ten differences share a sign: only the two all-same flips reach it.
  EXPECT_LT(paired_test(a, b), 0.01);
  EXPECT_DOUBLE_EQ(paired_test(a, b), paired_test(b, a));
  EXPECT_EQ(paired_test(a, b), paired_test(a, b));
  EXPECT_THROW(paired_test(a, std::vector<double>{1.0}), ValidationError);
}

TEST(Analysis, PairedTestLargeShiftIsTiny) {
  std::vector<double> a(40), b(40);
  for (int i = 0; i < 40; ++i) {
    a[i] = 0.5 + 0.01 * (i % 7);
    b[i] = a[i] - 1.0;
  }
  EXPECT_LE(paired_test(a, b), 0.001);
  EXPECT_DOUBLE_EQ(paired_test(a, b), 1.0 / 10001.0);
}

TEST(Analysis, HolmHandExample) {
  const std::vector<double> p{0.04, 0.01, 0.03};
  EXPECT_EQ(holm(p, 0.05), (std::vector<bool>{false, true, false}));
  EXPECT_EQ(holm(std::vector<double>{0.049}, 0.05), (std::vector<bool>{true}));
  EXPECT_EQ(holm(std::vector<double>{0.01, 0.02, 0.03}, 0.1), (std::vector<bool>(3, true)));
  EXPECT_THROW(holm(std::vector<double>{0.0}, 0.05), ValidationError);
  EXPECT_THROW(holm(std::vector<double>{0.5}, 1.0), ValidationError);
  EXPECT_TRUE(holm(std::vector<double>{}, 0.05).empty());
}

TEST(Analysis, HolmSitsBetweenBonferroniAndUncorrected) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(1e-6, 0.2);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 1 + gen() % 15;
    std::vector<double> p(m);
    for (auto& x : p) x = u(gen);
    const auto h = holm(p, 0.05);
    for (std::size_t i = 0; i < m; ++i) {
      const bool bonf = p[i] <= 0.05 / static_cast<double>(m);
      const bool raw = p[i] <= 0.05;
      EXPECT_TRUE(!bonf || h[i]);
      EXPECT_TRUE(!h[i] || raw);
    }
  }
}

TEST(Analysis, CsvWritersHaveStableHeaders) {
  AccuracyTable t;
  t.rows = {{"p", "RSuDDC", 0, 100.0}, {"p", "USuDDC", 1, 70.0}, {"p", "RSuDNC", 1, 60.0},
            {"p", "USuDNC", 2, 50.0}};
  const auto rep = drops(t, "RSuDDC");
  EXPECT_EQ(drops_to_csv(rep).substr(0, 24), "policy,tag,k,value,drop\n");
  EXPECT_EQ(interactions_to_csv(rep),
            "policy,from,to,axes,combo,singles_sum,class\n"
            "p,RSuDDC,USuDNC,scene+time,50.0000,70.0000,sub_additive\n");
  const auto themes = all_themes(rep);
  EXPECT_NE(themes_to_csv(themes).find("scene,mean,,,30.0000"), std::string::npos);
}

TEST(Analysis, EvalTablesUseSuccessOrCompletion) {
  EvalTable e;
  EvalRow r;
  r.policy = "p";
  r.tag = "RSuDDC";
  r.n = 10;
  r.success = 0.7;
  r.completion_mean = 0.85;
  e.rows.push_back(r);
  EXPECT_DOUBLE_EQ(accuracy_table(e).rows[0].value, 70.0);
  EXPECT_DOUBLE_EQ(accuracy_table(e, Metric::Completion).rows[0].value, 85.0);
  EXPECT_THROW(parse_metric("reward"), ValidationError);
}

}  // namespace
}  // namespace factood
