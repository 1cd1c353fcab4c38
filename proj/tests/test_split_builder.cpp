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

#include <filesystem>
#include <set>

#include "factood/split_builder.hpp"

namespace factood {
namespace {

TEST(SplitBuilder, BuildsRequestedShells) {
  const auto s = build_suite(parse_support("RSuDDC"), {0, 1, 2, 3}, 100, 42);
  EXPECT_EQ(s.shells.at(0).size(), 1u);
  EXPECT_EQ(s.shells.at(1).size(), 8u);
  EXPECT_EQ(s.shells.at(2).size(), 24u);
  EXPECT_EQ(s.shells.at(3).size(), 34u);
  EXPECT_EQ(s.rows().size(), 67u);
  EXPECT_EQ(s.route_pool, 100);
  EXPECT_TRUE(check_leakage(s).empty());
}

TEST(SplitBuilder, RejectsBadArguments) {
  EXPECT_THROW(build_suite(IdSupport{}, {1}, 10, 0), ValidationError);
  EXPECT_THROW(build_suite(parse_support("RSuDDC"), {1}, 0, 0), ValidationError);
  EXPECT_THROW(build_suite(parse_support("RSuDDC"), {4}, 10, 0), ValidationError);
  EXPECT_THROW(build_suite(parse_support("RSuDDC"), {-1}, 10, 0), ValidationError);
}

TEST(SplitBuilder, NoIdMemberInOodShells) {
  const auto sup = parse_support("RSuDDC,RSuDNC,USuDDC,UWSNA");
  const auto s = build_suite(sup, {0, 1, 2, 3}, 5, 1);
  for (const auto& [k, configs] : s.shells) {
    for (const auto& c : configs) {
      if (k > 0) {
        EXPECT_FALSE(sup.contains(c));
      }
      EXPECT_EQ(sup.distance(c), k);
    }
  }
  EXPECT_TRUE(check_leakage(s).empty());
}

TEST(SplitBuilder, DetectsInjectedLeaks) {
  auto s = build_suite(parse_support("RSuDDC"), {0, 1, 2}, 5, 1);
  s.shells[1].push_back(parse_tag("RSuDDC"));
  s.shells[2].push_back(parse_tag("USuDDC"));
  const auto leaks = check_leakage(s);
  // Each injected config is both misplaced and a duplicate of an earlier shell.
  ASSERT_EQ(leaks.size(), 4u);
  EXPECT_EQ(leaks[0].tag, "RSuDDC");
  EXPECT_EQ(leaks[0].k, 1);
  EXPECT_EQ(leaks[0].reason, "ID member appears in OOD shell");
  EXPECT_EQ(leaks[1].tag, "RSuDDC");
  EXPECT_EQ(leaks[2].tag, "USuDDC");
  EXPECT_EQ(leaks[2].reason, "distance 1 != shell 2");
  EXPECT_EQ(leaks[3].tag, "USuDDC");
  EXPECT_EQ(leaks[3].reason, "also listed in shell 1");
}

TEST(SplitBuilder, SeedsArePureFunctionsOfTheSuite) {
  const auto a = build_suite(parse_support("RSuDDC"), {0, 1}, 20, 7);
  const auto b = build_suite(parse_support("RSuDDC"), {0, 1}, 20, 7);
  const auto c = build_suite(parse_support("RSuDDC"), {0, 1}, 20, 8);
  const auto cfg = parse_tag("RSuDNC");
  std::set<std::uint64_t> seeds;
  for (int j = 0; j < 20; ++j) {
    EXPECT_EQ(a.episode_seed(cfg, j), b.episode_seed(cfg, j));
    EXPECT_NE(a.episode_seed(cfg, j), c.episode_seed(cfg, j));
    EXPECT_EQ(a.route_seed(j), c.route_seed(j));
    seeds.insert(a.episode_seed(cfg, j));
  }
  EXPECT_EQ(seeds.size(), 20u);
  EXPECT_NE(a.episode_seed(cfg, 0), a.episode_seed(parse_tag("RSuDDC"), 0));
}

TEST(SplitBuilder, SharedConfigsGetIdenticalSeedsAcrossSupports) {
  const auto a = build_suite(parse_support("RSuDDC"), {0, 1}, 10, 3, "shared");
  const auto b = build_suite(parse_support("RSuDDC,RSuDNC"), {0, 1}, 10, 3, "shared");
  const auto common = parse_tag("RSuDDA");
  for (int j = 0; j < 10; ++j) {
    EXPECT_EQ(a.episode_seed(common, j), b.episode_seed(common, j));
    EXPECT_EQ(a.route_seed(j), b.route_seed(j));
  }
}

TEST(SplitBuilder, RoutePoolWrapsEpisodes) {
  const auto s = build_suite(parse_support("RSuDDC"), {0}, 10, 3, "pool", 3);
  EXPECT_EQ(s.route_seed(0), s.route_seed(3));
  EXPECT_EQ(s.route_seed(1), s.route_seed(7));
  EXPECT_NE(s.route_seed(0), s.route_seed(1));
}

TEST(SplitBuilder, JsonRoundTrip) {
  const auto s = build_suite(parse_support("RSuDDC,UWRNA"), {0, 1, 3}, 12, 99, "rs", 4);
  EXPECT_EQ(suite_from_json(suite_to_json(s)), s);
  const auto path = (std::filesystem::temp_directory_path() / "factood_suite_rt.json").string();
  write_suite(path, s);
  EXPECT_EQ(read_suite(path), s);
  std::filesystem::remove(path);
}

TEST(SplitBuilder, MalformedJsonIsAValidationError) {
  EXPECT_THROW(suite_from_json(nlohmann::json::object()), ValidationError);
  auto j = suite_to_json(build_suite(parse_support("RSuDDC"), {0}, 2, 0));
  j["shells"]["0"] = {"RSuDDQ"};
  EXPECT_THROW(suite_from_json(j), ValidationError);
  j = suite_to_json(build_suite(parse_support("RSuDDC"), {0}, 2, 0));
  j["format"] = "other";
  EXPECT_THROW(suite_from_json(j), ValidationError);
}

TEST(SplitBuilder, StratifyGroupsMembersByLevel) {
  const auto parts = stratify(parse_support("RSuDDC,RSuDNC,USuDDC"), Axis::Time);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts.at(0).size(), 2u);
  EXPECT_EQ(parts.at(1).size(), 1u);
  EXPECT_THROW(stratify(IdSupport{}, Axis::Time), ValidationError);
}

}  // namespace
}  // namespace factood
