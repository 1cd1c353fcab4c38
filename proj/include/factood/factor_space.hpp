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

// The five-axis environment space: scene x season x weather x time x agent.
//
// Configurations have a compact positional tag form, e.g. "RSuDDC" for
// rural / summer / dry / day / car. Season is the only two-letter field
// (Su, Sp); every other code is one letter, and because the fields are read
// in a fixed order the grammar is unambiguous.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factood/errors.hpp"

namespace factood {

enum class Axis : int { Scene = 0, Season, Weather, Time, Agent };

inline constexpr std::size_t kNumAxes = 5;
inline constexpr std::array<Axis, kNumAxes> kAllAxes = {
    Axis::Scene, Axis::Season, Axis::Weather, Axis::Time, Axis::Agent};

// Level order below is the canonical enumeration order.
enum class Scene : int { Rural = 0, Urban };
enum class Season : int { Summer = 0, Winter, Spring, Fall };
enum class Weather : int { Dry = 0, Rain, Snow };
enum class TimeOfDay : int { Day = 0, Night };
enum class Agent : int { Car = 0, Animal };

struct AxisInfo {
  std::string_view name;
  std::array<std::string_view, 4> levels;
  std::array<std::string_view, 4> codes;
  int cardinality;
};

inline constexpr std::array<AxisInfo, kNumAxes> kAxisInfo = {{
    {"scene", {"rural", "urban"}, {"R", "U"}, 2},
    {"season", {"summer", "winter", "spring", "fall"}, {"Su", "W", "Sp", "F"}, 4},
    {"weather", {"dry", "rain", "snow"}, {"D", "R", "S"}, 3},
    {"time", {"day", "night"}, {"D", "N"}, 2},
    {"agent", {"car", "animal"}, {"C", "A"}, 2},
}};

constexpr const AxisInfo& axis_info(Axis axis) {
  return kAxisInfo[static_cast<std::size_t>(axis)];
}

constexpr std::string_view axis_name(Axis axis) { return axis_info(axis).name; }

inline Axis parse_axis(std::string_view name) {
  for (Axis a : kAllAxes) {
    const auto n = axis_name(a);
    if (name.size() == n.size() &&
        std::equal(name.begin(), name.end(), n.begin(), [](char x, char y) {
          return std::tolower(static_cast<unsigned char>(x)) == y;
        })) {
      return a;
    }
  }
  throw ValidationError("unknown factor axis '" + std::string(name) + "'");
}

inline constexpr std::size_t kSpaceSize = 2 * 4 * 3 * 2 * 2;

struct EnvConfig {
  Scene scene = Scene::Rural;
  Season season = Season::Summer;
  Weather weather = Weather::Dry;
  TimeOfDay time = TimeOfDay::Day;
  Agent agent = Agent::Car;

  constexpr int level(Axis axis) const {
    switch (axis) {
      case Axis::Scene: return static_cast<int>(scene);
      case Axis::Season: return static_cast<int>(season);
      case Axis::Weather: return static_cast<int>(weather);
      case Axis::Time: return static_cast<int>(time);
      case Axis::Agent: return static_cast<int>(agent);
    }
    return 0;
  }

  constexpr EnvConfig with_level(Axis axis, int level) const {
    EnvConfig c = *this;
    switch (axis) {
      case Axis::Scene: c.scene = static_cast<Scene>(level); break;
      case Axis::Season: c.season = static_cast<Season>(level); break;
      case Axis::Weather: c.weather = static_cast<Weather>(level); break;
      case Axis::Time: c.time = static_cast<TimeOfDay>(level); break;
      case Axis::Agent: c.agent = static_cast<Agent>(level); break;
    }
    return c;
  }

  // Position in the canonical (lexicographic by axis) enumeration.
  constexpr std::size_t index() const {
    std::size_t i = 0;
    for (Axis a : kAllAxes) {
      i = i * static_cast<std::size_t>(axis_info(a).cardinality) +
          static_cast<std::size_t>(level(a));
    }
    return i;
  }

  static constexpr EnvConfig from_index(std::size_t index) {
    EnvConfig c;
    for (std::size_t n = kNumAxes; n-- > 0;) {
      const Axis a = kAllAxes[n];
      const auto card = static_cast<std::size_t>(axis_info(a).cardinality);
      c = c.with_level(a, static_cast<int>(index % card));
      index /= card;
    }
    return c;
  }

  constexpr bool operator==(const EnvConfig&) const = default;
  constexpr auto operator<=>(const EnvConfig& other) const {
    return index() <=> other.index();
  }
};

inline std::string level_name(const EnvConfig& c, Axis axis) {
  return std::string(axis_info(axis).levels[static_cast<std::size_t>(c.level(axis))]);
}

inline std::string format_tag(const EnvConfig& c) {
  std::string tag;
  for (Axis a : kAllAxes) {
    tag += axis_info(a).codes[static_cast<std::size_t>(c.level(a))];
  }
  return tag;
}

inline EnvConfig parse_tag(std::string_view tag) {
  EnvConfig c;
  std::size_t pos = 0;
  for (std::size_t field = 0; field < kNumAxes; ++field) {
    const Axis a = kAllAxes[field];
    const AxisInfo& info = axis_info(a);
    const int position = static_cast<int>(field) + 1;
    if (pos >= tag.size()) {
      throw DecodeError(position, "tag '" + std::string(tag) +
                                      "' is too short: missing " +
                                      std::string(info.name) + " code at position " +
                                      std::to_string(position));
    }
    int matched = -1;
    for (int l = 0; l < info.cardinality; ++l) {
      const auto code = info.codes[static_cast<std::size_t>(l)];
      if (tag.substr(pos, code.size()) == code) {
        matched = l;
        break;
      }
    }
    if (matched < 0) {
      throw DecodeError(position, "tag '" + std::string(tag) + "': unknown " +
                                      std::string(info.name) + " code at position " +
                                      std::to_string(position) + " (offset " +
                                      std::to_string(pos) + ")");
    }
    c = c.with_level(a, matched);
    pos += info.codes[static_cast<std::size_t>(matched)].size();
  }
  if (pos != tag.size()) {
    throw DecodeError(6, "tag '" + std::string(tag) +
                             "': trailing characters after position 5");
  }
  return c;
}

// Number of axes on which `a` and `b` differ.
constexpr int hamming(const EnvConfig& a, const EnvConfig& b) {
  int n = 0;
  for (Axis axis : kAllAxes) n += a.level(axis) != b.level(axis) ? 1 : 0;
  return n;
}

inline std::vector<EnvConfig> enumerate_space() {
  std::vector<EnvConfig> out;
  out.reserve(kSpaceSize);
  for (std::size_t i = 0; i < kSpaceSize; ++i) out.push_back(EnvConfig::from_index(i));
  return out;
}

// A non-empty duplicate-free set of configurations, kept in canonical order.
class IdSupport {
 public:
  IdSupport() = default;

  explicit IdSupport(std::span<const EnvConfig> members) {
    std::set<EnvConfig> seen;
    for (const auto& m : members) {
      if (!seen.insert(m).second) {
        throw ValidationError("duplicate support member " + format_tag(m));
      }
    }
    if (seen.empty()) throw ValidationError("ID support must not be empty");
    members_.assign(seen.begin(), seen.end());
  }

  IdSupport(std::initializer_list<EnvConfig> members)
      : IdSupport(std::span<const EnvConfig>(members.begin(), members.size())) {}

  static IdSupport from_tags(std::span<const std::string> tags) {
    std::vector<EnvConfig> members;
    for (const auto& t : tags) members.push_back(parse_tag(t));
    return IdSupport(members);
  }

  const std::vector<EnvConfig>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }

  bool contains(const EnvConfig& c) const {
    return std::binary_search(members_.begin(), members_.end(), c);
  }

  // Minimum Hamming distance from `c` to any member.
  int distance(const EnvConfig& c) const {
    int best = static_cast<int>(kNumAxes);
    for (const auto& m : members_) best = std::min(best, hamming(c, m));
    return best;
  }

  std::vector<std::string> tags() const {
    std::vector<std::string> out;
    for (const auto& m : members_) out.push_back(format_tag(m));
    return out;
  }

  bool operator==(const IdSupport&) const = default;

 private:
  std::vector<EnvConfig> members_;
};

// All configurations at minimum distance exactly k from the support, in
// canonical order. Shells k = 0..5 partition the space.
inline std::vector<EnvConfig> shell(const IdSupport& support, int k) {
  if (k < 0 || k > static_cast<int>(kNumAxes)) {
    throw ValidationError("shell distance must be in [0, 5], got " + std::to_string(k));
  }
  std::vector<EnvConfig> out;
  for (std::size_t i = 0; i < kSpaceSize; ++i) {
    const auto c = EnvConfig::from_index(i);
    if (support.distance(c) == k) out.push_back(c);
  }
  return out;
}

// Axes on which `to` differs from `from`, in axis order.
inline std::vector<Axis> changed_axes(const EnvConfig& from, const EnvConfig& to) {
  std::vector<Axis> out;
  for (Axis a : kAllAxes) {
    if (from.level(a) != to.level(a)) out.push_back(a);
  }
  return out;
}

inline std::vector<std::string> split_list(std::string_view text, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find(sep, start);
    const auto piece = text.substr(start, end == std::string_view::npos ? text.npos : end - start);
    if (!piece.empty()) out.emplace_back(piece);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline IdSupport parse_support(std::string_view comma_separated_tags) {
  const auto tags = split_list(comma_separated_tags);
  return IdSupport::from_tags(tags);
}

}  // namespace factood
