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

// Desk-scale closed-loop lane keeping.
//
// The vehicle is a kinematic point in the road's Frenet frame: arc position
// u, lateral offset d (left positive), heading error psi and speed v. Routes
// are piecewise-constant curvature with static obstacles. What the policy
// sees is a 29-value feature vector whose statistics depend on the
// environment configuration; the dynamics only depend on the route.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "factood/factor_space.hpp"
#include "factood/random.hpp"

namespace factood {

// Every invented constant of the simulator, observation model and expert.
struct SimParams {
  // Kinematics and protocol.
  double dt = 1.0 / 30.0;
  int horizon = 200;
  double lane_half_width = 2.0;
  double v_max = 15.0;
  double a_max = 4.0;
  double v_init = 10.0;
  double max_steer = 0.2;

  // Routes.
  double route_length = 160.0;
  double segment_length = 20.0;
  double kappa_max = 0.03;
  double kappa_std_rural = 0.005;
  double kappa_std_urban = 0.010;
  double obstacle_spacing_rural = 120.0;  // mean; urban uses half
  double obstacle_min_gap = 50.0;
  double obstacle_first = 35.0;
  double obstacle_lateral_min = 0.3;
  double obstacle_lateral_max = 0.9;
  double collision_longitudinal = 2.0;
  double collision_lateral = 1.0;

  // Expert.
  double k_d = 0.05;
  double k_psi = 0.5;
  double lookahead = 8.0;
  double v_ref = 10.0;
  double v_ref_obstacle = 4.0;
  double slow_zone = 15.0;
  double avoid_offset = 1.2;
  double avoid_ahead = 40.0;
  double avoid_behind = 5.0;
  double k_v = 0.5;

  // Observation model.
  double ray_spacing = 1.5;
  double ray_step = 0.5;
  double sigma_day = 0.02;
  double sigma_night = 0.15;
  double gain_night = 0.35;
  double sigma_rain_extra = 0.05;
  double sigma_snow_extra = 0.12;
  double gain_snow = 0.6;
  double season_amplitude = 0.1;
  double clutter_amplitude = 0.4;
  double clutter_kappa_gain = 8.0;
  double clutter_noise_urban = 0.02;
  double clutter_noise_rural = 0.01;
  double obstacle_range = 30.0;
  double width_car = 1.0;
  double width_animal = 0.35;
  double animal_sway = 0.3;
  double animal_sway_hz = 0.8;

  double route_min_length() const { return v_max * horizon * dt; }

  // Ray noise level and gain for a configuration.
  double ray_sigma(const EnvConfig& c) const {
    double s = c.time == TimeOfDay::Night ? sigma_night : sigma_day;
    if (c.weather == Weather::Rain) s += sigma_rain_extra;
    if (c.weather == Weather::Snow) s += sigma_snow_extra;
    return s;
  }
  double ray_gain(const EnvConfig& c) const {
    double g = c.time == TimeOfDay::Night ? gain_night : 1.0;
    if (c.weather == Weather::Snow) g *= gain_snow;
    return g;
  }
};

inline const SimParams& default_sim_params() {
  static const SimParams params;
  return params;
}

struct Obstacle {
  double u = 0.0;
  double d = 0.0;
  // Placeholder until the episode re-skins it with the config's agent level.
  Agent kind = Agent::Car;

  bool operator==(const Obstacle&) const = default;
};

struct Route {
  double length = 0.0;
  double segment_length = 20.0;
  std::vector<double> curvature;  // one value per segment
  double lane_half_width = 2.0;
  std::vector<Obstacle> obstacles;  // sorted by u

  double kappa(double u) const {
    if (curvature.empty()) return 0.0;
    const auto n = static_cast<long>(curvature.size());
    long i = static_cast<long>(std::floor(u / segment_length));
    i = std::clamp(i, 0L, n - 1);
    return curvature[static_cast<std::size_t>(i)];
  }

  bool operator==(const Route&) const = default;
};

inline Route generate_route(std::uint64_t seed, Scene scene,
                            const SimParams& p = default_sim_params()) {
  Rng rng(mix64(seed ^ stable_hash("route-geometry")));
  const bool urban = scene == Scene::Urban;
  Route r;
  r.length = std::max(p.route_length, p.route_min_length());
  r.segment_length = p.segment_length;
  r.lane_half_width = p.lane_half_width;
  const double kstd = urban ? p.kappa_std_urban : p.kappa_std_rural;
  const auto segments = static_cast<std::size_t>(std::ceil(r.length / r.segment_length));
  for (std::size_t i = 0; i < segments; ++i) {
    r.curvature.push_back(std::clamp(rng.normal(0.0, kstd), -p.kappa_max, p.kappa_max));
  }
  const double spacing = urban ? 0.5 * p.obstacle_spacing_rural : p.obstacle_spacing_rural;
  const double extra = std::max(spacing - p.obstacle_min_gap, 0.0);
  double u = p.obstacle_first + rng.exponential(extra);
  while (u < r.length - p.obstacle_min_gap) {
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double offset = rng.uniform(p.obstacle_lateral_min, p.obstacle_lateral_max);
    r.obstacles.push_back({u, side * offset, Agent::Car});
    u += p.obstacle_min_gap + rng.exponential(extra);
  }
  return r;
}

inline Route reskin(Route route, Agent agent) {
  for (auto& o : route.obstacles) o.kind = agent;
  return route;
}

struct EpisodeState {
  double u = 0.0;
  double d = 0.0;
  double psi = 0.0;
  double v = 0.0;
  int step_index = 0;
  bool terminated = false;
  Rng rng;

  static EpisodeState start(std::uint64_t seed, const SimParams& p = default_sim_params()) {
    EpisodeState s;
    s.v = p.v_init;
    s.rng = Rng(mix64(seed ^ stable_hash("episode-noise")));
    return s;
  }

  bool operator==(const EpisodeState&) const = default;
};

struct Controls {
  double steer = 0.0;     // curvature command, 1/m
  double throttle = 0.0;  // [-1, 1]

  Controls clipped(const SimParams& p = default_sim_params()) const {
    auto clip = [](double x, double lim) {
      if (!std::isfinite(x)) return 0.0;
      return std::clamp(x, -lim, lim);
    };
    return {clip(steer, p.max_steer), clip(throttle, 1.0)};
  }

  bool operator==(const Controls&) const = default;
};

enum Event : std::uint8_t {
  kNoEvent = 0,
  kCollision = 1 << 0,
  kOutOfLane = 1 << 1,
  kOffRoad = 1 << 2,
  kStability = 1 << 3,
};
using EventSet = std::uint8_t;

inline constexpr std::array<Event, 4> kAllEvents = {kCollision, kOutOfLane, kOffRoad,
                                                    kStability};

inline std::string event_name(Event e) {
  switch (e) {
    case kCollision: return "collision";
    case kOutOfLane: return "out_of_lane";
    case kOffRoad: return "off_road";
    case kStability: return "stability";
    default: return "none";
  }
}

// The event that terminates an episode when several fire in one step.
inline Event primary_event(EventSet events) {
  for (Event e : {kCollision, kOffRoad, kOutOfLane, kStability}) {
    if (events & e) return e;
  }
  return kNoEvent;
}

struct StepResult {
  EpisodeState state;
  EventSet events = kNoEvent;
};

inline EventSet detect_events(const EpisodeState& s, const Route& route,
                              const SimParams& p = default_sim_params()) {
  EventSet ev = kNoEvent;
  const double hw = route.lane_half_width;
  if (std::abs(s.d) > hw) ev |= kOutOfLane;
  if (std::abs(s.d) > 2.0 * hw) ev |= kOffRoad;
  if (std::abs(s.psi) > std::numbers::pi / 2) ev |= kStability;
  for (const auto& o : route.obstacles) {
    if (std::abs(s.u - o.u) < p.collision_longitudinal &&
        std::abs(s.d - o.d) < p.collision_lateral) {
      ev |= kCollision;
      break;
    }
  }
  return ev;
}

inline StepResult step(const EpisodeState& state, const Route& route, const Controls& c,
                       double dt, const SimParams& p = default_sim_params()) {
  if (state.terminated) throw std::logic_error("step() called on a terminated episode");
  if (!(std::abs(c.steer) <= p.max_steer) || !(std::abs(c.throttle) <= 1.0)) {
    throw std::logic_error("controls out of bounds");
  }
  StepResult r{state, kNoEvent};
  EpisodeState& s = r.state;
  const double kappa = route.kappa(s.u);
  s.v = std::clamp(s.v + c.throttle * p.a_max * dt, 0.0, p.v_max);
  s.psi += s.v * (c.steer - kappa) * dt;
  s.d += s.v * std::sin(s.psi) * dt;
  s.u += s.v * std::cos(s.psi) * dt;
  s.step_index += 1;
  r.events = detect_events(s, route, p);
  if (r.events != kNoEvent) s.terminated = true;
  return r;
}

// ---------------------------------------------------------------------------
// Observations

inline constexpr std::size_t kRayCount = 16;
inline constexpr std::size_t kObstacleDim = 4;
inline constexpr std::size_t kClutterDim = 8;
inline constexpr std::size_t kObsDim = kRayCount + kObstacleDim + kClutterDim + 1;

struct Observation {
  std::array<double, kObsDim> values{};

  std::span<const double> rays() const { return {values.data(), kRayCount}; }
  std::span<const double> obstacle() const { return {values.data() + kRayCount, kObstacleDim}; }
  std::span<const double> clutter() const {
    return {values.data() + kRayCount + kObstacleDim, kClutterDim};
  }
  double speed() const { return values[kObsDim - 1]; }

  bool operator==(const Observation&) const = default;
};

// Rows 1..4 of the 16x16 Sylvester-Hadamard matrix: mutually orthogonal
// +/-1 patterns, one per season.
inline double season_pattern(Season season, std::size_t i) {
  const auto row = static_cast<unsigned>(season) + 1U;
  return (std::popcount(row & static_cast<unsigned>(i)) % 2 == 0) ? 1.0 : -1.0;
}

// Lateral position (in lane half-widths, ego frame, left positive) of the
// centerline at the 16 lookahead arc distances.
inline std::array<double, kRayCount> centerline_rays(const EpisodeState& s, const Route& route,
                                                     const SimParams& p) {
  std::array<double, kRayCount> out{};
  double y = -s.d * std::cos(s.psi);
  double heading = -s.psi;
  double arc = 0.0;
  const double h = p.ray_step;
  for (std::size_t j = 0; j < kRayCount; ++j) {
    const double target = p.ray_spacing * static_cast<double>(j + 1);
    while (arc + 1e-9 < target) {
      heading += route.kappa(s.u + arc + 0.5 * h) * h;
      y += h * std::sin(heading);
      arc += h;
    }
    out[j] = y / route.lane_half_width;
  }
  return out;
}

// Nearest obstacle between slightly behind and `obstacle_range` ahead.
inline const Obstacle* upcoming_obstacle(const EpisodeState& s, const Route& route,
                                         double behind, double ahead) {
  for (const auto& o : route.obstacles) {
    const double du = o.u - s.u;
    if (du >= -behind && du <= ahead) return &o;
  }
  return nullptr;
}

inline Observation observe(EpisodeState& s, const Route& route, const EnvConfig& config,
                           const SimParams& p = default_sim_params()) {
  Observation obs;
  auto& v = obs.values;

  // Rays: gain * (geometry + season pattern) + noise.
  const auto geom = centerline_rays(s, route, p);
  const double gain = p.ray_gain(config);
  const double sigma = p.ray_sigma(config);
  for (std::size_t i = 0; i < kRayCount; ++i) {
    const double bias = p.season_amplitude * season_pattern(config.season, i);
    v[i] = gain * (geom[i] + bias) + sigma * s.rng.normal();
  }

  // Obstacle channel: proximity, apparent lateral offset, width, sway.
  if (const Obstacle* o = upcoming_obstacle(s, route, p.collision_longitudinal, p.obstacle_range)) {
    const double du = o->u - s.u;
    double sway = 0.0;
    double width = p.width_car;
    if (config.agent == Agent::Animal) {
      const double t = s.step_index * p.dt;
      sway = std::sin(2.0 * std::numbers::pi * p.animal_sway_hz * t + o->u);
      width = p.width_animal;
    }
    const double seen_d = o->d + p.animal_sway * sway;
    v[kRayCount + 0] = 1.0 - std::max(du, 0.0) / p.obstacle_range;
    v[kRayCount + 1] = (seen_d - s.d) / route.lane_half_width;
    v[kRayCount + 2] = width;
    v[kRayCount + 3] = sway;
  }

  // Clutter: structured distractors in urban scenes, near zero otherwise.
  const std::size_t base = kRayCount + kObstacleDim;
  for (std::size_t i = 0; i < kClutterDim; ++i) {
    const double noise = s.rng.normal();
    if (config.scene == Scene::Urban) {
      const double di = static_cast<double>(i);
      v[base + i] = p.clutter_amplitude * std::sin(0.9 * di + 0.2 * s.u) +
                    p.clutter_kappa_gain * route.kappa(s.u + 3.0 * di) +
                    p.clutter_noise_urban * noise;
    } else {
      v[base + i] = p.clutter_noise_rural * noise;
    }
  }

  v[kObsDim - 1] = s.v / p.v_max;
  return obs;
}

// ---------------------------------------------------------------------------
// Privileged expert (reads the true state; used for demonstrations).

inline Controls expert_controls(const EpisodeState& s, const Route& route,
                                const SimParams& p = default_sim_params()) {
  double target = 0.0;
  if (const Obstacle* o = upcoming_obstacle(s, route, p.avoid_behind, p.avoid_ahead)) {
    target = o->d >= 0.0 ? -p.avoid_offset : p.avoid_offset;
  }
  const double steer =
      route.kappa(s.u + p.lookahead) - p.k_d * (s.d - target) - p.k_psi * s.psi;
  double v_ref = p.v_ref;
  if (upcoming_obstacle(s, route, p.slow_zone, p.slow_zone) != nullptr) v_ref = p.v_ref_obstacle;
  const double throttle = p.k_v * (v_ref - s.v);
  return Controls{steer, throttle}.clipped(p);
}

}  // namespace factood
