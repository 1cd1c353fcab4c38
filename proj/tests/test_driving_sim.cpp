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

#include <cmath>
#include <numbers>

#include "factood/driving_sim.hpp"
#include "factood/factor_space.hpp"

namespace factood {
namespace {

const SimParams& P() { return default_sim_params(); }

Route straight_route(std::vector<Obstacle> obstacles = {}) {
  Route r;
  r.length = 200.0;
  r.segment_length = 20.0;
  r.curvature.assign(10, 0.0);
  r.lane_half_width = 2.0;
  r.obstacles = std::move(obstacles);
  return r;
}

double sample_std(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

TEST(DrivingSim, RouteIsDeterministicAndFeasible) {
  for (Scene scene : {Scene::Rural, Scene::Urban}) {
    const Route a = generate_route(123, scene);
    EXPECT_EQ(a, generate_route(123, scene));
    EXPECT_NE(a, generate_route(124, scene));
    EXPECT_DOUBLE_EQ(a.lane_half_width, 2.0);
    EXPECT_GE(a.length, P().v_max * P().horizon * P().dt);
    for (double k : a.curvature) {
      EXPECT_LE(std::abs(k), P().kappa_max);
      EXPECT_LT(std::abs(k) * a.lane_half_width, 1.0);
    }
    for (std::size_t i = 1; i < a.obstacles.size(); ++i) EXPECT_LT(a.obstacles[i - 1].u, a.obstacles[i].u);
  }
}

TEST(DrivingSim, UrbanRoutesAreCurvierAndBusier) {
  std::vector<double> rural, urban;
  std::size_t rural_obs = 0, urban_obs = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Route r = generate_route(seed, Scene::Rural);
    const Route u = generate_route(seed, Scene::Urban);
    rural.insert(rural.end(), r.curvature.begin(), r.curvature.end());
    urban.insert(urban.end(), u.curvature.begin(), u.curvature.end());
    rural_obs += r.obstacles.size();
    urban_obs += u.obstacles.size();
  }
  EXPECT_GT(sample_std(urban), sample_std(rural));
  EXPECT_GT(urban_obs, rural_obs);
}

TEST(DrivingSim, ReskinSetsAgentKind) {
  const Route r = reskin(generate_route(5, Scene::Urban), Agent::Animal);
  for (const auto& o : r.obstacles) EXPECT_EQ(o.kind, Agent::Animal);
}

TEST(DrivingSim, MatchedCurvatureKeepsLateralOffset) {
  Route r = straight_route();
  r.curvature.assign(10, 0.01);
  EpisodeState s = EpisodeState::start(1);
  s.d = 0.5;
  const auto out = step(s, r, Controls{0.01, 0.0}, P().dt);
  EXPECT_DOUBLE_EQ(out.state.d, 0.5);
  EXPECT_DOUBLE_EQ(out.state.psi, 0.0);
  EXPECT_NEAR(out.state.u, s.v * P().dt, 1e-12);
}

TEST(DrivingSim, ZeroSpeedDoesNotMove) {
  EpisodeState s = EpisodeState::start(1);
  s.v = 0.0;
  s.d = 0.3;
  s.psi = 0.2;
  const auto out = step(s, straight_route(), Controls{0.1, 0.0}, P().dt);
  EXPECT_DOUBLE_EQ(out.state.u, s.u);
  EXPECT_DOUBLE_EQ(out.state.d, s.d);
}

TEST(DrivingSim, KinematicsFollowTheUpdateRule) {
  Route r = straight_route();
  r.curvature.assign(10, 0.02);
  EpisodeState s = EpisodeState::start(1);
  s.d = 0.1;
  s.psi = 0.05;
  const Controls c{0.05, 0.5};
  const double dt = P().dt;
  const double v = std::clamp(s.v + 0.5 * P().a_max * dt, 0.0, P().v_max);
  const double psi = 0.05 + v * (0.05 - 0.02) * dt;
  const auto out = step(s, r, c, dt);
  EXPECT_DOUBLE_EQ(out.state.v, v);
  EXPECT_DOUBLE_EQ(out.state.psi, psi);
  EXPECT_DOUBLE_EQ(out.state.d, 0.1 + v * std::sin(psi) * dt);
  EXPECT_DOUBLE_EQ(out.state.u, v * std::cos(psi) * dt);
  EXPECT_EQ(out.state.step_index, 1);
}

TEST(DrivingSim, SpeedIsClamped) {
  EpisodeState s = EpisodeState::start(1);
  s.v = P().v_max;
  EXPECT_DOUBLE_EQ(step(s, straight_route(), {0.0, 1.0}, P().dt).state.v, P().v_max);
  s.v = 0.01;
  EXPECT_DOUBLE_EQ(step(s, straight_route(), {0.0, -1.0}, P().dt).state.v, 0.0);
}

TEST(DrivingSim, EventThresholds) {
  const Route r = straight_route({{50.0, 0.5, Agent::Car}});
  EpisodeState s = EpisodeState::start(1);
  s.d = 2.0 + 1e-9;
  EXPECT_EQ(detect_events(s, r), kOutOfLane);
  s.d = 2.0;
  EXPECT_EQ(detect_events(s, r), kNoEvent);
  s.d = -4.5;
  EXPECT_EQ(detect_events(s, r), kOutOfLane | kOffRoad);
  s.d = 0.0;
  s.psi = std::numbers::pi / 2 + 1e-6;
  EXPECT_EQ(detect_events(s, r), kStability);
  s.psi = 0.0;
  s.u = 48.5;
  s.d = -0.4;
  EXPECT_EQ(detect_events(s, r), kCollision);
  s.d = -0.5;
  EXPECT_EQ(detect_events(s, r), kNoEvent);
}

TEST(DrivingSim, PrimaryEventPriority) {
  EXPECT_EQ(primary_event(kOutOfLane | kOffRoad), kOffRoad);
  EXPECT_EQ(primary_event(kCollision | kOutOfLane | kStability), kCollision);
  EXPECT_EQ(primary_event(kStability | kOutOfLane), kOutOfLane);
  EXPECT_EQ(primary_event(kNoEvent), kNoEvent);
}

TEST(DrivingSim, StepContractViolations) {
  EpisodeState s = EpisodeState::start(1);
  EXPECT_THROW(step(s, straight_route(), {0.3, 0.0}, P().dt), std::logic_error);
  EXPECT_THROW(step(s, straight_route(), {0.0, 1.5}, P().dt), std::logic_error);
  EXPECT_THROW(step(s, straight_route(), {std::nan(""), 0.0}, P().dt), std::logic_error);
  s.terminated = true;
  EXPECT_THROW(step(s, straight_route(), {0.0, 0.0}, P().dt), std::logic_error);
}

TEST(DrivingSim, ControlsClipping) {
  EXPECT_EQ((Controls{1.0, -3.0}.clipped()), (Controls{0.2, -1.0}));
  EXPECT_EQ((Controls{std::nan(""), 0.5}.clipped()), (Controls{0.0, 0.5}));
}

TEST(DrivingSim, ObservationIsDeterministicAndFinite) {
  const Route r = generate_route(9, Scene::Urban);
  const EnvConfig cfg = parse_tag("UWSNA");
  EpisodeState a = EpisodeState::start(77), b = EpisodeState::start(77);
  for (int i = 0; i < 5; ++i) {
    const Observation oa = observe(a, r, cfg), ob = observe(b, r, cfg);
    EXPECT_EQ(oa, ob);
    for (double v : oa.values) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(a.rng, b.rng);
}

TEST(DrivingSim, NoObstacleInRangeGivesZeroChannel) {
  EpisodeState s = EpisodeState::start(3);
  const Observation o = observe(s, straight_route({{150.0, 0.5, Agent::Car}}), parse_tag("RSuDDC"));
  for (double v : o.obstacle()) EXPECT_EQ(v, 0.0);
  EXPECT_DOUBLE_EQ(o.speed(), P().v_init / P().v_max);
}

TEST(DrivingSim, AgentSelectsObstacleSignature) {
  const Route r = straight_route({{20.0, 0.5, Agent::Car}});
  EpisodeState s = EpisodeState::start(3);
  s.step_index = 10;
  EpisodeState t = s;
  const Observation car = observe(s, r, parse_tag("RSuDDC"));
  const Observation animal = observe(t, r, parse_tag("RSuDDA"));
  EXPECT_DOUBLE_EQ(car.obstacle()[2], P().width_car);
  EXPECT_DOUBLE_EQ(animal.obstacle()[2], P().width_animal);
  EXPECT_EQ(car.obstacle()[3], 0.0);
  EXPECT_NE(animal.obstacle()[3], 0.0);
  EXPECT_DOUBLE_EQ(car.obstacle()[0], 1.0 - 20.0 / P().obstacle_range);
}

TEST(DrivingSim, RuralClutterIsNearZero) {
  double rural = 0.0, urban = 0.0;
  const Route r = generate_route(4, Scene::Rural);
  for (int i = 0; i < 200; ++i) {
    EpisodeState a = EpisodeState::start(static_cast<std::uint64_t>(i));
    EpisodeState b = a;
    const Observation oa = observe(a, r, parse_tag("RSuDDC"));
    const Observation ob = observe(b, r, parse_tag("USuDDC"));
    for (double v : oa.clutter()) rural += v * v;
    for (double v : ob.clutter()) urban += v * v;
  }
  EXPECT_LT(rural, 0.01 * urban);
}

TEST(DrivingSim, NoiseAndGainOrdering) {
  const auto& p = P();
  EXPECT_LT(p.ray_sigma(parse_tag("RSuDDC")), p.ray_sigma(parse_tag("RSuRDC")));
  EXPECT_LT(p.ray_sigma(parse_tag("RSuRDC")), p.ray_sigma(parse_tag("RSuSDC")));
  EXPECT_LT(p.ray_gain(parse_tag("RSuDNC")), p.ray_gain(parse_tag("RSuDDC")));
  EXPECT_DOUBLE_EQ(p.ray_sigma(parse_tag("RSuDNC")), 0.15);
  EXPECT_DOUBLE_EQ(p.ray_gain(parse_tag("RSuDNC")), 0.35);
  EXPECT_DOUBLE_EQ(p.ray_gain(parse_tag("RSuSDC")), 0.6);
}

// Monte Carlo over 1000 draws: residual noise around the noiseless rays
// grows dry < rain < snow, and night rays carry less signal energy.
TEST(DrivingSim, MonteCarloNoiseOrdering) {
  const Route r = generate_route(11, Scene::Rural);
  auto residual = [&](const char* tag) {
    const EnvConfig cfg = parse_tag(tag);
    double acc = 0.0;
    for (int i = 0; i < 1000; ++i) {
      EpisodeState s = EpisodeState::start(static_cast<std::uint64_t>(i));
      s.d = 0.4;
      const auto geom = centerline_rays(s, r, P());
      const auto o = observe(s, r, cfg);
      for (std::size_t j = 0; j < kRayCount; ++j) {
        const double clean = P().ray_gain(cfg) * (geom[j] + P().season_amplitude * season_pattern(cfg.season, j));
        acc += (o.rays()[j] - clean) * (o.rays()[j] - clean);
      }
    }
    return acc;
  };
  EXPECT_LT(residual("RSuDDC"), residual("RSuRDC"));
  EXPECT_LT(residual("RSuRDC"), residual("RSuSDC"));

  double day = 0.0, night = 0.0;
  for (int i = 0; i < 1000; ++i) {
    EpisodeState a = EpisodeState::start(static_cast<std::uint64_t>(i));
    a.d = 0.8;
    EpisodeState b = a;
    const Observation oa = observe(a, r, parse_tag("RSuDDC"));
    const Observation ob = observe(b, r, parse_tag("RSuDNC"));
    for (double v : oa.rays()) day += v * v;
    for (double v : ob.rays()) night += v * v;
  }
  EXPECT_LT(night, day);
}

TEST(DrivingSim, SeasonPatternsAreOrthogonal) {
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < kRayCount; ++i) {
        dot += season_pattern(static_cast<Season>(a), i) * season_pattern(static_cast<Season>(b), i);
      }
      EXPECT_DOUBLE_EQ(dot, a == b ? 16.0 : 0.0);
    }
  }
}

TEST(DrivingSim, CenterlineRaysOnStraightRoad) {
  EpisodeState s = EpisodeState::start(1);
  s.d = 1.0;
  const auto rays = centerline_rays(s, straight_route(), P());
  for (double v : rays) EXPECT_NEAR(v, -0.5, 1e-12);
}

TEST(DrivingSim, ExpertBasics) {
  EpisodeState s = EpisodeState::start(1);
  EXPECT_EQ(expert_controls(s, straight_route()), (Controls{0.0, 0.0}));
  s.d = 0.5;
  EXPECT_LT(expert_controls(s, straight_route()).steer, 0.0);
  s.d = -0.5;
  EXPECT_GT(expert_controls(s, straight_route()).steer, 0.0);
  // Slows down and swerves away from an obstacle on the left.
  s.d = 0.0;
  const auto c = expert_controls(s, straight_route({{10.0, 0.5, Agent::Car}}));
  EXPECT_LT(c.throttle, 0.0);
  EXPECT_LT(c.steer, 0.0);
}

// 100 pinned (config, route, seed) triples driven for the full horizon.
TEST(DrivingSim, ExpertCompletesPinnedTriples) {
  const auto all = enumerate_space();
  for (int i = 0; i < 100; ++i) {
    const EnvConfig cfg = all[static_cast<std::size_t>(i * 37) % all.size()];
    const Route r = reskin(generate_route(stable_hash("pinned-route", static_cast<std::uint64_t>(i)), cfg.scene), cfg.agent);
    EpisodeState s = EpisodeState::start(stable_hash("pinned-seed", static_cast<std::uint64_t>(i)));
    int steps = 0;
    for (; steps < P().horizon; ++steps) {
      observe(s, r, cfg);
      const auto out = step(s, r, expert_controls(s, r), P().dt);
      ASSERT_EQ(out.events, kNoEvent) << format_tag(cfg) << " triple " << i << " step " << steps;
      s = out.state;
    }
    EXPECT_EQ(steps, P().horizon);
  }
}

TEST(DrivingSim, HardSteerLeavesTheLane) {
  const Route r = straight_route();
  EpisodeState s = EpisodeState::start(1);
  EventSet ev = kNoEvent;
  int t = 0;
  for (; t < P().horizon && ev == kNoEvent; ++t) {
    const auto out = step(s, r, {-0.2, 0.0}, P().dt);
    s = out.state;
    ev = out.events;
  }
  EXPECT_EQ(primary_event(ev), kOutOfLane);
  EXPECT_LT(t, 40);
}

}  // namespace
}  // namespace factood
