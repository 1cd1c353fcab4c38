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

// Central finite-difference check of the training-loss gradient, shared by
// the unit suite and the acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "factood/policies.hpp"
#include "factood/trainer.hpp"

namespace factood::testing {

struct BlockError {
  std::string block;
  int probes = 0;
  double max_rel = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
}

// Probes `probes` entries of every parameter block of a freshly initialised
// and randomly perturbed policy on a small demonstration batch.
inline std::vector<BlockError> gradient_check(PolicyKind kind, ClipSpec clip, std::uint64_t seed,
                                              int probes = 10, double h = 1e-5) {
  const auto data = collect_demos(parse_support("USuDDA"), 1, clip, seed);
  PolicyOptions po;
  po.hidden = kind == PolicyKind::Recurrent ? 6 : 8;
  po.encoder_seed = seed + 1;
  Policy p = fit_normalizer(make_policy(kind, clip, seed, po), data);
  Rng rng(mix64(seed ^ 0xc0ffee));
  for (auto& w : p.params) w += rng.normal(0.0, 0.3);
  const PreparedData prepared = prepare(p, data);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < prepared.x.size(); i += 13) idx.push_back(i);
  const LossWeights w{1.3, 0.7};

  std::vector<double> grad;
  batch_loss(p, p.params, prepared, idx, w, &grad);

  std::vector<BlockError> out;
  for (const auto& b : p.blocks()) {
    BlockError e{b.name, 0, 0.0};
    for (int k = 0; k < probes; ++k) {
      const std::size_t i = b.offset + static_cast<std::size_t>(rng.bits() % b.size());
      std::vector<double> q = p.params;
      q[i] = p.params[i] + h;
      const double up = batch_loss(p, q, prepared, idx, w);
      q[i] = p.params[i] - h;
      const double down = batch_loss(p, q, prepared, idx, w);
      e.max_rel = std::max(e.max_rel, relative_error(grad[i], (up - down) / (2.0 * h)));
      ++e.probes;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace factood::testing
