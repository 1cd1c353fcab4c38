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

// Behavior cloning from the privileged expert.
//
// A trace is one full-horizon expert episode; every step contributes one
// (window, expert controls) sample. Training minimizes
//   steer_weight * (steer - steer*)^2 + throttle_weight * (throttle - throttle*)^2
// averaged over a minibatch, with SGD + momentum under cosine learning-rate
// decay, periodic validation on held-out traces and early stopping.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "factood/driving_sim.hpp"
#include "factood/errors.hpp"
#include "factood/factor_space.hpp"
#include "factood/policies.hpp"
#include "factood/random.hpp"

namespace factood {

struct DemoSample {
  std::vector<double> window;  // T x 29, oldest frame first
  Controls target;
  std::string tag;
  int trace = 0;
};

struct DemoDataset {
  ClipSpec clip;
  std::vector<DemoSample> samples;
  int trace_count = 0;
  std::vector<std::string> support;

  std::vector<Observation> window(std::size_t i) const {
    const auto& w = samples[i].window;
    std::vector<Observation> out(static_cast<std::size_t>(clip.frames));
    for (std::size_t f = 0; f < out.size(); ++f) {
      std::copy_n(w.begin() + static_cast<long>(f * kObsDim), kObsDim, out[f].values.begin());
    }
    return out;
  }
};

// Expert traces on every support member. Trace seeds live in their own
// derivation domain so they never coincide with evaluation seeds.
inline DemoDataset collect_demos(const IdSupport& support, int traces_per_config,
                                 const ClipSpec& clip, std::uint64_t seed,
                                 const SimParams& params = default_sim_params()) {
  if (traces_per_config < 1) throw ValidationError("traces_per_config must be >= 1");
  if (support.empty()) throw ValidationError("cannot collect demos on an empty support");
  clip.validate();
  DemoDataset data;
  data.clip = clip;
  data.support = support.tags();
  int trace_id = 0;
  for (const auto& config : support.members()) {
    const auto tag = format_tag(config);
    for (int t = 0; t < traces_per_config; ++t, ++trace_id) {
      const auto route_seed = derive_seed(seed, "demo-route", tag, static_cast<std::uint64_t>(t));
      const auto noise_seed = derive_seed(seed, "demo-noise", tag, static_cast<std::uint64_t>(t));
      const Route route = reskin(generate_route(route_seed, config.scene, params), config.agent);
      auto state = EpisodeState::start(noise_seed, params);
      FrameHistory history;
      for (int k = 0; k < params.horizon; ++k) {
        history.push(observe(state, route, config, params));
        const Controls target = expert_controls(state, route, params);
        data.samples.push_back({flatten(history.window(clip)), target, tag, trace_id});
        const auto res = step(state, route, target, params.dt, params);
        state = res.state;
        if (res.events != kNoEvent) break;
      }
    }
  }
  data.trace_count = trace_id;
  return data;
}

struct LossWeights {
  double steer = 1.0;
  double throttle = 1.0;

  void validate() const {
    if (steer < 0.0 || throttle < 0.0 || (steer == 0.0 && throttle == 0.0)) {
      throw ValidationError("loss weights must be >= 0 and not both zero");
    }
  }
};

inline double loss(const Controls& pred, const Controls& target, const LossWeights& w) {
  const double es = pred.steer - target.steer;
  const double eg = pred.throttle - target.throttle;
  return w.steer * es * es + w.throttle * eg * eg;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 200;
  int patience = 10;
  double validation_fraction = 0.2;
  int batch_size = 64;
  int validation_interval = 200;  // optimizer steps
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const {
    if (learning_rate != 1e-3 && learning_rate != 1e-4) {
      throw ValidationError("learning rate must be 1e-3 or 1e-4");
    }
    if (max_epochs < 0) throw ValidationError("max_epochs must be >= 0");
    if (patience < 1) throw ValidationError("patience must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (validation_interval < 1) throw ValidationError("validation_interval must be >= 1");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
      throw ValidationError("validation_fraction must be in [0, 1)");
    }
  }

  nlohmann::json to_json(const LossWeights& w) const {
    return {{"learning_rate", learning_rate},     {"schedule", "cosine"},
            {"max_epochs", max_epochs},           {"patience", patience},
            {"validation_fraction", validation_fraction},
            {"batch_size", batch_size},           {"validation_interval", validation_interval},
            {"momentum", momentum},               {"optimizer", "sgd_momentum"},
            {"seed", seed},                       {"loss_weights", {w.steer, w.throttle}}};
  }

  std::string digest(const LossWeights& w) const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(stable_hash(to_json(w).dump())));
    return buf;
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();  // last check in the epoch
};

struct TrainLog {
  std::string digest;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::vector<std::pair<long, double>> checks;  // (step, validation loss)
  long best_step = 0;
  double best_val = std::numeric_limits<double>::quiet_NaN();
  bool stopped_early = false;
  std::vector<int> train_traces;
  std::vector<int> val_traces;
};

struct TrainResult {
  Policy policy;
  TrainLog log;
};

// Features and targets with the policy's normalizer applied.
struct PreparedData {
  std::vector<std::vector<double>> x;
  std::vector<Controls> y;
};

inline PreparedData prepare(const Policy& p, const DemoDataset& data) {
  if (data.clip != p.clip) throw ValidationError("dataset clip does not match the policy clip");
  PreparedData out;
  out.x.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    out.x.push_back(features(p, data.window(i)));
    out.y.push_back(data.samples[i].target);
  }
  return out;
}

// Per-dimension standardization fitted on the dataset. Scales have a floor
// so near-constant inputs do not explode.
inline Policy fit_normalizer(Policy p, const DemoDataset& data, double min_std = 1e-3) {
  if (data.samples.empty()) throw ValidationError("cannot fit a normalizer on an empty dataset");
  p.normalizer = {};
  const std::size_t dim = p.normalizer_dim();
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto x = raw_features(p, data.window(i));
    for (std::size_t k = 0; k < x.size(); ++k) {
      sum[k % dim] += x[k];
      sq[k % dim] += x[k] * x[k];
    }
    n += x.size() / dim;
  }
  p.normalizer.mean.resize(dim);
  p.normalizer.scale.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const double m = sum[k] / static_cast<double>(n);
    const double var = std::max(sq[k] / static_cast<double>(n) - m * m, 0.0);
    p.normalizer.mean[k] = m;
    p.normalizer.scale[k] = 1.0 / std::max(std::sqrt(var), min_std);
  }
  return p;
}

// Mean loss over `indices`, and optionally its gradient w.r.t. `params`.
inline double batch_loss(const Policy& p, std::span<const double> params, const PreparedData& d,
                         std::span<const std::size_t> indices, const LossWeights& w,
                         std::vector<double>* grad = nullptr) {
  if (grad) grad->assign(params.size(), 0.0);
  if (indices.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  double total = 0.0;
  detail::ForwardCache cache;
  for (std::size_t i : indices) {
    const auto out = forward(p, params, d.x[i], grad ? &cache : nullptr);
    const Controls pred{out[0], out[1]};
    total += loss(pred, d.y[i], w);
    if (grad) {
      const std::array<double, kOutputDim> dout = {
          2.0 * w.steer * (out[0] - d.y[i].steer) * inv_n,
          2.0 * w.throttle * (out[1] - d.y[i].throttle) * inv_n};
      backward(p, params, d.x[i], cache, dout, *grad);
    }
  }
  return total * inv_n;
}

// Splits trace ids into (train, validation) whole traces.
inline std::pair<std::vector<int>, std::vector<int>> split_traces(const DemoDataset& data,
                                                                  double fraction,
                                                                  std::uint64_t seed) {
  std::set<int> ids;
  for (const auto& s : data.samples) ids.insert(s.trace);
  std::vector<int> order(ids.begin(), ids.end());
  Rng rng(mix64(seed ^ stable_hash("trace-split")));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.bits() % i)]);
  }
  std::size_t n_val = 0;
  if (order.size() >= 2 && fraction > 0.0) {
    n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, order.size() - 1);
  }
  std::vector<int> val(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<int> tr(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

inline TrainResult train(const Policy& init, const DemoDataset& data, const TrainConfig& cfg,
                         const LossWeights& w) {
  cfg.validate();
  w.validate();
  init.validate();
  if (data.samples.empty()) throw ValidationError("cannot train on an empty dataset");

  TrainResult result{init, {}};
  TrainLog& log = result.log;
  log.digest = cfg.digest(w);
  log.seed = cfg.seed;

  const PreparedData prepared = prepare(init, data);
  auto [train_ids, val_ids] = split_traces(data, cfg.validation_fraction, cfg.seed);
  log.train_traces = train_ids;
  log.val_traces = val_ids;
  const std::set<int> val_set(val_ids.begin(), val_ids.end());
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    (val_set.count(data.samples[i].trace) ? val_idx : train_idx).push_back(i);
  }
  // With a single trace there is nothing to hold out; validate on training data.
  const std::vector<std::size_t>& check_idx = val_idx.empty() ? train_idx : val_idx;

  std::vector<double> params = init.params;
  std::vector<double> velocity(params.size(), 0.0);
  std::vector<double> grad;
  Rng rng(mix64(cfg.seed ^ stable_hash("minibatch-order")));

  const auto steps_per_epoch = static_cast<long>(
      (train_idx.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size));
  const long total_steps = steps_per_epoch * cfg.max_epochs;

  auto validate_now = [&](long step_no) {
    const double v = batch_loss(init, params, prepared, check_idx, w);
    if (!std::isfinite(v)) {
      throw RuntimeFailure("training diverged: validation loss " + std::to_string(v) +
                           " at step " + std::to_string(step_no));
    }
    log.checks.emplace_back(step_no, v);
    return v;
  };

  // Candidates are checkpoints reached by training; max_epochs == 0 returns init.
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = params;
  int since_best = 0;
  long step_no = 0;

  for (int epoch = 0; epoch < cfg.max_epochs && !log.stopped_early; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.bits() % i)]);
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const double l = batch_loss(init, params, prepared, batch, w, &grad);
      if (!std::isfinite(l)) {
        throw RuntimeFailure("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch + 1) + " step " + std::to_string(step_no));
      }
      epoch_loss += l * static_cast<double>(batch.size());
      seen += batch.size();
      const double lr = cfg.learning_rate * 0.5 *
                        (1.0 + std::cos(std::numbers::pi * static_cast<double>(step_no) /
                                        static_cast<double>(std::max(total_steps, 1L))));
      for (std::size_t k = 0; k < params.size(); ++k) {
        velocity[k] = cfg.momentum * velocity[k] - lr * grad[k];
        params[k] += velocity[k];
      }
      ++step_no;
      const bool last = step_no == total_steps;
      if (step_no % cfg.validation_interval == 0 || last) {
        const double v = validate_now(step_no);
        rec.val_loss = v;
        if (v < best) {
          best = v;
          best_params = params;
          log.best_step = step_no;
          log.best_val = v;
          since_best = 0;
        } else if (++since_best >= cfg.patience) {
          log.stopped_early = !last;
          break;
        }
      }
    }
    rec.train_loss = seen ? epoch_loss / static_cast<double>(seen) : 0.0;
    log.epochs.push_back(rec);
  }

  result.policy.params = std::move(best_params);
  if (step_no > 0) result.policy.train_digest = log.digest;
  return result;
}

// Training manifest: digest, seed, split and the per-epoch loss curve.
inline std::string train_log_to_text(const TrainLog& log, const nlohmann::json& config) {
  std::ostringstream out;
  char buf[128];
  out << "# digest: " << log.digest << "\n";
  out << "# seed: " << log.seed << "\n";
  out << "# config: " << config.dump() << "\n";
  out << "# train_traces:";
  for (int t : log.train_traces) out << ' ' << t;
  out << "\n# val_traces:";
  for (int t : log.val_traces) out << ' ' << t;
  std::snprintf(buf, sizeof buf, "\n# best_step: %ld\n# best_val: %.6e\n# stopped_early: %s\n",
                log.best_step, log.best_val, log.stopped_early ? "true" : "false");
  out << buf;
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : log.epochs) {
    if (std::isnan(e.val_loss)) {
      std::snprintf(buf, sizeof buf, "%d,%.6e,\n", e.epoch, e.train_loss);
    } else {
      std::snprintf(buf, sizeof buf, "%d,%.6e,%.6e\n", e.epoch, e.train_loss, e.val_loss);
    }
    out << buf;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Dataset files: one JSON object per line, a header line first.

inline void write_demos(const std::string& path, const DemoDataset& data) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write demo file " + path);
  out << nlohmann::json{{"format", "factood-demos/1"},
                        {"clip", {{"T", data.clip.frames}, {"stride", data.clip.stride}}},
                        {"trace_count", data.trace_count},
                        {"support", data.support}}
             .dump()
      << "\n";
  for (const auto& s : data.samples) {
    out << nlohmann::json{{"tag", s.tag},
                          {"trace", s.trace},
                          {"target", {s.target.steer, s.target.throttle}},
                          {"window", s.window}}
               .dump()
        << "\n";
  }
}

inline DemoDataset read_demos(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open demo file " + path);
  DemoDataset data;
  std::string line;
  try {
    if (!std::getline(in, line)) throw ValidationError("demo file " + path + " is empty");
    const auto head = nlohmann::json::parse(line);
    if (head.at("format").get<std::string>() != "factood-demos/1") {
      throw ValidationError("unsupported demo file format");
    }
    data.clip = {head.at("clip").at("T").get<int>(), head.at("clip").at("stride").get<int>()};
    data.clip.validate();
    data.trace_count = head.at("trace_count").get<int>();
    data.support = head.at("support").get<std::vector<std::string>>();
    const auto support = IdSupport::from_tags(data.support);
    const std::size_t width = kObsDim * static_cast<std::size_t>(data.clip.frames);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      DemoSample s;
      s.tag = j.at("tag").get<std::string>();
      if (!support.contains(parse_tag(s.tag))) {
        throw ValidationError("demo sample from " + s.tag + " is outside the support");
      }
      s.trace = j.at("trace").get<int>();
      const auto t = j.at("target").get<std::vector<double>>();
      if (t.size() != 2) throw ValidationError("demo target must have two values");
      s.target = {t[0], t[1]};
      s.window = j.at("window").get<std::vector<double>>();
      if (s.window.size() != width) throw ValidationError("demo window has the wrong width");
      data.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed demo file " + path + ": " + e.what());
  }
  return data;
}

}  // namespace factood
