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

// Policies map a clip of observations to controls.
//
// Four capacity tiers stand in for the architecture axis:
//   linear               one affine map over the concatenated clip
//   mlp                  two tanh hidden layers over the concatenated clip
//   frozen_encoder_head  fixed random tanh encoder per frame, mean-pooled
//                        over the clip, then a one-hidden-layer head
//   recurrent            gated running state over per-frame inputs
//
// Every kind standardizes its network input with a fitted Normalizer, then
// runs a small network whose parameters live in one flat array. The
// forward/backward passes are written out so the trainer can check them
// against finite differences.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "factood/driving_sim.hpp"
#include "factood/errors.hpp"
#include "factood/random.hpp"

namespace factood {

struct ClipSpec {
  int frames = 1;  // T; 1 means single-frame
  int stride = 1;

  void validate() const {
    if (frames < 1) throw ValidationError("clip T must be >= 1");
    if (stride < 1) throw ValidationError("clip stride must be >= 1");
  }
  bool operator==(const ClipSpec&) const = default;
};

// Episode observation history; builds policy windows.
//
// The window for the current step holds frames t, t-stride, ...,
// t-(T-1)*stride, oldest first. Positions before the episode start are
// zero observations.
class FrameHistory {
 public:
  void push(const Observation& obs) { frames_.push_back(obs); }
  std::size_t size() const { return frames_.size(); }
  void clear() { frames_.clear(); }

  std::vector<Observation> window(const ClipSpec& clip) const {
    std::vector<Observation> out(static_cast<std::size_t>(clip.frames));
    const long current = static_cast<long>(frames_.size()) - 1;
    for (int k = 0; k < clip.frames; ++k) {
      const long idx = current - static_cast<long>(clip.frames - 1 - k) * clip.stride;
      if (idx >= 0) out[static_cast<std::size_t>(k)] = frames_[static_cast<std::size_t>(idx)];
    }
    return out;
  }

 private:
  std::vector<Observation> frames_;
};

inline std::vector<double> flatten(std::span<const Observation> window) {
  std::vector<double> out;
  out.reserve(window.size() * kObsDim);
  for (const auto& o : window) out.insert(out.end(), o.values.begin(), o.values.end());
  return out;
}

// ---------------------------------------------------------------------------
// Frozen encoder: tanh(P x + c), P is 64 x 29, drawn once from a seed.

inline constexpr std::size_t kEncoderDim = 64;

class FrozenEncoder {
 public:
  FrozenEncoder() = default;

  explicit FrozenEncoder(std::uint64_t seed) : seed_(seed) {
    Rng rng(mix64(seed ^ stable_hash("frozen-encoder")));
    const double scale = 1.0 / std::sqrt(static_cast<double>(kObsDim));
    weights_.resize(kEncoderDim * kObsDim);
    for (auto& w : weights_) w = rng.normal(0.0, 2.0 * scale);
    bias_.resize(kEncoderDim);
    for (auto& b : bias_) b = rng.normal(0.0, 0.1);
  }

  std::string id() const { return "enc-" + std::to_string(seed_); }
  std::uint64_t seed() const { return seed_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> bias() const { return bias_; }

  std::vector<double> encode(const Observation& obs) const {
    std::vector<double> z(kEncoderDim);
    for (std::size_t i = 0; i < kEncoderDim; ++i) {
      double a = bias_[i];
      for (std::size_t j = 0; j < kObsDim; ++j) a += weights_[i * kObsDim + j] * obs.values[j];
      z[i] = std::tanh(a);
    }
    return z;
  }

  bool operator==(const FrozenEncoder&) const = default;

 private:
  std::uint64_t seed_ = 0;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

inline std::vector<double> encode(const FrozenEncoder& encoder, const Observation& obs) {
  return encoder.encode(obs);
}

// ---------------------------------------------------------------------------

enum class PolicyKind { Linear, Mlp, FrozenEncoderHead, Recurrent };

inline std::string kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::Linear: return "linear";
    case PolicyKind::Mlp: return "mlp";
    case PolicyKind::FrozenEncoderHead: return "frozen_encoder_head";
    case PolicyKind::Recurrent: return "recurrent";
  }
  return "?";
}

inline PolicyKind parse_kind(std::string_view name) {
  for (auto k : {PolicyKind::Linear, PolicyKind::Mlp, PolicyKind::FrozenEncoderHead,
                 PolicyKind::Recurrent}) {
    if (kind_name(k) == name) return k;
  }
  throw ValidationError("unknown policy kind '" + std::string(name) + "'");
}

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 / std

  bool empty() const { return mean.empty(); }

  // Normalizer dims may divide the feature length (per-frame statistics).
  void apply(std::span<double> x) const {
    if (mean.empty()) return;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t j = i % mean.size();
      x[i] = (x[i] - mean[j]) * scale[j];
    }
  }

  bool operator==(const Normalizer&) const = default;
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

inline constexpr std::size_t kOutputDim = 2;

struct Policy {
  PolicyKind kind = PolicyKind::Linear;
  ClipSpec clip;
  std::size_t hidden = 32;
  std::optional<FrozenEncoder> encoder;
  Normalizer normalizer;
  std::vector<double> params;
  std::string train_digest;

  std::optional<std::string> encoder_id() const {
    return encoder ? std::optional(encoder->id()) : std::nullopt;
  }

  // Width of one frame as seen by the trainable network.
  std::size_t frame_dim() const {
    return kind == PolicyKind::FrozenEncoderHead ? kEncoderDim : kObsDim;
  }

  // Length of the (normalized) feature vector fed to the network.
  std::size_t feature_dim() const {
    const auto T = static_cast<std::size_t>(clip.frames);
    switch (kind) {
      case PolicyKind::Linear:
      case PolicyKind::Mlp: return kObsDim * T;
      case PolicyKind::FrozenEncoderHead: return kEncoderDim;
      case PolicyKind::Recurrent: return kObsDim * T;
    }
    return 0;
  }

  // Dimension of the normalizer statistics.
  std::size_t normalizer_dim() const {
    return kind == PolicyKind::Recurrent ? kObsDim : feature_dim();
  }

  std::vector<ParamBlock> blocks() const {
    std::vector<ParamBlock> out;
    std::size_t off = 0;
    auto add = [&](std::string name, std::size_t r, std::size_t c) {
      out.push_back({std::move(name), off, r, c});
      off += r * c;
    };
    const std::size_t D = feature_dim();
    const std::size_t H = hidden;
    switch (kind) {
      case PolicyKind::Linear:
        add("W", kOutputDim, D);
        add("b", kOutputDim, 1);
        break;
      case PolicyKind::Mlp:
        add("W1", H, D);
        add("b1", H, 1);
        add("W2", H, H);
        add("b2", H, 1);
        add("W3", kOutputDim, H);
        add("b3", kOutputDim, 1);
        break;
      case PolicyKind::FrozenEncoderHead:
        add("W1", H, D);
        add("b1", H, 1);
        add("W2", kOutputDim, H);
        add("b2", kOutputDim, 1);
        break;
      case PolicyKind::Recurrent:
        add("Wz", H, kObsDim);
        add("Uz", H, H);
        add("bz", H, 1);
        add("Wc", H, kObsDim);
        add("Uc", H, H);
        add("bc", H, 1);
        add("Wo", kOutputDim, H);
        add("bo", kOutputDim, 1);
        break;
    }
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks()) n += b.size();
    return n;
  }

  void validate() const {
    clip.validate();
    if (kind == PolicyKind::FrozenEncoderHead && !encoder) {
      throw ValidationError("frozen_encoder_head policy requires an encoder");
    }
    if (params.size() != param_count()) {
      throw ValidationError("policy has " + std::to_string(params.size()) +
                            " parameters, expected " + std::to_string(param_count()));
    }
    if (!normalizer.empty() && (normalizer.mean.size() != normalizer_dim() ||
                                normalizer.scale.size() != normalizer_dim())) {
      throw ValidationError("normalizer dimension does not match policy input");
    }
  }

  bool operator==(const Policy&) const = default;
};

struct PolicyOptions {
  std::size_t hidden = 0;  // 0 picks the kind's default
  std::uint64_t encoder_seed = 1;
};

// Linear policies start at zero; networks use Glorot-uniform weights and
// zero biases.
inline Policy make_policy(PolicyKind kind, ClipSpec clip, std::uint64_t seed,
                          PolicyOptions options = {}) {
  clip.validate();
  Policy p;
  p.kind = kind;
  p.clip = clip;
  p.hidden = options.hidden > 0 ? options.hidden : (kind == PolicyKind::Recurrent ? 16 : 32);
  if (kind == PolicyKind::FrozenEncoderHead) p.encoder = FrozenEncoder(options.encoder_seed);
  p.params.assign(p.param_count(), 0.0);
  if (kind != PolicyKind::Linear) {
    Rng rng(mix64(seed ^ stable_hash("policy-init")));
    for (const auto& b : p.blocks()) {
      if (b.cols == 1) continue;
      const double limit = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
      for (std::size_t i = 0; i < b.size(); ++i) {
        p.params[b.offset + i] = rng.uniform(-limit, limit);
      }
    }
  }
  return p;
}

// Raw (un-normalized) network input for a window.
inline std::vector<double> raw_features(const Policy& p, std::span<const Observation> window) {
  if (window.size() != static_cast<std::size_t>(p.clip.frames)) {
    throw ValidationError("window has " + std::to_string(window.size()) +
                          " frames, policy expects " + std::to_string(p.clip.frames));
  }
  if (p.kind != PolicyKind::FrozenEncoderHead) return flatten(window);
  std::vector<double> pooled(kEncoderDim, 0.0);
  for (const auto& obs : window) {
    const auto z = p.encoder->encode(obs);
    for (std::size_t i = 0; i < kEncoderDim; ++i) pooled[i] += z[i];
  }
  for (auto& v : pooled) v /= static_cast<double>(window.size());
  return pooled;
}

inline std::vector<double> features(const Policy& p, std::span<const Observation> window) {
  auto x = raw_features(p, window);
  p.normalizer.apply(x);
  return x;
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y = W x + b for a row-major W (rows x cols).
inline void affine(std::span<const double> W, std::span<const double> b,
                   std::span<const double> x, std::span<double> y) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < y.size(); ++r) {
    double a = b.empty() ? 0.0 : b[r];
    const double* row = W.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) a += row[c] * x[c];
    y[r] = a;
  }
}

// gW += dy x^T, gb += dy, dx += W^T dy (dx may be empty).
inline void affine_backward(std::span<const double> W, std::span<const double> x,
                            std::span<const double> dy, std::span<double> gW,
                            std::span<double> gb, std::span<double> dx) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < dy.size(); ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    double* grow = gW.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) grow[c] += g * x[c];
    if (!gb.empty()) gb[r] += g;
    if (!dx.empty()) {
      const double* row = W.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dx[c] += row[c] * g;
    }
  }
}

inline std::span<const double> block(std::span<const double> params, const ParamBlock& b) {
  return params.subspan(b.offset, b.size());
}
inline std::span<double> block(std::span<double> params, const ParamBlock& b) {
  return params.subspan(b.offset, b.size());
}

// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<std::vector<double>> layers;  // mlp/head: hidden activations
  std::vector<std::vector<double>> h, z, c; // recurrent: per-step state
};

}  // namespace detail

// Network output (before control clipping) for normalized features `x`.
inline std::array<double, kOutputDim> forward(const Policy& p, std::span<const double> params,
                                              std::span<const double> x,
                                              detail::ForwardCache* cache = nullptr) {
  using namespace detail;
  const auto blocks = p.blocks();
  std::array<double, kOutputDim> out{};
  const std::size_t H = p.hidden;
  switch (p.kind) {
    case PolicyKind::Linear:
      affine(block(params, blocks[0]), block(params, blocks[1]), x, out);
      break;
    case PolicyKind::Mlp: {
      std::vector<double> h1(H), h2(H);
      affine(block(params, blocks[0]), block(params, blocks[1]), x, h1);
      for (auto& v : h1) v = std::tanh(v);
      affine(block(params, blocks[2]), block(params, blocks[3]), h1, h2);
      for (auto& v : h2) v = std::tanh(v);
      affine(block(params, blocks[4]), block(params, blocks[5]), h2, out);
      if (cache) cache->layers = {std::move(h1), std::move(h2)};
      break;
    }
    case PolicyKind::FrozenEncoderHead: {
      std::vector<double> h1(H);
      affine(block(params, blocks[0]), block(params, blocks[1]), x, h1);
      for (auto& v : h1) v = std::tanh(v);
      affine(block(params, blocks[2]), block(params, blocks[3]), h1, out);
      if (cache) cache->layers = {std::move(h1)};
      break;
    }
    case PolicyKind::Recurrent: {
      const auto T = static_cast<std::size_t>(p.clip.frames);
      std::vector<double> h(H, 0.0), az(H), ac(H), tmp(H);
      if (cache) {
        cache->h.assign(1, h);
        cache->z.clear();
        cache->c.clear();
      }
      for (std::size_t t = 0; t < T; ++t) {
        const auto xt = x.subspan(t * kObsDim, kObsDim);
        affine(block(params, blocks[0]), block(params, blocks[2]), xt, az);
        affine(block(params, blocks[1]), {}, h, tmp);
        for (std::size_t i = 0; i < H; ++i) az[i] = sigmoid(az[i] + tmp[i]);
        affine(block(params, blocks[3]), block(params, blocks[5]), xt, ac);
        affine(block(params, blocks[4]), {}, h, tmp);
        for (std::size_t i = 0; i < H; ++i) ac[i] = std::tanh(ac[i] + tmp[i]);
        for (std::size_t i = 0; i < H; ++i) h[i] = (1.0 - az[i]) * h[i] + az[i] * ac[i];
        if (cache) {
          cache->z.push_back(az);
          cache->c.push_back(ac);
          cache->h.push_back(h);
        }
      }
      affine(block(params, blocks[6]), block(params, blocks[7]), h, out);
      break;
    }
  }
  return out;
}

// Accumulates d(out . dout)/d(params) into `grad`.
inline void backward(const Policy& p, std::span<const double> params, std::span<const double> x,
                     const detail::ForwardCache& cache,
                     const std::array<double, kOutputDim>& dout, std::span<double> grad) {
  using namespace detail;
  const auto blocks = p.blocks();
  const std::size_t H = p.hidden;
  switch (p.kind) {
    case PolicyKind::Linear:
      affine_backward(block(params, blocks[0]), x, dout, block(grad, blocks[0]),
                      block(grad, blocks[1]), {});
      break;
    case PolicyKind::Mlp: {
      const auto& h1 = cache.layers[0];
      const auto& h2 = cache.layers[1];
      std::vector<double> d2(H, 0.0), d1(H, 0.0);
      affine_backward(block(params, blocks[4]), h2, dout, block(grad, blocks[4]),
                      block(grad, blocks[5]), d2);
      for (std::size_t i = 0; i < H; ++i) d2[i] *= 1.0 - h2[i] * h2[i];
      affine_backward(block(params, blocks[2]), h1, d2, block(grad, blocks[2]),
                      block(grad, blocks[3]), d1);
      for (std::size_t i = 0; i < H; ++i) d1[i] *= 1.0 - h1[i] * h1[i];
      affine_backward(block(params, blocks[0]), x, d1, block(grad, blocks[0]),
                      block(grad, blocks[1]), {});
      break;
    }
    case PolicyKind::FrozenEncoderHead: {
      const auto& h1 = cache.layers[0];
      std::vector<double> d1(H, 0.0);
      affine_backward(block(params, blocks[2]), h1, dout, block(grad, blocks[2]),
                      block(grad, blocks[3]), d1);
      for (std::size_t i = 0; i < H; ++i) d1[i] *= 1.0 - h1[i] * h1[i];
      affine_backward(block(params, blocks[0]), x, d1, block(grad, blocks[0]),
                      block(grad, blocks[1]), {});
      break;
    }
    case PolicyKind::Recurrent: {
      const auto T = static_cast<std::size_t>(p.clip.frames);
      std::vector<double> dh(H, 0.0);
      affine_backward(block(params, blocks[6]), cache.h.back(), dout, block(grad, blocks[6]),
                      block(grad, blocks[7]), dh);
      std::vector<double> daz(H), dac(H), dprev(H);
      for (std::size_t t = T; t-- > 0;) {
        const auto& hp = cache.h[t];
        const auto& z = cache.z[t];
        const auto& c = cache.c[t];
        const auto xt = x.subspan(t * kObsDim, kObsDim);
        for (std::size_t i = 0; i < H; ++i) {
          daz[i] = dh[i] * (c[i] - hp[i]) * z[i] * (1.0 - z[i]);
          dac[i] = dh[i] * z[i] * (1.0 - c[i] * c[i]);
          dprev[i] = dh[i] * (1.0 - z[i]);
        }
        affine_backward(block(params, blocks[0]), xt, daz, block(grad, blocks[0]),
                        block(grad, blocks[2]), {});
        affine_backward(block(params, blocks[1]), hp, daz, block(grad, blocks[1]), {}, dprev);
        affine_backward(block(params, blocks[3]), xt, dac, block(grad, blocks[3]),
                        block(grad, blocks[5]), {});
        affine_backward(block(params, blocks[4]), hp, dac, block(grad, blocks[4]), {}, dprev);
        dh = dprev;
      }
      break;
    }
  }
}

inline Controls predict(const Policy& p, std::span<const Observation> window) {
  const auto x = features(p, window);
  const auto out = forward(p, p.params, x);
  return Controls{out[0], out[1]}.clipped();
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json policy_to_json(const Policy& p) {
  nlohmann::json j;
  j["format"] = "factood-policy/1";
  j["kind"] = kind_name(p.kind);
  j["clip"] = {{"T", p.clip.frames}, {"stride", p.clip.stride}};
  j["hidden"] = p.hidden;
  if (p.encoder) {
    j["encoder"] = {{"id", p.encoder->id()}, {"seed", p.encoder->seed()}};
  } else {
    j["encoder"] = nullptr;
  }
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : p.blocks()) blocks.push_back({{"name", b.name}, {"shape", {b.rows, b.cols}}});
  j["blocks"] = blocks;
  j["normalizer"] = {{"mean", p.normalizer.mean}, {"scale", p.normalizer.scale}};
  j["params"] = p.params;
  j["train_digest"] = p.train_digest;
  return j;
}

inline Policy policy_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "factood-policy/1") {
      throw ValidationError("unsupported policy format");
    }
    Policy p;
    p.kind = parse_kind(j.at("kind").get<std::string>());
    p.clip = {j.at("clip").at("T").get<int>(), j.at("clip").at("stride").get<int>()};
    p.hidden = j.at("hidden").get<std::size_t>();
    if (!j.at("encoder").is_null()) {
      p.encoder = FrozenEncoder(j.at("encoder").at("seed").get<std::uint64_t>());
      if (p.encoder->id() != j.at("encoder").at("id").get<std::string>()) {
        throw ValidationError("encoder id does not match its seed");
      }
    }
    const auto& blocks = j.at("blocks");
    const auto expected = p.blocks();
    if (blocks.size() != expected.size()) throw ValidationError("parameter block count mismatch");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto shape = blocks[i].at("shape").get<std::vector<std::size_t>>();
      if (blocks[i].at("name").get<std::string>() != expected[i].name || shape.size() != 2 ||
          shape[0] != expected[i].rows || shape[1] != expected[i].cols) {
        throw ValidationError("parameter block " + expected[i].name + " has the wrong shape");
      }
    }
    p.normalizer.mean = j.at("normalizer").at("mean").get<std::vector<double>>();
    p.normalizer.scale = j.at("normalizer").at("scale").get<std::vector<double>>();
    p.params = j.at("params").get<std::vector<double>>();
    p.train_digest = j.at("train_digest").get<std::string>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed policy checkpoint: ") + e.what());
  }
}

inline void write_policy(const std::string& path, const Policy& p) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write policy checkpoint " + path);
  out << policy_to_json(p).dump() << "\n";
}

inline Policy read_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open policy checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("policy checkpoint " + path + " is not valid JSON");
  }
  return policy_from_json(j);
}

}  // namespace factood
