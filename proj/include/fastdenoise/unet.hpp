// Copyright 2026 The fastdenoise Authors. All Rights Reserved.
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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fastdenoise/dfa.hpp"
#include "fastdenoise/flops.hpp"
#include "fastdenoise/scheduler.hpp"
#include "fastdenoise/tensor.hpp"

namespace fastdenoise {

/// Layer ids in execution order. U30..U32 are the sublayers of the last
/// decoder block; "f_U31" is the feature entering U32.
inline constexpr std::array<std::string_view, 11> kLayerIds{
    "D0", "D1", "D2", "D3", "M", "U0", "U1", "U2", "U30", "U31", "U32"};

/// Resolution level (0 = latent resolution, 3 = h/8) a layer runs at.
int layer_level(std::string_view layer);

struct UNetConfig {
  int latent_channels = 4;
  std::array<int, 4> channels{8, 16, 16, 16};  // per resolution level
  int height = 16;
  int width = 16;
  int frames = 4;
  int batch = 1;
  int audio_tokens = 4;  // per frame
  int audio_dim = 8;
  int head_dim = 8;
  int time_embed_dim = 32;
  /// Layers carrying reference + audio + temporal attention.
  std::vector<std::string> attention_layers{"D0", "M", "U2", "U30", "U31", "U32"};
  /// Layers whose reference attention drops the reference feature when
  /// removal is enabled. Must be a subset of attention_layers.
  std::vector<std::string> removal_set{"U30", "U31", "U32"};
  std::uint64_t weight_seed = 0;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
  /// (b, c, f, h, w)
  Shape latent_shape() const;
  bool has_attention(std::string_view layer) const;
  bool removes_reference(std::string_view layer) const;
  std::size_t level_height(int level) const { return static_cast<std::size_t>(height >> level); }
  std::size_t level_width(int level) const { return static_cast<std::size_t>(width >> level); }
};

/// Named parameter arrays, iterated in name order.
class ModelWeights {
 public:
  const DenseArray& at(const std::string& name) const;
  void set(const std::string& name, DenseArray value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const std::map<std::string, DenseArray>& params() const { return params_; }
  std::uint64_t checksum() const;

 private:
  std::map<std::string, DenseArray> params_;
};

/// Draws every parameter from an Rng seeded with cfg.weight_seed, scaled by
/// 1/sqrt(fan_in). The scalar "out.residual" gain starts at 1.
ModelWeights init_weights(const UNetConfig& cfg);

/// Zeroes the output convolution and the latent residual gain and sets the
/// output bias to `value`, so the noise prediction no longer depends on the input.
ModelWeights with_constant_output(ModelWeights weights, float value);

/// Checkpoint: one .tns file per parameter plus manifest.txt (`name file`).
void save_weights(const std::filesystem::path& dir, const ModelWeights& weights);
ModelWeights load_weights(const std::filesystem::path& dir);

/// Conditioning for one clip.
struct Conditioning {
  std::vector<DenseArray> reference;  // per level: [C_l, h_l, w_l]
  DenseArray audio;                   // [f, audio_tokens, audio_dim]
  std::shared_ptr<const ForegroundMask> mask;
  int valid_frames = 0;
};

/// Synthetic reference features drawn from `seed`.
std::vector<DenseArray> make_reference_features(const UNetConfig& cfg, std::uint64_t seed);
/// Synthetic single-clip conditioning (reference, audio) drawn from `seed`.
Conditioning make_conditioning(const UNetConfig& cfg, std::uint64_t seed,
                               std::shared_ptr<const ForegroundMask> mask = nullptr);

/// Per-module DFA contexts keyed "<layer>.<site>"; bg_cache is [N x L_b x d]
/// over the N = b * f frames.
using DfaState = std::map<std::string, DfaContext>;

std::string module_name(std::string_view layer, AttentionSite site);

struct ForwardOptions {
  bool reference_removal = false;
  /// Layers whose attention outputs are captured as "<layer>.<site>" [N x L x d].
  std::vector<std::string> capture_sites;
  /// Also capture frame-0 reference attention probabilities as
  /// "<layer>.reference.weights" [L x L_keys] at each captured site.
  bool capture_reference_weights = false;
  const DfaState* dfa = nullptr;
};

struct ForwardTrace {
  DenseArray eps_pred;
  std::map<std::string, DenseArray> captured;  // always holds "f_U31"
  FlopLedger flops;
};

struct AttentionWeights {
  DenseArray q, k, v, o;  // q/k/v: [in x d], o: [d x C]
};

struct AttentionOutput {
  DenseArray attention;      // pre-projection output A
  DenseArray output;         // A * W_o
  DenseArray probabilities;  // filled on request
};

/// Q = x Wq; K/V from concat(x, ref) (or x alone when `removal`).
AttentionOutput reference_attention(const DenseArray& x, const DenseArray& ref, bool removal,
                                    const AttentionWeights& w, const DfaContext* dfa = nullptr,
                                    FlopLedger* ledger = nullptr, std::string_view layer = {},
                                    bool want_probabilities = false);

/// Cross-attention from spatial tokens [L x C] to one frame's audio tokens.
AttentionOutput audio_attention(const DenseArray& x, const DenseArray& audio_frame,
                                const AttentionWeights& w, const DfaContext* dfa = nullptr,
                                FlopLedger* ledger = nullptr, std::string_view layer = {});

/// Self-attention along frames at each location; x is [f x L x C].
AttentionOutput temporal_attention(const DenseArray& x, const AttentionWeights& w,
                                   const DfaContext* dfa = nullptr, FlopLedger* ledger = nullptr,
                                   std::string_view layer = {});

/// (b, c, f, h, w) -> ((b*h*w), f, c) and back.
DenseArray to_temporal_tokens(const DenseArray& latent);
DenseArray from_temporal_tokens(const DenseArray& tokens, const Shape& latent_shape);

/// 64-dim sinusoidal timestep encoding.
DenseArray timestep_encoding(int t);

/// eps = head(U32 output) + out.residual * sqrt(1 - alpha_bar_t) * z_t.
///
/// The residual is the noise predictor that is optimal for unit-Gaussian
/// data; the random head perturbs it. Without it, untrained weights do not
/// denoise and DDIM trajectories grow without bound.
class ToyUNet {
 public:
  ToyUNet(UNetConfig cfg, ModelWeights weights,
          const NoiseSchedule& schedule = NoiseSchedule::linear(1000, 1e-4, 0.02));

  const UNetConfig& config() const { return cfg_; }
  const ModelWeights& weights() const { return weights_; }
  /// [N, C0, h, w]
  Shape f_u31_shape() const;

  /// Full network; the trace captures f_U31.
  ForwardTrace forward(const DenseArray& z, int t, const Conditioning& cond,
                       const ForwardOptions& opts = {}) const;

  /// conv(z) followed by U32 on a cached f_U31. With the f_U31 produced by
  /// forward(z, t, cond) this reproduces forward's eps_pred bit-for-bit.
  ForwardTrace subnet_forward(const DenseArray& f_u31, const DenseArray& z, int t,
                              const Conditioning& cond, const ForwardOptions& opts = {}) const;

 private:
  class Pass;

  UNetConfig cfg_;
  ModelWeights weights_;
  std::vector<float> prior_gain_;  // [T + 1]
};

}  // namespace fastdenoise
