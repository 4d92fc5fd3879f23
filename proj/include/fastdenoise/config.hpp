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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "fastdenoise/engine.hpp"

namespace fastdenoise {

struct ScheduleConfig {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int S = 40;
  int N = 3;
  double t_thresh_fraction = 0.6;
};

struct MaskConfig {
  /// "rect:x0,y0,x1,y1", "frac:F", or a mask file path. Synthesized masks
  /// live on a grid `scale` times the latent resolution.
  std::string spec = "frac:0.4";
  int scale = 4;
};

struct SeedConfig {
  std::uint64_t weights = 0;
  std::uint64_t noise = 0;
};

struct RunConfig {
  UNetConfig unet;
  /// Checkpoint directory; empty means init_weights(seeds.weights).
  std::string weights_dir;
  ScheduleConfig schedule;
  Variant variant = Variant::kLcp;
  bool estimation = true;
  int workers = 1;
  double dispatch_overhead_s = 0.0;
  MaskConfig mask;
  SeedConfig seeds;
  /// Total audio frames; 0 means one clip of unet.frames.
  int audio_frames = 0;
  int concurrent_clips = 1;
  std::string output_dir = "out";
  std::vector<std::uint64_t> ablate_seeds{0, 1, 2};

  Strategy strategy() const { return {variant, estimation, workers, dispatch_overhead_s}; }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Applies `dotted.path=value` to a config document. The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Schedule, plan, model and mask resolved from a config.
struct Resolved {
  NoiseSchedule sched;
  TimestepPlan plan;
  std::shared_ptr<const ToyUNet> net;
  std::shared_ptr<const ForegroundMask> mask;  // latent resolution
};

Resolved resolve(const RunConfig& cfg);
/// Mask at latent resolution; throws ConfigError for a missing mask file.
std::shared_ptr<const ForegroundMask> resolve_mask(const RunConfig& cfg);

}  // namespace fastdenoise
