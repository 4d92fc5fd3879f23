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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "fastdenoise/config.hpp"

namespace fastdenoise {

struct ClipRun {
  DenoiseReport report;
  int valid_frames = 0;
};

struct RunResult {
  RunConfig config;
  TimestepPlan plan;
  std::vector<ClipRun> clips;
  DenseArray final_latent;  // [clips, b, c, f, h, w]

  std::uint64_t total_flops() const;
  /// Mean modeled latency per clip.
  double latency_per_clip_s() const;
};

/// Denoises every clip of the configured input; no files are written.
RunResult execute_run(const RunConfig& cfg);
/// Same, reusing an already resolved model, schedule and mask.
RunResult execute_run(const RunConfig& cfg, const Resolved& resolved);

nlohmann::json plan_json(const TimestepPlan& plan);
nlohmann::json report_json(const RunResult& result);

/// execute_run plus report.json, final.tns and flops.csv in cfg.output_dir.
RunResult cmd_run(const RunConfig& cfg);

struct DiagnoseResult {
  std::vector<int> timesteps;
  std::vector<double> f_u31_l2;
  std::vector<std::vector<double>> f_u31_cosine;
  std::vector<double> input_latents_l2;
  std::vector<double> noise_pred_l2;
  std::array<double, 4> fg_mass{};
  std::map<std::string, std::vector<double>> background_l2;  // by site
  FlopLedger flops;
};

/// Baseline run over all S steps with feature capture at U32; writes the
/// diagnostic CSVs to cfg.output_dir.
DiagnoseResult cmd_diagnose(const RunConfig& cfg);

struct AblationRow {
  std::string name;
  Variant variant = Variant::kBaseline;
  bool estimation = false;
  double flops = 0;      // mean per clip
  double latency_s = 0;  // mean per clip
  double speedup = 1;
  double error = 0;  // mean relative L2 of the final latent vs. baseline
};

struct AblationResult {
  std::vector<AblationRow> rows;
  /// Seeds on which lcp with estimation is at least as close to baseline as
  /// lcp without it.
  int estimation_wins = 0;
  int seeds = 0;
};

/// Strategy grid over cfg.ablate_seeds; writes ablation.csv and ablation.json.
AblationResult cmd_ablate(const RunConfig& cfg);

/// Compares report `accel` against the base report `base` (report.json paths
/// or their directories).
nlohmann::json compare_reports(const std::filesystem::path& base, const std::filesystem::path& accel);
/// compare_reports written to out_dir/comparison.json.
nlohmann::json cmd_compare(const std::filesystem::path& base, const std::filesystem::path& accel,
                           const std::filesystem::path& out_dir);

}  // namespace fastdenoise
