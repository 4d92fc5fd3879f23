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
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fastdenoise/scheduler.hpp"
#include "fastdenoise/unet.hpp"

namespace fastdenoise {

enum class Variant { kBaseline, kLcp, kLcpDfa, kLcpDfaRm };

std::string_view to_string(Variant v);
/// Accepts baseline, lcp, lcp_dfa, lcp_dfa_rm; throws ConfigError otherwise.
Variant parse_variant(std::string_view name);

struct Strategy {
  Variant variant = Variant::kLcp;
  bool estimation = true;
  int workers = 1;
  /// Fixed cost added per dispatched non-key prediction in the latency model.
  double dispatch_overhead_s = 0.0;

  bool caches() const { return variant != Variant::kBaseline; }
  bool dfa() const { return variant == Variant::kLcpDfa || variant == Variant::kLcpDfaRm; }
  bool removal() const { return variant == Variant::kLcpDfaRm; }
};

/// Everything a block's non-key steps read, written once at its key step.
struct CacheEntry {
  DenseArray f_u31;
  DenseArray eps_key;
  DenseArray z_after_key;
  DfaState background;  // empty unless the strategy uses DFA
};

class CacheStore {
 public:
  /// Throws InvariantError if (clip, key) was already written.
  void put(int clip, int key, CacheEntry entry);
  /// Throws InvariantError if (clip, key) is missing.
  const CacheEntry& get(int clip, int key) const;
  bool contains(int clip, int key) const { return entries_.count({clip, key}) != 0; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::pair<int, int>, CacheEntry> entries_;
};

enum class StepKind { kKey, kNonKey };
std::string_view to_string(StepKind k);

struct StepRecord {
  int t = 0;
  StepKind kind = StepKind::kKey;
  std::uint64_t flops = 0;
  std::int64_t wall_ns = 0;
  /// Thread CPU time of the noise prediction; feeds the latency model.
  std::int64_t compute_ns = 0;
};

/// Inputs shared by every step of a clip.
struct DenoiseSetup {
  const ToyUNet& net;
  const NoiseSchedule& sched;
  const TimestepPlan& plan;
  const Conditioning& cond;
  Strategy strategy;
  int clip = 0;
};

/// Called after each noise prediction with the step's input latent.
using StepObserver = std::function<void(const StepRecord&, const DenseArray& z_in, const ForwardTrace&)>;

struct DenoiseOptions {
  bool keep_latents = false;
  /// Extra capture sites requested on every forward.
  std::vector<std::string> capture_sites;
  bool capture_reference_weights = false;
  StepObserver observer;
};

struct DenoiseReport {
  Strategy strategy;
  TimestepPlan plan;
  std::vector<StepRecord> steps;
  FlopLedger flops;
  DenseArray final_latent;
  std::vector<DenseArray> latents;  // latent after each step, if kept
  /// Modeled per-clip latency: key steps serially, each block's non-key
  /// predictions spread round-robin over the workers.
  double latency_s = 0.0;
  std::int64_t wall_ns = 0;

  std::uint64_t total_flops() const;
};

/// Full forward at key timestep t. Writes the block's cache entry (when the
/// strategy caches) and returns the latent at the block's next timestep.
DenseArray run_key_step(const DenoiseSetup& setup, CacheStore& cache, const DenseArray& z_t, int t,
                        StepRecord* record = nullptr, FlopLedger* ledger = nullptr,
                        const DenoiseOptions& options = {});

/// Estimated inputs for the 2nd..last non-key steps of `block`, all driven by
/// eps_key. Empty for blocks with fewer than two non-key steps.
std::vector<DenseArray> estimate_input_latents(const DenseArray& z_after_key, const DenseArray& eps_key,
                                               const PlanBlock& block, const NoiseSchedule& sched);

struct BlockResult {
  DenseArray z_out;
  std::vector<StepRecord> steps;
  std::vector<DenseArray> latents;  // after each non-key step
  FlopLedger flops;
};

/// Parallel noise prediction for a block's non-key steps followed by the
/// sequential update. `estimate` selects estimated over reused inputs.
BlockResult run_nonkey_block(const DenoiseSetup& setup, const CacheStore& cache, const PlanBlock& block,
                             bool estimate, const DenoiseOptions& options = {});

/// Samples one clip from z_T under setup.strategy.
DenoiseReport denoise_clip(const DenoiseSetup& setup, const DenseArray& z_T,
                           const DenoiseOptions& options = {});

/// Splits [F_total x ...] audio into ceil(F_total / f) clips of f frames, the
/// last zero-padded. Returns (clip, valid frame count) pairs.
std::vector<std::pair<DenseArray, int>> segment_audio(const DenseArray& audio, int f);

/// Per-clip conditioning sharing one reference feature set and mask.
std::vector<Conditioning> segment_condition(const DenseArray& audio, int f,
                                            const std::vector<DenseArray>& reference,
                                            std::shared_ptr<const ForegroundMask> mask);

}  // namespace fastdenoise
