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

#include <span>
#include <string>
#include <vector>

#include "fastdenoise/tensor.hpp"

namespace fastdenoise {

/// DDIM coefficient tables over trained timesteps 1..T.
///
/// alpha_bar(0) == 1 by convention. lambda/tau are the deterministic DDIM
/// coefficients z_{t-1} = lambda_t z_t + tau_t eps, written in terms of the
/// cumulative products alpha_bar.
class NoiseSchedule {
 public:
  /// Linear beta from beta_start (t = 1) to beta_end (t = T).
  static NoiseSchedule linear(int T, double beta_start, double beta_end);

  int T() const { return T_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  double beta(int t) const;
  double alpha_bar(int t) const;
  double lambda(int t) const;
  double tau(int t) const;

 private:
  int T_ = 0;
  double beta_start_ = 0, beta_end_ = 0;
  std::vector<double> beta_;       // [T], beta_[t-1]
  std::vector<double> alpha_bar_;  // [T+1]
  std::vector<double> lambda_;     // [T]
  std::vector<double> tau_;        // [T]
};

struct StepCoefficients {
  double lambda = 1.0;
  double tau = 0.0;
};

/// Coefficients of the deterministic update from t_from down to t_to.
StepCoefficients skip_coefficients(const NoiseSchedule& sched, int t_from, int t_to);

/// sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps, for 0 <= t <= T.
DenseArray forward_diffuse(const DenseArray& z0, int t, const DenseArray& eps,
                           const NoiseSchedule& sched);

/// One reverse step t -> t-1.
DenseArray ddim_step(const DenseArray& z_t, const DenseArray& eps_pred, int t,
                     const NoiseSchedule& sched);

/// Reverse step between non-adjacent sampled timesteps; t_to may be 0.
DenseArray ddim_step_skipping(const DenseArray& z_t, const DenseArray& eps_pred,
                              int t_from, int t_to, const NoiseSchedule& sched);

/// A key timestep followed by the non-key timesteps that reuse its cache.
struct PlanBlock {
  int key = 0;
  std::vector<int> nonkeys;  // descending
  int exit = 0;              // timestep the block's last step lands on (0 = clean)
  bool estimate = false;     // past the estimation threshold

  std::size_t size() const { return 1 + nonkeys.size(); }
  /// Timestep that follows `t` inside this block, or `exit` for the last one.
  int successor(int t) const;
};

struct TimestepPlan {
  int T = 0;
  int block_size = 1;
  double t_thresh_fraction = 0.0;
  /// Blocks whose key is <= t_thresh apply input latents estimation;
  /// 0 means no block does.
  int t_thresh = 0;
  std::vector<int> sampled;  // descending
  std::vector<PlanBlock> blocks;

  bool is_key(int t) const;
  const PlanBlock& block_for_key(int t) const;
  std::size_t nonkey_count() const;
};

/// S timesteps uniformly spaced over [1, T] (floor rounding, descending),
/// grouped greedily into blocks of `block_size`.
TimestepPlan build_timestep_plan(const NoiseSchedule& sched, int S, int block_size,
                                 double t_thresh_fraction);

/// Builds a plan from an explicit descending list of sampled timesteps.
TimestepPlan build_timestep_plan(const NoiseSchedule& sched, std::vector<int> sampled,
                                 int block_size, double t_thresh_fraction);

}  // namespace fastdenoise
