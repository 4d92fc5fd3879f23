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

#include "fastdenoise/scheduler.hpp"

#include <algorithm>
#include <cmath>

#include "fastdenoise/error.hpp"

namespace fastdenoise {
namespace {

StepCoefficients ddim_coefficients(double ab_to, double ab_from) {
  StepCoefficients c;
  c.lambda = std::sqrt(ab_to / ab_from);
  c.tau = std::sqrt(ab_to) * (std::sqrt(1.0 / ab_to - 1.0) - std::sqrt(1.0 / ab_from - 1.0));
  return c;
}

void check_t(const NoiseSchedule& sched, int t, int lo, const char* what) {
  if (t < lo || t > sched.T()) {
    throw ConfigError(std::string(what) + ": timestep " + std::to_string(t) +
                      " outside [" + std::to_string(lo) + ", " + std::to_string(sched.T()) + "]");
  }
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T_ = T;
  s.beta_start_ = beta_start;
  s.beta_end_ = beta_end;
  s.beta_.resize(T);
  s.alpha_bar_.resize(T + 1);
  s.lambda_.resize(T);
  s.tau_.resize(T);
  s.alpha_bar_[0] = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    s.beta_[t - 1] = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t - 1]);
    const auto c = ddim_coefficients(s.alpha_bar_[t - 1], s.alpha_bar_[t]);
    s.lambda_[t - 1] = c.lambda;
    s.tau_[t - 1] = c.tau;
  }
  return s;
}

double NoiseSchedule::beta(int t) const {
  check_t(*this, t, 1, "beta");
  return beta_[t - 1];
}
double NoiseSchedule::alpha_bar(int t) const {
  check_t(*this, t, 0, "alpha_bar");
  return alpha_bar_[t];
}
double NoiseSchedule::lambda(int t) const {
  check_t(*this, t, 1, "lambda");
  return lambda_[t - 1];
}
double NoiseSchedule::tau(int t) const {
  check_t(*this, t, 1, "tau");
  return tau_[t - 1];
}

StepCoefficients skip_coefficients(const NoiseSchedule& sched, int t_from, int t_to) {
  check_t(sched, t_from, 1, "ddim step");
  check_t(sched, t_to, 0, "ddim step");
  if (t_to >= t_from) {
    throw ConfigError("ddim step: t_to " + std::to_string(t_to) +
                      " must be below t_from " + std::to_string(t_from));
  }
  return ddim_coefficients(sched.alpha_bar(t_to), sched.alpha_bar(t_from));
}

DenseArray forward_diffuse(const DenseArray& z0, int t, const DenseArray& eps,
                           const NoiseSchedule& sched) {
  check_t(sched, t, 0, "forward_diffuse");
  const double ab = sched.alpha_bar(t);
  return axpby(static_cast<float>(std::sqrt(ab)), z0,
               static_cast<float>(std::sqrt(1.0 - ab)), eps);
}

DenseArray ddim_step(const DenseArray& z_t, const DenseArray& eps_pred, int t,
                     const NoiseSchedule& sched) {
  check_t(sched, t, 1, "ddim_step");
  return axpby(static_cast<float>(sched.lambda(t)), z_t,
               static_cast<float>(sched.tau(t)), eps_pred);
}

DenseArray ddim_step_skipping(const DenseArray& z_t, const DenseArray& eps_pred,
                              int t_from, int t_to, const NoiseSchedule& sched) {
  const auto c = skip_coefficients(sched, t_from, t_to);
  return axpby(static_cast<float>(c.lambda), z_t, static_cast<float>(c.tau), eps_pred);
}

// ---- plans --------------------------------------------------------------------

int PlanBlock::successor(int t) const {
  if (t == key) return nonkeys.empty() ? exit : nonkeys.front();
  const auto it = std::find(nonkeys.begin(), nonkeys.end(), t);
  if (it == nonkeys.end()) {
    throw InvariantError("timestep " + std::to_string(t) + " not in block keyed at " +
                         std::to_string(key));
  }
  return std::next(it) == nonkeys.end() ? exit : *std::next(it);
}

bool TimestepPlan::is_key(int t) const {
  return std::any_of(blocks.begin(), blocks.end(),
                     [t](const PlanBlock& b) { return b.key == t; });
}

const PlanBlock& TimestepPlan::block_for_key(int t) const {
  for (const auto& b : blocks)
    if (b.key == t) return b;
  throw InvariantError("timestep " + std::to_string(t) + " is not a key of the plan");
}

std::size_t TimestepPlan::nonkey_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.nonkeys.size();
  return n;
}

TimestepPlan build_timestep_plan(const NoiseSchedule& sched, int S, int block_size,
                                 double t_thresh_fraction) {
  const int T = sched.T();
  if (S < 1) throw ConfigError("plan: S must be >= 1");
  if (S > T) {
    throw ConfigError("plan: S=" + std::to_string(S) + " exceeds T=" + std::to_string(T));
  }
  std::vector<int> sampled;
  if (S == 1) {
    sampled.push_back(T);
  } else {
    for (int k = S - 1; k >= 0; --k) {
      sampled.push_back(1 + static_cast<int>(std::floor(
                                static_cast<double>(k) * (T - 1) / (S - 1))));
    }
  }
  sampled.erase(std::unique(sampled.begin(), sampled.end()), sampled.end());
  return build_timestep_plan(sched, std::move(sampled), block_size, t_thresh_fraction);
}

TimestepPlan build_timestep_plan(const NoiseSchedule& sched, std::vector<int> sampled,
                                 int block_size, double t_thresh_fraction) {
  if (block_size < 1) throw ConfigError("plan: block size N must be >= 1");
  if (!(t_thresh_fraction >= 0.0 && t_thresh_fraction <= 1.0)) {
    throw ConfigError("plan: t_thresh_fraction must lie in [0, 1]");
  }
  if (sampled.empty()) throw ConfigError("plan: no sampled timesteps");
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    if (sampled[i] < 1 || sampled[i] > sched.T() || (i && sampled[i] >= sampled[i - 1])) {
      throw ConfigError("plan: sampled timesteps must be strictly descending within [1, T]");
    }
  }
  TimestepPlan plan;
  plan.T = sched.T();
  plan.block_size = block_size;
  plan.t_thresh_fraction = t_thresh_fraction;
  plan.sampled = std::move(sampled);

  const auto S = plan.sampled.size();
  const auto thresh_index =
      static_cast<std::size_t>(std::ceil(t_thresh_fraction * static_cast<double>(S)));
  plan.t_thresh = thresh_index >= S ? 0 : plan.sampled[thresh_index];

  for (std::size_t i = 0; i < S; i += block_size) {
    PlanBlock b;
    b.key = plan.sampled[i];
    const std::size_t end = std::min(S, i + block_size);
    for (std::size_t j = i + 1; j < end; ++j) b.nonkeys.push_back(plan.sampled[j]);
    b.exit = end < S ? plan.sampled[end] : 0;
    b.estimate = b.key <= plan.t_thresh;
    plan.blocks.push_back(std::move(b));
  }
  return plan;
}

}  // namespace fastdenoise
