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

#include <gtest/gtest.h>

#include <cmath>

#include "fastdenoise/engine.hpp"
#include "fastdenoise/error.hpp"
#include "fastdenoise/scheduler.hpp"
#include "test_util.hpp"

using namespace fastdenoise;
using namespace fastdenoise::testing;

namespace {

// Constant beta = 0.1 over T = 10. Closed-form values come from
// tests/oracles/golden_values.py (40-digit arithmetic).
NoiseSchedule constant_schedule() { return NoiseSchedule::linear(10, 0.1, 0.1); }

constexpr double kLambda2 = 1.05409255339;
constexpr double kTau2 = -0.14324052572;
constexpr double kLambda1 = 1.05409255339;
constexpr double kTau1 = -0.333333333333;
constexpr double kZ2 = 1.33588989435;
constexpr double kZ1 = 1.26491106407;

}  // namespace

TEST(NoiseSchedule, LinearEndpointsAndAlphaBar) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta(1000), 0.02);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
  EXPECT_NEAR(s.alpha_bar(1000), 4.03582976538e-5, 1e-14);
  for (int t = 1; t <= 1000; ++t) ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
}

TEST(NoiseSchedule, CoefficientsMatchHighPrecisionOracle) {
  const auto s = constant_schedule();
  EXPECT_NEAR(s.lambda(2), kLambda2, 1e-10);
  EXPECT_NEAR(s.tau(2), kTau2, 1e-10);
  EXPECT_NEAR(s.lambda(1), kLambda1, 1e-10);
  EXPECT_NEAR(s.tau(1), kTau1, 1e-10);
}

TEST(NoiseSchedule, TauStaysNegativeOnDefaultSchedule) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  double max_tau = -INFINITY;
  for (int t = 1; t <= 1000; ++t) {
    EXPECT_GT(s.lambda(t), 1.0);
    max_tau = std::max(max_tau, s.tau(t));
  }
  EXPECT_NEAR(max_tau, -0.00318949759264, 1e-12);
}

TEST(NoiseSchedule, RejectsBadParameters) {
  EXPECT_THROW(NoiseSchedule::linear(0, 1e-4, 0.02), ConfigError);
  EXPECT_THROW(NoiseSchedule::linear(10, 0.0, 0.02), ConfigError);
  EXPECT_THROW(NoiseSchedule::linear(10, 0.03, 0.02), ConfigError);
  EXPECT_THROW(NoiseSchedule::linear(10, 0.1, 1.0), ConfigError);
  const auto s = constant_schedule();
  EXPECT_THROW(s.lambda(0), ConfigError);
  EXPECT_THROW(s.alpha_bar(11), ConfigError);
}

TEST(Ddim, ScalarStepsMatchOracle) {
  const auto s = constant_schedule();
  const DenseArray z2(Shape{1}, static_cast<float>(kZ2)), eps(Shape{1}, 1.0f);
  const auto z1 = ddim_step(z2, eps, 2, s);
  EXPECT_NEAR(z1[0], kZ1, 1e-6);
  const auto z0 = ddim_step(z1, eps, 1, s);
  EXPECT_NEAR(z0[0], 1.0, 1e-6);
}

TEST(Ddim, ForwardDiffuseThenStepRoundTrips) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  for (int t : {1, 2, 500, 999, 1000}) {
    const auto z0 = random_array(Shape{64}, 10 + t), eps = random_array(Shape{64}, 20 + t);
    const auto zt = forward_diffuse(z0, t, eps, s);
    const auto back = ddim_step(zt, eps, t, s);
    EXPECT_LT(relative_l2(back, forward_diffuse(z0, t - 1, eps, s)), 1e-6) << "t=" << t;
  }
}

TEST(Ddim, SkippingComposesToSingleJumpWithExactEps) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const auto z0 = random_array(Shape{32}, 1), eps = random_array(Shape{32}, 2);
  const auto z700 = forward_diffuse(z0, 700, eps, s);
  const auto z400 = ddim_step_skipping(z700, eps, 700, 400, s);
  EXPECT_LT(relative_l2(z400, forward_diffuse(z0, 400, eps, s)), 1e-6);
  EXPECT_THROW(ddim_step_skipping(z700, eps, 400, 700, s), ConfigError);
}

TEST(SkipCoefficients, ChainOfUnitStepsEqualsJump) {
  const auto s = constant_schedule();
  const auto jump = skip_coefficients(s, 3, 1);
  const double lambda = s.lambda(3) * s.lambda(2);
  EXPECT_NEAR(jump.lambda, lambda, 1e-12);
  EXPECT_THROW(skip_coefficients(s, 3, 3), ConfigError);
}

TEST(EstimateInputLatents, ExactNoiseReproducesTrueTrajectory) {
  const auto s = constant_schedule();
  PlanBlock block;
  block.key = 3;
  block.nonkeys = {2, 1};
  block.exit = 0;
  const DenseArray z_after_key(Shape{1}, static_cast<float>(kZ2)), eps(Shape{1}, 1.0f);
  const auto est = estimate_input_latents(z_after_key, eps, block, s);
  ASSERT_EQ(est.size(), 1u);
  EXPECT_NEAR(est[0][0], kZ1, 1e-6);
}

TEST(TimestepPlan, DefaultStructure) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const auto plan = build_timestep_plan(s, 40, 3, 0.6);
  ASSERT_EQ(plan.sampled.size(), 40u);
  EXPECT_EQ(plan.sampled.front(), 1000);
  EXPECT_EQ(plan.sampled.back(), 1);
  EXPECT_EQ(plan.blocks.size(), 14u);
  EXPECT_EQ(plan.nonkey_count(), 26u);
  EXPECT_EQ(plan.t_thresh, plan.sampled[24]);
  std::vector<int> flattened;
  for (const auto& b : plan.blocks) {
    flattened.push_back(b.key);
    flattened.insert(flattened.end(), b.nonkeys.begin(), b.nonkeys.end());
    EXPECT_EQ(b.estimate, b.key <= plan.t_thresh);
  }
  EXPECT_EQ(flattened, plan.sampled);
  EXPECT_EQ(plan.blocks.back().exit, 0);
  EXPECT_EQ(plan.blocks.back().size(), 1u);
  for (std::size_t i = 0; i + 1 < plan.blocks.size(); ++i)
    EXPECT_EQ(plan.blocks[i].exit, plan.blocks[i + 1].key);
}

TEST(TimestepPlan, BlockSizeOneHasNoNonKeys) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const auto plan = build_timestep_plan(s, 20, 1, 0.6);
  EXPECT_EQ(plan.blocks.size(), 20u);
  EXPECT_EQ(plan.nonkey_count(), 0u);
  for (int t : plan.sampled) EXPECT_TRUE(plan.is_key(t));
}

TEST(TimestepPlan, ThresholdExtremes) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const auto none = build_timestep_plan(s, 12, 3, 1.0);
  EXPECT_EQ(none.t_thresh, 0);
  for (const auto& b : none.blocks) EXPECT_FALSE(b.estimate);
  const auto all = build_timestep_plan(s, 12, 3, 0.0);
  for (const auto& b : all.blocks) EXPECT_TRUE(b.estimate);
}

TEST(TimestepPlan, SuccessorWalksTheBlock) {
  const auto s = constant_schedule();
  const auto plan = build_timestep_plan(s, std::vector<int>{9, 7, 5, 3, 1}, 3, 0.5);
  const auto& b = plan.blocks[0];
  EXPECT_EQ(b.successor(9), 7);
  EXPECT_EQ(b.successor(5), 3);
  EXPECT_THROW(b.successor(4), InvariantError);
  EXPECT_EQ(plan.blocks[1].successor(1), 0);
  EXPECT_THROW(plan.block_for_key(7), InvariantError);
}

TEST(TimestepPlan, RejectsBadInputs) {
  const auto s = constant_schedule();
  EXPECT_THROW(build_timestep_plan(s, 0, 3, 0.5), ConfigError);
  EXPECT_THROW(build_timestep_plan(s, 11, 3, 0.5), ConfigError);
  EXPECT_THROW(build_timestep_plan(s, 5, 0, 0.5), ConfigError);
  EXPECT_THROW(build_timestep_plan(s, 5, 2, 1.5), ConfigError);
  EXPECT_THROW(build_timestep_plan(s, std::vector<int>{3, 5}, 2, 0.5), ConfigError);
  EXPECT_THROW(build_timestep_plan(s, std::vector<int>{11, 5}, 2, 0.5), ConfigError);
}
