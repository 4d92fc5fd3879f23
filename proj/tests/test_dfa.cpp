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

#include <memory>

#include "fastdenoise/dfa.hpp"
#include "fastdenoise/error.hpp"
#include "fastdenoise/rng.hpp"
#include "test_util.hpp"

using namespace fastdenoise;
using namespace fastdenoise::testing;

namespace {

std::shared_ptr<const ForegroundMask> random_mask(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> grid(h * w);
  for (auto& g : grid) g = rng.uniform() < 0.4 ? 1 : 0;
  return std::make_shared<ForegroundMask>(h, w, std::move(grid));
}

DfaContext context(std::shared_ptr<const ForegroundMask> mask, DenseArray bg) {
  return DfaContext{std::move(mask), std::move(bg)};
}

// [f x L x d] -> per-location frame attention over all locations, as a full path would.
DenseArray full_frame_attention(const DenseArray& q, const DenseArray& k, const DenseArray& v) {
  std::vector<std::size_t> all(q.dim(1));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return frame_attention(q, k, v, all);
}

}  // namespace

TEST(ForegroundMask, IndexListsPartitionTokens) {
  const auto m = random_mask(5, 7, 1);
  EXPECT_EQ(m->foreground_count() + m->background_count(), 35u);
  for (auto i : m->fg_index()) EXPECT_TRUE(m->is_foreground(i));
  for (auto i : m->bg_index()) EXPECT_FALSE(m->is_foreground(i));
  EXPECT_TRUE(std::is_sorted(m->fg_index().begin(), m->fg_index().end()));
}

TEST(ForegroundMask, BinarizesAndChecksCellCount) {
  EXPECT_EQ(ForegroundMask(2, 2, {0, 1, 2, 0}).grid(), (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_THROW(ForegroundMask(2, 2, {0, 1, 0}), ShapeError);
}

TEST(SynthesizeMask, RectAndFraction) {
  const auto r = synthesize_mask("rect:1,1,3,2", 4, 4);
  EXPECT_EQ(r.foreground_count(), 2u);
  EXPECT_TRUE(r.is_foreground(1 * 4 + 1));
  EXPECT_TRUE(r.is_foreground(1 * 4 + 2));
  EXPECT_EQ(synthesize_mask("frac:0.5", 16, 16).foreground_count(), 128u);
  EXPECT_EQ(synthesize_mask("frac:0", 8, 8).foreground_count(), 0u);
  EXPECT_EQ(synthesize_mask("frac:1", 8, 8).foreground_count(), 64u);
  EXPECT_THROW(synthesize_mask("frac:1.5", 4, 4), ConfigError);
  EXPECT_EQ(synthesize_mask("rect:0,0,9,1", 4, 4).foreground_count(), 4u);  // clamped
  EXPECT_THROW(synthesize_mask("rect:0,0,1", 4, 4), ConfigError);
  EXPECT_THROW(synthesize_mask("circle", 4, 4), ConfigError);
}

TEST(SynthesizeMask, FractionIsCentered) {
  const auto m = synthesize_mask("frac:0.1", 16, 16);
  EXPECT_TRUE(m.is_foreground(8 * 16 + 8));
  EXPECT_FALSE(m.is_foreground(0));
}

TEST(DownsampleMask, AnyOverlapRule) {
  std::vector<std::uint8_t> grid(16, 0);
  grid[3 * 4 + 3] = 1;
  const auto small = downsample_mask(ForegroundMask(4, 4, grid), 2, 2);
  EXPECT_EQ(small.grid(), (std::vector<std::uint8_t>{0, 0, 0, 1}));
  EXPECT_THROW(downsample_mask(ForegroundMask(4, 4, grid), 3, 3), ShapeError);
}

TEST(MaskFile, RoundTrip) {
  const auto m = random_mask(6, 3, 4);
  EXPECT_EQ(parse_mask(format_mask(*m)), *m);
  const auto dir = scratch_dir("mask");
  write_mask_file(dir / "m.txt", *m);
  EXPECT_EQ(read_mask_file(dir / "m.txt"), *m);
  EXPECT_THROW(parse_mask("mask: 2 2\n01\n0x\n"), ConfigError);
  EXPECT_THROW(parse_mask("mask: 2 2\n01\n"), ConfigError);
}

TEST(SelectMerge, MergeInvertsSelect) {
  const auto m = random_mask(4, 4, 9);
  const auto x = random_array(Shape{16, 3}, 2);
  const auto fg = select_tokens(x, m->fg_index());
  const auto bg = select_tokens(x, m->bg_index());
  EXPECT_EQ(fg.dim(0), m->foreground_count());
  EXPECT_TRUE(merge(fg, bg, *m).bit_equal(x));
  const std::vector<std::size_t> unsorted{2, 1};
  EXPECT_THROW(select_tokens(x, unsorted), ShapeError);
  EXPECT_THROW(merge(fg, fg, *m), ShapeError);
}

TEST(DfaAttention, AllOnesMaskEqualsFullAttention) {
  const auto mask = std::make_shared<const ForegroundMask>(ForegroundMask::filled(4, 4, true));
  const auto q = random_array(Shape{16, 8}, 1), k = random_array(Shape{16, 8}, 2),
             v = random_array(Shape{16, 8}, 3), rk = random_array(Shape{16, 8}, 4),
             rv = random_array(Shape{16, 8}, 5);
  const auto ctx = context(mask, DenseArray(Shape{0, 8}));
  EXPECT_TRUE(dfa_attention(q, k, v, ctx, AttentionSite::kReference, &rk, &rv)
                  .bit_equal(scaled_dot_attention(q, concat_rows(k, rk), concat_rows(v, rv))));
  const auto ak = random_array(Shape{4, 8}, 6), av = random_array(Shape{4, 8}, 7);
  EXPECT_TRUE(dfa_attention(q, ak, av, ctx, AttentionSite::kAudio)
                  .bit_equal(scaled_dot_attention(q, ak, av)));
  const auto tq = random_array(Shape{3, 16, 8}, 8), tk = random_array(Shape{3, 16, 8}, 9),
             tv = random_array(Shape{3, 16, 8}, 10);
  const auto tctx = context(mask, DenseArray(Shape{3, 0, 8}));
  EXPECT_TRUE(dfa_attention(tq, tk, tv, tctx, AttentionSite::kTemporal)
                  .bit_equal(full_frame_attention(tq, tk, tv)));
}

TEST(DfaAttention, AllZerosMaskReturnsCache) {
  const auto mask = std::make_shared<const ForegroundMask>(ForegroundMask::filled(4, 4, false));
  const auto q = random_array(Shape{16, 8}, 1), k = random_array(Shape{16, 8}, 2),
             v = random_array(Shape{16, 8}, 3);
  const auto cache = random_array(Shape{16, 8}, 11);
  FlopLedger ledger;
  const auto ctx = context(mask, cache);
  EXPECT_TRUE(dfa_attention(q, k, v, ctx, AttentionSite::kReference, &k, &v, &ledger).bit_equal(cache));
  EXPECT_TRUE(dfa_attention(q, k, v, ctx, AttentionSite::kAudio, nullptr, nullptr, &ledger).bit_equal(cache));
  const auto tcache = random_array(Shape{2, 16, 8}, 12);
  const auto tq = random_array(Shape{2, 16, 8}, 13);
  EXPECT_TRUE(dfa_attention(tq, tq, tq, context(mask, tcache), AttentionSite::kTemporal, nullptr,
                            nullptr, &ledger)
                  .bit_equal(tcache));
  EXPECT_EQ(ledger.total(), 0u);
}

TEST(DfaAttention, RandomMaskForegroundMatchesRestrictedOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto mask = random_mask(4, 5, 100 + seed);
    const std::size_t L = 20;
    const auto q = random_array(Shape{L, 8}, seed * 10 + 1), k = random_array(Shape{L, 8}, seed * 10 + 2),
               v = random_array(Shape{L, 8}, seed * 10 + 3), rk = random_array(Shape{L, 8}, seed * 10 + 4),
               rv = random_array(Shape{L, 8}, seed * 10 + 5);
    const auto bg = random_array(Shape{mask->background_count(), 8}, seed * 10 + 6);
    const auto out = dfa_attention(q, k, v, context(mask, bg), AttentionSite::kReference, &rk, &rv);
    const auto& fg = mask->fg_index();
    const auto oracle = attention_oracle(
        select_tokens(q, fg), concat_rows(select_tokens(k, fg), select_tokens(rk, fg)),
        concat_rows(select_tokens(v, fg), select_tokens(rv, fg)));
    EXPECT_LT(max_diff(select_tokens(out, fg), oracle), 1e-6);
    EXPECT_TRUE(select_tokens(out, mask->bg_index()).bit_equal(bg));
  }
}

TEST(DfaAttention, TemporalForegroundMatchesPerLocationOracle) {
  const auto mask = random_mask(3, 3, 77);
  const std::size_t f = 3, L = 9;
  const auto q = random_array(Shape{f, L, 4}, 1), k = random_array(Shape{f, L, 4}, 2),
             v = random_array(Shape{f, L, 4}, 3);
  const auto bg = random_array(Shape{f, mask->background_count(), 4}, 4);
  const auto out = dfa_attention(q, k, v, context(mask, bg), AttentionSite::kTemporal);
  for (auto loc : mask->fg_index()) {
    DenseArray ql(Shape{f, 4}), kl(Shape{f, 4}), vl(Shape{f, 4});
    for (std::size_t fr = 0; fr < f; ++fr)
      for (std::size_t c = 0; c < 4; ++c) {
        ql[fr * 4 + c] = q[(fr * L + loc) * 4 + c];
        kl[fr * 4 + c] = k[(fr * L + loc) * 4 + c];
        vl[fr * 4 + c] = v[(fr * L + loc) * 4 + c];
      }
    const auto oracle = attention_oracle(ql, kl, vl);
    for (std::size_t fr = 0; fr < f; ++fr)
      for (std::size_t c = 0; c < 4; ++c)
        EXPECT_NEAR(out[(fr * L + loc) * 4 + c], oracle[fr][c], 1e-6);
  }
}

TEST(DfaAttention, CacheShapeMismatchIsReported) {
  const auto mask = random_mask(4, 4, 3);
  const auto q = random_array(Shape{16, 8}, 1);
  EXPECT_THROW(dfa_attention(q, q, q, context(mask, DenseArray(Shape{1, 8})), AttentionSite::kAudio),
               ShapeError);
  EXPECT_THROW(dfa_attention(q, q, q, context(nullptr, DenseArray()), AttentionSite::kAudio), std::exception);
}

TEST(DfaAttention, QuadraticCostAtHalfForeground) {
  const std::size_t L = 64, d = 8;
  const auto mask = std::make_shared<const ForegroundMask>(synthesize_mask("frac:0.5", 8, 8));
  ASSERT_EQ(mask->foreground_count(), L / 2);
  const auto x = random_array(Shape{L, d}, 5);
  FlopLedger full, reduced;
  record_attention_flops(&full, "full", L, L, d);
  dfa_attention(x, x, x, context(mask, DenseArray(Shape{L / 2, d})), AttentionSite::kReference, nullptr,
                nullptr, &reduced);
  const auto cost = [](const FlopLedger& l) {
    return double(l.total(OpTag::kAttentionScores) + l.total(OpTag::kAttentionApply));
  };
  EXPECT_NEAR(cost(reduced) / cost(full), 0.25, 0.25 * 0.05);
}

TEST(GatherBackground, MatchesSelectTokens) {
  const auto mask = random_mask(2, 4, 8);
  const auto out = random_array(Shape{8, 3}, 1);
  EXPECT_TRUE(gather_background(out, *mask).bit_equal(select_tokens(out, mask->bg_index())));
  const auto t = random_array(Shape{2, 8, 3}, 2);
  const auto g = gather_background(t, *mask);
  EXPECT_EQ(g.shape(), (Shape{2, mask->background_count(), 3}));
}
