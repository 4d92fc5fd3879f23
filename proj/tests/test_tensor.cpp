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
#include <cstring>
#include <fstream>
#include <limits>

#include "fastdenoise/error.hpp"
#include "fastdenoise/rng.hpp"
#include "fastdenoise/tensor.hpp"
#include "fastdenoise/tns.hpp"
#include "test_util.hpp"

using namespace fastdenoise;
using namespace fastdenoise::testing;

TEST(Shape, NumelAndFormatting) {
  EXPECT_EQ(Shape({2, 3, 4}).numel(), 24u);
  EXPECT_EQ(Shape({2, 0}).numel(), 0u);
  EXPECT_EQ(Shape({2, 3}).to_string(), "[2x3]");
}

TEST(DenseArray, ConstructionChecksLength) {
  EXPECT_THROW(DenseArray(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_NO_THROW(DenseArray(Shape{2, 2}, std::vector<float>{1, 2, 3, 4}));
}

TEST(DenseArray, CheckedModeRejectsNonFinite) {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  EXPECT_THROW(DenseArray(Shape{2}, std::vector<float>{1, nan}, FiniteCheck::kOn), ShapeError);
  EXPECT_THROW(DenseArray(Shape{1}, std::vector<float>{inf}, FiniteCheck::kOn), ShapeError);
  EXPECT_FALSE(DenseArray(Shape{1}, std::vector<float>{inf}).all_finite());
}

TEST(Matmul, IdentityAndHandArithmetic) {
  const auto id = DenseArray::matrix(2, 2, {1, 0, 0, 1});
  const auto col = DenseArray::matrix(2, 1, {3, 4});
  EXPECT_TRUE(matmul(id, col).bit_equal(col));
  const auto row = DenseArray::matrix(1, 2, {1, 2});
  EXPECT_EQ(matmul(row, col)[0], 11.0f);
}

TEST(Matmul, BitEqualsNaiveTripleLoop) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = random_array(Shape{8, 8}, seed);
    const auto b = random_array(Shape{8, 8}, seed + 100);
    EXPECT_TRUE(matmul(a, b).bit_equal(naive_matmul(a, b))) << "seed " << seed;
  }
  const auto a = random_array(Shape{7, 13}, 9);
  const auto b = random_array(Shape{13, 5}, 10);
  EXPECT_TRUE(matmul(a, b).bit_equal(naive_matmul(a, b)));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(DenseArray(Shape{2, 3}), DenseArray(Shape{4, 5}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(Softmax, ClosedFormRows) {
  const auto s = softmax_rows(DenseArray::matrix(3, 2, {0, 0, 1000, 1000, 0, std::log(3.0f)}));
  EXPECT_FLOAT_EQ(s.at(0, 0), 0.5f);
  EXPECT_FLOAT_EQ(s.at(1, 1), 0.5f);
  EXPECT_NEAR(s.at(2, 0), 0.25, 1e-7);
  EXPECT_NEAR(s.at(2, 1), 0.75, 1e-7);
}

TEST(Softmax, RowsAreDistributions) {
  const auto s = softmax_rows(random_array(Shape{16, 37}, 3, 10.0f));
  for (std::size_t r = 0; r < 16; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 37; ++c) {
      EXPECT_GE(s.at(r, c), 0.0f);
      sum += s.at(r, c);
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Softmax, EmptyRowDimensionThrows) {
  EXPECT_THROW(softmax_rows(DenseArray(Shape{3, 0})), ShapeError);
}

TEST(Attention, MatchesDoubleOracle) {
  const auto q = random_array(Shape{6, 4}, 1), k = random_array(Shape{9, 4}, 2), v = random_array(Shape{9, 3}, 3);
  EXPECT_LT(max_diff(scaled_dot_attention(q, k, v), attention_oracle(q, k, v)), 1e-6);
}

TEST(Attention, RejectsEmptyKeysAndHeadMismatch) {
  EXPECT_THROW(attention_probabilities(DenseArray(Shape{2, 4}), DenseArray(Shape{0, 4})), ShapeError);
  EXPECT_THROW(attention_probabilities(DenseArray(Shape{2, 4}), DenseArray(Shape{3, 5})), ShapeError);
}

// Sliding-window definition: taps outside the input contribute nothing,
// accumulation over (ci, ky, kx) ascending.
DenseArray conv_oracle(const DenseArray& x, const DenseArray& k, int stride) {
  const std::size_t ci = x.dim(0), h = x.dim(1), w = x.dim(2), co = k.dim(0);
  const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  DenseArray y(Shape{co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < ci; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const long iy = long(oy) * stride + ky - 1, ix = long(ox) * stride + kx - 1;
              if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
              acc += k[((o * ci + c) * 3 + ky) * 3 + kx] * x[(c * h + iy) * w + ix];
            }
        y[(o * oh + oy) * ow + ox] = acc;
      }
  return y;
}

TEST(Conv2d, BitEqualsSlidingWindowOracle) {
  const auto x = random_array(Shape{3, 8, 6}, 11);
  const auto k = random_array(Shape{5, 3, 3, 3}, 12);
  EXPECT_TRUE(conv2d(x, k, 1).bit_equal(conv_oracle(x, k, 1)));
  EXPECT_TRUE(conv2d(x, k, 2).bit_equal(conv_oracle(x, k, 2)));
}

TEST(Conv2d, CenterTapKernelIsIdentity) {
  const auto x = random_array(Shape{2, 4, 4}, 5);
  DenseArray k(Shape{2, 2, 3, 3});
  k[((0 * 2 + 0) * 3 + 1) * 3 + 1] = 1.0f;
  k[((1 * 2 + 1) * 3 + 1) * 3 + 1] = 1.0f;
  EXPECT_TRUE(conv2d(x, k).bit_equal(x));
}

TEST(Conv2d, ChannelMismatchThrows) {
  EXPECT_THROW(conv2d(DenseArray(Shape{2, 4, 4}), DenseArray(Shape{1, 3, 3, 3})), ShapeError);
  EXPECT_THROW(conv2d(DenseArray(Shape{2, 4, 4}), DenseArray(Shape{1, 2, 3, 3}), 3), ShapeError);
}

TEST(Resampling, UpThenDownIsIdentity) {
  const auto x = random_array(Shape{3, 4, 5}, 8);
  const auto up = upsample_nearest(x);
  EXPECT_EQ(up.shape(), (Shape{3, 8, 10}));
  EXPECT_TRUE(downsample_nearest(up).bit_equal(x));
}

TEST(Concat, RowsAndChannels) {
  const auto a = DenseArray::matrix(1, 2, {1, 2}), b = DenseArray::matrix(2, 2, {3, 4, 5, 6});
  const auto r = concat_rows(a, b);
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r.at(2, 1), 6.0f);
  const auto c = concat_channels(DenseArray(Shape{1, 2, 2}, 1.0f), DenseArray(Shape{2, 2, 2}, 2.0f));
  EXPECT_EQ(c.shape(), (Shape{3, 2, 2}));
  EXPECT_EQ(c[3], 1.0f);
  EXPECT_EQ(c[4], 2.0f);
  EXPECT_THROW(concat_channels(DenseArray(Shape{1, 2, 2}), DenseArray(Shape{1, 3, 2})), ShapeError);
}

TEST(Elementwise, AxpbyAndBias) {
  const auto a = DenseArray::matrix(1, 3, {1, 2, 3}), b = DenseArray::matrix(1, 3, {4, 5, 6});
  const auto y = axpby(2.0f, a, -1.0f, b);
  EXPECT_EQ(y[0], -2.0f);
  EXPECT_EQ(y[2], 0.0f);
  const auto biased = add_channel_bias(DenseArray(Shape{2, 2}), DenseArray(Shape{2}, std::vector<float>{1, -1}));
  EXPECT_EQ(biased[1], 1.0f);
  EXPECT_EQ(biased[2], -1.0f);
  EXPECT_THROW(add(a, DenseArray(Shape{3})), ShapeError);
}

TEST(Normalize, ZeroMeanUnitVariance) {
  const auto y = normalize(random_array(Shape{4, 5, 6}, 2, 3.0f));
  double mean = 0, var = 0;
  for (float v : y.values()) mean += v;
  mean /= y.size();
  for (float v : y.values()) var += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-6);
  EXPECT_NEAR(var / y.size(), 1.0, 1e-4);
}

TEST(Reductions, DistancesAndCosine) {
  const auto a = DenseArray::matrix(1, 2, {3, 4}), b = DenseArray::matrix(1, 2, {0, 0});
  EXPECT_DOUBLE_EQ(l2_norm(a), 5.0);
  EXPECT_DOUBLE_EQ(l2_distance(a, b), 5.0);
  EXPECT_DOUBLE_EQ(relative_l2(b, a), 1.0);
  EXPECT_NEAR(cosine_similarity(a, DenseArray::matrix(1, 2, {-4, 3})), 0.0, 1e-12);
}

TEST(Checksum, SensitiveToShapeAndPayload) {
  const auto a = DenseArray::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(checksum(a), checksum(DenseArray::matrix(2, 2, {1, 2, 3, 4})));
  EXPECT_NE(checksum(a), checksum(a.reshaped(Shape{4, 1})));
  EXPECT_NE(checksum(a), checksum(DenseArray::matrix(2, 2, {1, 2, 3, 5})));
  EXPECT_EQ(checksum_hex(a).size(), 16u);
}

TEST(Rng, MatchesFrozenSeedZeroStream) {
  std::ifstream in(std::string(FD_TEST_DATA_DIR) + "/rng_seed0.txt");
  ASSERT_TRUE(in.good());
  Rng rng(0);
  std::string line;
  int checked = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    EXPECT_EQ(rng.next_u64(), std::stoull(line)) << "value " << checked;
    ++checked;
  }
  EXPECT_EQ(checked, 16);
}

TEST(Rng, NormalMoments) {
  Rng rng(42);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, UniformIsInUnitInterval) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LE(u, 1.0);
  }
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(0, 1), derive_seed(0, 2));
  EXPECT_NE(derive_seed(0, 1), derive_seed(1, 1));
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(Tns, RoundTripsBitExactly) {
  const auto a = random_array(Shape{2, 3, 4}, 17);
  EXPECT_TRUE(decode_tns(encode_tns(a)).bit_equal(a));
  const auto dir = scratch_dir("tns");
  write_tns(dir / "a.tns", a);
  EXPECT_TRUE(read_tns(dir / "a.tns").bit_equal(a));
}

TEST(Tns, RejectsMalformedInput) {
  EXPECT_THROW(decode_tns("garbage"), ConfigError);
  EXPECT_THROW(decode_tns("shape: 2,2\n1234"), ConfigError);
  std::string bytes = encode_tns(DenseArray(Shape{1}));
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
  EXPECT_THROW(decode_tns(bytes), ConfigError);
  EXPECT_THROW(read_tns("/nonexistent/x.tns"), ConfigError);
}
