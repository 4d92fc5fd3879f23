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

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fastdenoise {

/// Ordered list of extents. A zero extent denotes an empty array.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t numel() const;
  std::string to_string() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

enum class FiniteCheck { kOff, kOn };

/// Dense row-major array of 32-bit reals.
///
/// Kernels never alias or view: every operation returns a fresh array, so a
/// const DenseArray can be shared freely between threads.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(Shape shape, float fill = 0.0f);
  DenseArray(Shape shape, std::vector<float> data,
             FiniteCheck check = FiniteCheck::kOff);

  static DenseArray matrix(std::size_t rows, std::size_t cols,
                           std::initializer_list<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> values() const { return data_; }
  std::span<float> values() { return data_; }
  const float* data() const { return data_.data(); }
  float* data() { return data_.data(); }

  float operator[](std::size_t flat) const { return data_[flat]; }
  float& operator[](std::size_t flat) { return data_[flat]; }
  float at(std::size_t r, std::size_t c) const;

  DenseArray reshaped(Shape shape) const;
  bool all_finite() const;

  /// Byte-level equality of shape and payload.
  bool bit_equal(const DenseArray& other) const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// ---- kernels --------------------------------------------------------------
//
// All kernels accumulate in float, in a fixed ascending order, so results are
// reproducible bit-for-bit against naive loop oracles.

/// c[i,j] = sum_p a[i,p] * b[p,j], p ascending.
DenseArray matmul(const DenseArray& a, const DenseArray& b);
DenseArray transpose(const DenseArray& a);

/// Row softmax with per-row max subtraction.
DenseArray softmax_rows(const DenseArray& x);

/// softmax(Q K^T / sqrt(d)) without the value product.
DenseArray attention_probabilities(const DenseArray& q, const DenseArray& k);

/// softmax(Q K^T / sqrt(d)) V. V may have a different width from Q/K.
DenseArray scaled_dot_attention(const DenseArray& q, const DenseArray& k,
                                const DenseArray& v);

/// 3x3 cross-correlation with zero padding 1. x is [c_in, h, w], kernel is
/// [c_out, c_in, 3, 3]. stride 2 halves the spatial extents (rounding up).
DenseArray conv2d(const DenseArray& x, const DenseArray& kernel, int stride = 1);

/// [c, h, w] -> [c, 2h, 2w], each pixel replicated into a 2x2 block.
DenseArray upsample_nearest(const DenseArray& x);
/// [c, 2h, 2w] -> [c, h, w], top-left sample of each 2x2 block.
DenseArray downsample_nearest(const DenseArray& x);

/// Stacks two 2-D arrays along rows.
DenseArray concat_rows(const DenseArray& a, const DenseArray& b);
/// Stacks two [c, h, w] arrays along channels.
DenseArray concat_channels(const DenseArray& a, const DenseArray& b);

DenseArray add(const DenseArray& a, const DenseArray& b);
/// alpha * a + beta * b, evaluated elementwise in float.
DenseArray axpby(float alpha, const DenseArray& a, float beta, const DenseArray& b);
DenseArray scale(const DenseArray& a, float alpha);
DenseArray silu(const DenseArray& x);
/// x is [c, ...]; adds bias[c] to every element of channel c.
DenseArray add_channel_bias(const DenseArray& x, const DenseArray& bias);
/// Zero mean, unit variance over the whole array (statistics in double).
DenseArray normalize(const DenseArray& x, double eps = 1e-5);
/// normalize() applied to each row of an [m x n] array.
DenseArray normalize_rows(const DenseArray& x, double eps = 1e-5);

// ---- reductions -------------------------------------------------------------

double l2_norm(const DenseArray& a);
double l2_distance(const DenseArray& a, const DenseArray& b);
/// ||a - b|| / ||b||; 0 when both are zero.
double relative_l2(const DenseArray& a, const DenseArray& b);
double cosine_similarity(const DenseArray& a, const DenseArray& b);

/// FNV-1a over shape and payload bytes.
std::uint64_t checksum(const DenseArray& a);
std::string checksum_hex(const DenseArray& a);

}  // namespace fastdenoise
