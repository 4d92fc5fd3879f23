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

#include "fastdenoise/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fastdenoise/error.hpp"

namespace fastdenoise {
namespace {

// Message expressions are evaluated only on failure.
#define FD_REQUIRE(ok, what)                 \
  do {                                       \
    if (!(ok)) throw ShapeError(what);       \
  } while (false)

std::string pair_msg(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": shape mismatch " + a.to_string() + " vs " +
         b.to_string();
}

void require_same(const char* op, const DenseArray& a, const DenseArray& b) {
  FD_REQUIRE(a.shape() == b.shape(), pair_msg(op, a.shape(), b.shape()));
}

}  // namespace

// ---- Shape ------------------------------------------------------------------

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector(dims)) {}

// Zero extents are allowed so that empty token sets (no foreground) exist.
Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (auto d : dims_) n *= d;
  return dims_.empty() ? 0 : n;
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

// ---- DenseArray -------------------------------------------------------------

DenseArray::DenseArray(Shape shape, float fill)
    : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

DenseArray::DenseArray(Shape shape, std::vector<float> data, FiniteCheck check)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.numel() != data_.size()) {
    throw ShapeError("array of shape " + shape_.to_string() + " needs " +
                     std::to_string(shape_.numel()) + " values, got " +
                     std::to_string(data_.size()));
  }
  if (check == FiniteCheck::kOn && !all_finite()) {
    throw ShapeError("non-finite value in array of shape " + shape_.to_string());
  }
}

DenseArray DenseArray::matrix(std::size_t rows, std::size_t cols,
                              std::initializer_list<float> values) {
  return DenseArray(Shape{rows, cols}, std::vector<float>(values));
}

float DenseArray::at(std::size_t r, std::size_t c) const {
  return data_.at(r * shape_[1] + c);
}

DenseArray DenseArray::reshaped(Shape shape) const {
  FD_REQUIRE(shape.numel() == data_.size(),
          "reshape: " + shape_.to_string() + " -> " + shape.to_string());
  return DenseArray(std::move(shape), data_);
}

bool DenseArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

bool DenseArray::bit_equal(const DenseArray& other) const {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(),
                     data_.size() * sizeof(float)) == 0;
}

// ---- kernels ----------------------------------------------------------------

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  FD_REQUIRE(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
             pair_msg("matmul", a.shape(), b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  DenseArray c(Shape{m, n});
  const float* pa = a.data();
  const float* pb = b.data();
  float* pc = c.data();
  // i-p-j order: every c[i,j] still accumulates over p in ascending order.
  for (std::size_t i = 0; i < m; ++i) {
    float* row = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float aip = pa[i * k + p];
      const float* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return c;
}

DenseArray transpose(const DenseArray& a) {
  FD_REQUIRE(a.rank() == 2, "transpose: expected rank 2, got " + a.shape().to_string());
  const std::size_t m = a.dim(0), n = a.dim(1);
  DenseArray t(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

DenseArray softmax_rows(const DenseArray& x) {
  FD_REQUIRE(x.rank() == 2, "softmax_rows: expected rank 2, got " + x.shape().to_string());
  const std::size_t m = x.dim(0), n = x.dim(1);
  FD_REQUIRE(n >= 1, "softmax_rows: empty row dimension in " + x.shape().to_string());
  DenseArray y(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const float* in = x.data() + i * n;
    float* out = y.data() + i * n;
    float mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    float sum = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
  }
  return y;
}

DenseArray attention_probabilities(const DenseArray& q, const DenseArray& k) {
  FD_REQUIRE(q.rank() == 2 && k.rank() == 2 && q.dim(1) == k.dim(1) && q.dim(1) >= 1,
          pair_msg("attention: head dimension", q.shape(), k.shape()));
  FD_REQUIRE(k.dim(0) >= 1, "attention: no keys in " + k.shape().to_string());
  DenseArray scores = matmul(q, transpose(k));
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(q.dim(1)));
  for (auto& s : scores.values()) s *= inv_sqrt_d;
  return softmax_rows(scores);
}

DenseArray scaled_dot_attention(const DenseArray& q, const DenseArray& k,
                                const DenseArray& v) {
  FD_REQUIRE(v.rank() == 2 && v.dim(0) == k.dim(0),
          pair_msg("attention: key/value length", k.shape(), v.shape()));
  return matmul(attention_probabilities(q, k), v);
}

DenseArray conv2d(const DenseArray& x, const DenseArray& kernel, int stride) {
  FD_REQUIRE(x.rank() == 3, "conv2d: input must be [c,h,w], got " + x.shape().to_string());
  FD_REQUIRE(kernel.rank() == 4 && kernel.dim(2) == 3 && kernel.dim(3) == 3,
          "conv2d: kernel must be [c_out,c_in,3,3], got " + kernel.shape().to_string());
  FD_REQUIRE(kernel.dim(1) == x.dim(0), pair_msg("conv2d: channel", x.shape(), kernel.shape()));
  FD_REQUIRE(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");

  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = kernel.dim(0);
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t oh = (h + s - 1) / s, ow = (w + s - 1) / s;
  DenseArray y(Shape{cout, oh, ow});
  const float* in = x.data();
  const float* kw = kernel.data();
  float* out = y.data();

  // Per output element the accumulation order is (ci, ky, kx) ascending with
  // out-of-bounds taps skipped, same as the sliding-window definition.
  for (std::size_t co = 0; co < cout; ++co) {
    float* plane = out + co * oh * ow;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const float* src = in + ci * h * w;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const float wt = kw[((co * cin + ci) * 3 + ky) * 3 + kx];
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - 1;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const float* srow = src + iy * w;
            float* orow = plane + oy * ow;
            if (s == 1) {
              const std::size_t x0 = kx == 0 ? 1 : 0;
              const std::size_t x1 = kx == 2 ? ow - 1 : ow;
              for (std::size_t ox = x0; ox < x1; ++ox) orow[ox] += wt * srow[ox + kx - 1];
            } else {
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * 2 + kx) - 1;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                orow[ox] += wt * srow[ix];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

DenseArray upsample_nearest(const DenseArray& x) {
  FD_REQUIRE(x.rank() == 3, "upsample_nearest: expected [c,h,w], got " + x.shape().to_string());
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  DenseArray y(Shape{c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j)
        y[(ch * 2 * h + i) * 2 * w + j] = x[(ch * h + i / 2) * w + j / 2];
  return y;
}

DenseArray downsample_nearest(const DenseArray& x) {
  FD_REQUIRE(x.rank() == 3 && x.dim(1) % 2 == 0 && x.dim(2) % 2 == 0,
          "downsample_nearest: expected [c,2h,2w], got " + x.shape().to_string());
  const std::size_t c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
  DenseArray y(Shape{c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        y[(ch * h + i) * w + j] = x[(ch * 2 * h + 2 * i) * 2 * w + 2 * j];
  return y;
}

DenseArray concat_rows(const DenseArray& a, const DenseArray& b) {
  FD_REQUIRE(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
          pair_msg("concat_rows", a.shape(), b.shape()));
  std::vector<float> data(a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return DenseArray(Shape{a.dim(0) + b.dim(0), a.dim(1)}, std::move(data));
}

DenseArray concat_channels(const DenseArray& a, const DenseArray& b) {
  FD_REQUIRE(a.rank() == 3 && b.rank() == 3 && a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
          pair_msg("concat_channels", a.shape(), b.shape()));
  std::vector<float> data(a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return DenseArray(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(data));
}

DenseArray add(const DenseArray& a, const DenseArray& b) {
  require_same("add", a, b);
  DenseArray y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

DenseArray axpby(float alpha, const DenseArray& a, float beta, const DenseArray& b) {
  require_same("axpby", a, b);
  DenseArray y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = alpha * a[i] + beta * b[i];
  return y;
}

DenseArray scale(const DenseArray& a, float alpha) {
  DenseArray y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = alpha * a[i];
  return y;
}

DenseArray silu(const DenseArray& x) {
  DenseArray y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / (1.0f + std::exp(-x[i]));
  return y;
}

DenseArray add_channel_bias(const DenseArray& x, const DenseArray& bias) {
  FD_REQUIRE(x.rank() >= 1 && bias.rank() == 1 && bias.dim(0) == x.dim(0),
          pair_msg("add_channel_bias", x.shape(), bias.shape()));
  DenseArray y = x;
  const std::size_t per = x.size() / x.dim(0);
  for (std::size_t c = 0; c < x.dim(0); ++c)
    for (std::size_t i = 0; i < per; ++i) y[c * per + i] += bias[c];
  return y;
}

namespace {

void normalize_span(const float* in, float* out, std::size_t n, double eps) {
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += in[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += (in[i] - mean) * (in[i] - mean);
  const double inv = 1.0 / std::sqrt(var / static_cast<double>(n) + eps);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>((in[i] - mean) * inv);
}

}  // namespace

DenseArray normalize(const DenseArray& x, double eps) {
  FD_REQUIRE(!x.empty(), "normalize: empty array " + x.shape().to_string());
  DenseArray y(x.shape());
  normalize_span(x.data(), y.data(), x.size(), eps);
  return y;
}

DenseArray normalize_rows(const DenseArray& x, double eps) {
  FD_REQUIRE(x.rank() == 2 && x.dim(1) > 0, "normalize_rows: expected [m x n], got " + x.shape().to_string());
  DenseArray y(x.shape());
  const std::size_t n = x.dim(1);
  for (std::size_t r = 0; r < x.dim(0); ++r) normalize_span(x.data() + r * n, y.data() + r * n, n, eps);
  return y;
}

// ---- reductions -------------------------------------------------------------

double l2_norm(const DenseArray& a) {
  double s = 0.0;
  for (float v : a.values()) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

double l2_distance(const DenseArray& a, const DenseArray& b) {
  require_same("l2_distance", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double relative_l2(const DenseArray& a, const DenseArray& b) {
  const double num = l2_distance(a, b);
  const double den = l2_norm(b);
  if (den == 0.0) return num == 0.0 ? 0.0 : INFINITY;
  return num / den;
}

double cosine_similarity(const DenseArray& a, const DenseArray& b) {
  FD_REQUIRE(a.size() == b.size(), pair_msg("cosine_similarity", a.shape(), b.shape()));
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
  return dot / (l2_norm(a) * l2_norm(b));
}

std::uint64_t checksum(const DenseArray& a) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (auto d : a.shape().dims())
    for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(static_cast<std::uint64_t>(d) >> (8 * i)));
  for (float v : a.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) mix(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return h;
}

std::string checksum_hex(const DenseArray& a) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::uint64_t h = checksum(a);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = kHex[h & 0xf];
  return out;
}

}  // namespace fastdenoise
