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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fastdenoise/rng.hpp"
#include "fastdenoise/tensor.hpp"

namespace fastdenoise::testing {

inline DenseArray random_array(const Shape& shape, std::uint64_t seed, float stddev = 1.0f) {
  Rng rng(seed);
  return rng.normal_array(shape, stddev);
}

inline double max_abs_diff(const DenseArray& a, const DenseArray& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - double(b[i])));
  return m;
}

// Loop-order-faithful float matmul: c[i,j] accumulated over ascending p.
inline DenseArray naive_matmul(const DenseArray& a, const DenseArray& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  DenseArray c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

// softmax(q k^T / sqrt(d)) v evaluated in double.
inline std::vector<std::vector<double>> attention_oracle(const DenseArray& q, const DenseArray& k,
                                                         const DenseArray& v) {
  const std::size_t lq = q.dim(0), lk = k.dim(0), d = q.dim(1), dv = v.dim(1);
  std::vector<std::vector<double>> out(lq, std::vector<double>(dv, 0.0));
  for (std::size_t i = 0; i < lq; ++i) {
    std::vector<double> s(lk);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < lk; ++j) {
      double dot = 0;
      for (std::size_t p = 0; p < d; ++p) dot += double(q[i * d + p]) * k[j * d + p];
      s[j] = dot / std::sqrt(double(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (auto& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < lk; ++j)
      for (std::size_t c = 0; c < dv; ++c) out[i][c] += s[j] / z * v[j * dv + c];
  }
  return out;
}

inline double max_diff(const DenseArray& a, const std::vector<std::vector<double>>& ref) {
  double m = 0;
  const std::size_t cols = ref.empty() ? 0 : ref[0].size();
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t c = 0; c < cols; ++c) m = std::max(m, std::fabs(a[i * cols + c] - ref[i][c]));
  return m;
}

// Rows of a CSV file, skipping '#' comment lines.
inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fastdenoise_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fastdenoise::testing
