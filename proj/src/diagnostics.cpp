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

#include "fastdenoise/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "fastdenoise/error.hpp"

namespace fastdenoise {

double speedup(double base_latency_s, double accel_latency_s) {
  if (!(base_latency_s > 0.0) || !(accel_latency_s > 0.0)) {
    throw ConfigError("speedup: latencies must be positive");
  }
  return std::round(base_latency_s / accel_latency_s * 100.0) / 100.0;
}

std::vector<double> l2_series(std::span<const DenseArray> snapshots) {
  if (snapshots.size() < 2) throw ConfigError("l2_series: need at least 2 snapshots");
  std::vector<double> out;
  out.reserve(snapshots.size() - 1);
  for (std::size_t i = 1; i < snapshots.size(); ++i) {
    if (!(snapshots[i].shape() == snapshots[0].shape())) {
      throw ShapeError("l2_series: snapshot " + std::to_string(i) + " has shape " +
                       snapshots[i].shape().to_string() + ", expected " +
                       snapshots[0].shape().to_string());
    }
    out.push_back(l2_distance(snapshots[i], snapshots[i - 1]));
  }
  return out;
}

std::vector<std::vector<double>> cosine_matrix(std::span<const DenseArray> snapshots) {
  if (snapshots.empty()) throw ConfigError("cosine_matrix: need at least 1 snapshot");
  const std::size_t n = snapshots.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = l2_norm(snapshots[i]);
    if (norms[i] == 0.0) {
      throw ConfigError("cosine_matrix: snapshot " + std::to_string(i) + " has zero norm");
    }
  }
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    m[i][i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (snapshots[i].size() != snapshots[j].size()) {
        throw ShapeError("cosine_matrix: snapshot sizes differ");
      }
      double dot = 0.0;
      for (std::size_t k = 0; k < snapshots[i].size(); ++k)
        dot += static_cast<double>(snapshots[i][k]) * snapshots[j][k];
      const double c = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      m[i][j] = m[j][i] = c;
    }
  }
  return m;
}

std::array<double, 4> fg_attention_mass(const DenseArray& weights,
                                        std::span<const KeyGroup> groups) {
  if (weights.rank() != 2) throw ShapeError("fg_attention_mass: weights must be 2-D");
  const std::size_t rows = weights.dim(0), keys = weights.dim(1);
  if (groups.size() != keys) {
    throw ConfigError("fg_attention_mass: " + std::to_string(groups.size()) +
                      " group labels for " + std::to_string(keys) + " keys");
  }
  for (auto g : groups) {
    if (static_cast<int>(g) < 0 || static_cast<int>(g) > 3) {
      throw ConfigError("fg_attention_mass: key group label out of range");
    }
  }
  std::array<double, 4> mass{};
  if (rows == 0) return mass;
  for (std::size_t i = 0; i < rows; ++i) {
    std::array<double, 4> row{};
    double total = 0.0;
    for (std::size_t j = 0; j < keys; ++j) {
      row[static_cast<int>(groups[j])] += weights[i * keys + j];
      total += weights[i * keys + j];
    }
    if (std::abs(total - 1.0) > 1e-5) {
      throw ConfigError("fg_attention_mass: row " + std::to_string(i) + " sums to " +
                        std::to_string(total));
    }
    // Renormalize so float rounding in the softmax does not leak into the
    // group partition.
    for (int g = 0; g < 4; ++g) mass[g] += row[g] / total;
  }
  for (auto& m : mass) m /= static_cast<double>(rows);
  return mass;
}

}  // namespace fastdenoise
