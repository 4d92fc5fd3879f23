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

#include <array>
#include <span>
#include <vector>

#include "fastdenoise/tensor.hpp"

namespace fastdenoise {

/// Base latency over accelerated latency, rounded to two decimals.
double speedup(double base_latency_s, double accel_latency_s);

/// Euclidean distance between each consecutive pair of snapshots.
std::vector<double> l2_series(std::span<const DenseArray> snapshots);

/// Pairwise cosine similarity of flattened snapshots; row-major [n x n].
std::vector<std::vector<double>> cosine_matrix(std::span<const DenseArray> snapshots);

/// Key groups of a reference-attention row: noisy-latent tokens followed by
/// reference tokens, each split by the foreground mask.
enum class KeyGroup : int { kForegroundNoisy = 0, kBackgroundNoisy, kForegroundReference,
                            kBackgroundReference };
constexpr std::array<const char*, 4> kKeyGroupNames{"fg_noisy", "bg_noisy", "fg_reference",
                                                    "bg_reference"};

/// Mean (over query rows) of each row's probability mass per key group.
/// `weights` is [rows x keys] post-softmax; `groups[j]` labels key j.
std::array<double, 4> fg_attention_mass(const DenseArray& weights,
                                        std::span<const KeyGroup> groups);

}  // namespace fastdenoise
