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

#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fastdenoise {

enum class OpTag { kMatmul, kConv2d, kAttentionScores, kAttentionApply, kSoftmax, kElementwise };

std::string_view to_string(OpTag tag);
/// Throws ConfigError for unknown tags.
OpTag parse_op_tag(std::string_view name);

// Convention: one multiply-accumulate counts as 2 FLOPs.
//   matmul        {m, k, n}          -> 2mkn
//   conv2d        {c_out, c_in, h, w} -> 2 * c_out * c_in * 9 * h * w (output extents)
//   attention_*   {Lq, Lk, d}         -> 2 * Lq * Lk * d
//   softmax       {Lq, Lk}            -> 5 * Lq * Lk
//   elementwise   {n}                 -> n
std::uint64_t count_flops(OpTag tag, std::initializer_list<std::uint64_t> dims);
std::uint64_t count_flops(std::string_view tag, std::initializer_list<std::uint64_t> dims);

struct FlopEvent {
  OpTag tag;
  std::string layer;
  int timestep = 0;
  std::uint64_t count = 0;
};

/// Append-only list of operator FLOP events for one computation.
///
/// Not synchronized: each forward pass owns its ledger, and ledgers are merged
/// on a single thread afterwards.
class FlopLedger {
 public:
  void record(OpTag tag, std::string_view layer, int timestep,
              std::initializer_list<std::uint64_t> dims);
  void append(const FlopLedger& other);
  /// Re-stamps every event with `timestep`.
  void set_timestep(int timestep);

  const std::vector<FlopEvent>& events() const { return events_; }
  std::uint64_t total() const;
  std::uint64_t total(OpTag tag) const;
  std::map<std::string, std::uint64_t> by_layer() const;

 private:
  std::vector<FlopEvent> events_;
};

}  // namespace fastdenoise
