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

#include "fastdenoise/flops.hpp"

#include <array>

#include "fastdenoise/error.hpp"

namespace fastdenoise {
namespace {

constexpr std::array<std::pair<OpTag, std::string_view>, 6> kTags{{
    {OpTag::kMatmul, "matmul"},
    {OpTag::kConv2d, "conv2d"},
    {OpTag::kAttentionScores, "attention_scores"},
    {OpTag::kAttentionApply, "attention_apply"},
    {OpTag::kSoftmax, "softmax"},
    {OpTag::kElementwise, "elementwise"},
}};

std::size_t arity(OpTag tag) {
  switch (tag) {
    case OpTag::kMatmul:
    case OpTag::kAttentionScores:
    case OpTag::kAttentionApply:
      return 3;
    case OpTag::kConv2d:
      return 4;
    case OpTag::kSoftmax:
      return 2;
    case OpTag::kElementwise:
      return 1;
  }
  return 0;
}

}  // namespace

std::string_view to_string(OpTag tag) {
  for (const auto& [t, name] : kTags)
    if (t == tag) return name;
  return "unknown";
}

OpTag parse_op_tag(std::string_view name) {
  for (const auto& [t, n] : kTags)
    if (n == name) return t;
  throw ConfigError("unknown operator tag '" + std::string(name) + "'");
}

std::uint64_t count_flops(OpTag tag, std::initializer_list<std::uint64_t> dims) {
  if (dims.size() != arity(tag)) {
    throw ConfigError("count_flops(" + std::string(to_string(tag)) + "): expected " +
                      std::to_string(arity(tag)) + " dims, got " + std::to_string(dims.size()));
  }
  const auto* d = dims.begin();
  switch (tag) {
    case OpTag::kMatmul:
    case OpTag::kAttentionScores:
    case OpTag::kAttentionApply:
      return 2 * d[0] * d[1] * d[2];
    case OpTag::kConv2d:
      return 2 * d[0] * d[1] * 9 * d[2] * d[3];
    case OpTag::kSoftmax:
      return 5 * d[0] * d[1];
    case OpTag::kElementwise:
      return d[0];
  }
  return 0;
}

std::uint64_t count_flops(std::string_view tag, std::initializer_list<std::uint64_t> dims) {
  return count_flops(parse_op_tag(tag), dims);
}

void FlopLedger::record(OpTag tag, std::string_view layer, int timestep,
                        std::initializer_list<std::uint64_t> dims) {
  events_.push_back({tag, std::string(layer), timestep, count_flops(tag, dims)});
}

void FlopLedger::append(const FlopLedger& other) {
  events_.insert(events_.end(), other.events_.begin(), other.events_.end());
}

void FlopLedger::set_timestep(int timestep) {
  for (auto& e : events_) e.timestep = timestep;
}

std::uint64_t FlopLedger::total() const {
  std::uint64_t n = 0;
  for (const auto& e : events_) n += e.count;
  return n;
}

std::uint64_t FlopLedger::total(OpTag tag) const {
  std::uint64_t n = 0;
  for (const auto& e : events_)
    if (e.tag == tag) n += e.count;
  return n;
}

std::map<std::string, std::uint64_t> FlopLedger::by_layer() const {
  std::map<std::string, std::uint64_t> m;
  for (const auto& e : events_) m[e.layer] += e.count;
  return m;
}

}  // namespace fastdenoise
