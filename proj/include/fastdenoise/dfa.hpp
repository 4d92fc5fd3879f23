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
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastdenoise/flops.hpp"
#include "fastdenoise/tensor.hpp"

namespace fastdenoise {

/// Binary H x W foreground grid with canonical (ascending) index lists.
class ForegroundMask {
 public:
  ForegroundMask() = default;
  ForegroundMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> grid);

  static ForegroundMask filled(std::size_t height, std::size_t width, bool foreground);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t token_count() const { return height_ * width_; }
  std::size_t foreground_count() const { return fg_index_.size(); }
  std::size_t background_count() const { return bg_index_.size(); }
  const std::vector<std::uint8_t>& grid() const { return grid_; }
  const std::vector<std::size_t>& fg_index() const { return fg_index_; }
  const std::vector<std::size_t>& bg_index() const { return bg_index_; }
  bool is_foreground(std::size_t flat) const { return grid_.at(flat) != 0; }

  friend bool operator==(const ForegroundMask& a, const ForegroundMask& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.grid_ == b.grid_;
  }

 private:
  std::size_t height_ = 0, width_ = 0;
  std::vector<std::uint8_t> grid_;
  std::vector<std::size_t> fg_index_, bg_index_;
};

/// A target cell is foreground iff any source cell it covers is foreground.
ForegroundMask downsample_mask(const ForegroundMask& full, std::size_t target_h,
                               std::size_t target_w);

/// Synthesizes a mask from `rect:x0,y0,x1,y1` (half-open, grid units) or
/// `frac:F` (centered ellipse holding round(F*H*W) cells).
ForegroundMask synthesize_mask(std::string_view spec, std::size_t height, std::size_t width);

/// Text format: `mask: H W` followed by H lines of W characters in {0,1}.
std::string format_mask(const ForegroundMask& mask);
ForegroundMask parse_mask(std::string_view text);
void write_mask_file(const std::filesystem::path& path, const ForegroundMask& mask);
ForegroundMask read_mask_file(const std::filesystem::path& path);

/// Gathers rows of a [L x d] array. Indices must be strictly ascending.
DenseArray select_tokens(const DenseArray& x, std::span<const std::size_t> idx);

/// Scatters foreground rows to fg_index and background rows to bg_index.
DenseArray merge(const DenseArray& foreground, const DenseArray& background,
                 const ForegroundMask& mask);

enum class AttentionSite { kReference, kAudio, kTemporal };
std::string_view to_string(AttentionSite site);

/// Per-module state for reduced attention at non-key steps.
///
/// bg_cache holds the background rows of the attention output from the most
/// recent key step: [L_b x d] for reference/audio, [f x L_b x d] for temporal.
struct DfaContext {
  std::shared_ptr<const ForegroundMask> mask;
  DenseArray bg_cache;
};

/// Records score, softmax and apply FLOPs of one attention evaluation.
void record_attention_flops(FlopLedger* ledger, std::string_view layer, std::size_t lq,
                            std::size_t lk, std::size_t d);

/// Self-attention along the frame axis at the given spatial locations.
/// q, k, v are [f x L x d]; the result is [f x |locations| x d].
DenseArray frame_attention(const DenseArray& q, const DenseArray& k, const DenseArray& v,
                           std::span<const std::size_t> locations,
                           FlopLedger* ledger = nullptr, std::string_view layer = {});

/// Foreground-restricted attention merged with the cached background.
///
///  reference: q, k, v, ref_k, ref_v are [L x d]; keys are the foreground
///             noisy tokens followed by the foreground reference tokens
///             (ref_k/ref_v null when the reference feature is removed).
///  audio:     q is [L x d], k/v are the per-frame audio tokens; only the
///             queries are reduced.
///  temporal:  q, k, v are [f x L x d]; frame attention runs at foreground
///             locations only.
DenseArray dfa_attention(const DenseArray& q, const DenseArray& k, const DenseArray& v,
                         const DfaContext& ctx, AttentionSite site,
                         const DenseArray* ref_k = nullptr, const DenseArray* ref_v = nullptr,
                         FlopLedger* ledger = nullptr, std::string_view layer = {});

/// Background rows of a full attention output, in the layout DfaContext expects.
DenseArray gather_background(const DenseArray& full_output, const ForegroundMask& mask);

}  // namespace fastdenoise
