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

#include "fastdenoise/dfa.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fastdenoise/error.hpp"

namespace fastdenoise {
namespace {

double parse_number(std::string_view s, std::string_view spec) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("mask spec '" + std::string(spec) + "': bad number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

// Rows of frame `f` of a [frames x L x d] array as a [L x d] array.
DenseArray frame_slice(const DenseArray& a, std::size_t f) {
  const std::size_t rows = a.dim(1), d = a.dim(2);
  const auto first = a.values().begin() + static_cast<std::ptrdiff_t>(f * rows * d);
  return DenseArray(Shape{rows, d}, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(rows * d)));
}

void require_context(const DfaContext& ctx, std::size_t tokens) {
  if (!ctx.mask) throw InvariantError("dfa_attention: context has no mask");
  if (ctx.mask->token_count() != tokens) {
    throw ShapeError("dfa_attention: mask covers " + std::to_string(ctx.mask->token_count()) +
                     " tokens, features have " + std::to_string(tokens));
  }
  if (ctx.mask->background_count() > 0 && ctx.bg_cache.empty()) {
    throw InvariantError("dfa_attention: background cache missing at a non-key step");
  }
}

}  // namespace

// ---- ForegroundMask -----------------------------------------------------------

ForegroundMask::ForegroundMask(std::size_t height, std::size_t width,
                               std::vector<std::uint8_t> grid)
    : height_(height), width_(width), grid_(std::move(grid)) {
  if (grid_.size() != height_ * width_) {
    throw ShapeError("mask grid has " + std::to_string(grid_.size()) + " cells, expected " +
                     std::to_string(height_ * width_));
  }
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    grid_[i] = grid_[i] ? 1 : 0;
    (grid_[i] ? fg_index_ : bg_index_).push_back(i);
  }
}

ForegroundMask ForegroundMask::filled(std::size_t height, std::size_t width, bool foreground) {
  return ForegroundMask(height, width,
                        std::vector<std::uint8_t>(height * width, foreground ? 1 : 0));
}

ForegroundMask downsample_mask(const ForegroundMask& full, std::size_t target_h,
                               std::size_t target_w) {
  if (target_h == 0 || target_w == 0 || full.height() % target_h != 0 ||
      full.width() % target_w != 0) {
    throw ShapeError("downsample_mask: " + std::to_string(full.height()) + "x" +
                     std::to_string(full.width()) + " is not a multiple of " +
                     std::to_string(target_h) + "x" + std::to_string(target_w));
  }
  const std::size_t fy = full.height() / target_h, fx = full.width() / target_w;
  std::vector<std::uint8_t> grid(target_h * target_w, 0);
  for (std::size_t y = 0; y < full.height(); ++y)
    for (std::size_t x = 0; x < full.width(); ++x)
      if (full.is_foreground(y * full.width() + x)) grid[(y / fy) * target_w + x / fx] = 1;
  return ForegroundMask(target_h, target_w, std::move(grid));
}

ForegroundMask synthesize_mask(std::string_view spec, std::size_t height, std::size_t width) {
  if (spec.starts_with("rect:")) {
    const auto parts = split(spec.substr(5), ',');
    if (parts.size() != 4) throw ConfigError("mask spec '" + std::string(spec) + "': need x0,y0,x1,y1");
    const auto clampi = [](double v, std::size_t hi) {
      return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(hi)));
    };
    const auto x0 = clampi(parse_number(parts[0], spec), width);
    const auto y0 = clampi(parse_number(parts[1], spec), height);
    const auto x1 = clampi(parse_number(parts[2], spec), width);
    const auto y1 = clampi(parse_number(parts[3], spec), height);
    std::vector<std::uint8_t> grid(height * width, 0);
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) grid[y * width + x] = 1;
    return ForegroundMask(height, width, std::move(grid));
  }
  if (spec.starts_with("frac:")) {
    const double frac = parse_number(spec.substr(5), spec);
    if (!(frac >= 0.0 && frac <= 1.0)) {
      throw ConfigError("mask spec '" + std::string(spec) + "': fraction must lie in [0, 1]");
    }
    const std::size_t n = height * width;
    const auto keep = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
    std::vector<double> radius(n);
    const double cy = height / 2.0, cx = width / 2.0;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = (y + 0.5 - cy) / cy, dx = (x + 0.5 - cx) / cx;
        radius[y * width + x] = dy * dy + dx * dx;
      }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return radius[a] < radius[b]; });
    std::vector<std::uint8_t> grid(n, 0);
    for (std::size_t i = 0; i < keep; ++i) grid[order[i]] = 1;
    return ForegroundMask(height, width, std::move(grid));
  }
  throw ConfigError("mask spec '" + std::string(spec) + "': expected rect:... or frac:...");
}

std::string format_mask(const ForegroundMask& mask) {
  std::string out = "mask: " + std::to_string(mask.height()) + " " + std::to_string(mask.width()) + "\n";
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x)
      out += mask.is_foreground(y * mask.width() + x) ? '1' : '0';
    out += '\n';
  }
  return out;
}

ForegroundMask parse_mask(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string tag;
  std::size_t h = 0, w = 0;
  if (!(is >> tag >> h >> w) || tag != "mask:" || h == 0 || w == 0) {
    throw ConfigError("mask file: expected header 'mask: H W'");
  }
  std::vector<std::uint8_t> grid;
  grid.reserve(h * w);
  std::string line;
  std::getline(is, line);
  for (std::size_t y = 0; y < h; ++y) {
    if (!std::getline(is, line)) throw ConfigError("mask file: missing row " + std::to_string(y));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() != w) {
      throw ConfigError("mask file: row " + std::to_string(y) + " has " +
                        std::to_string(line.size()) + " cells, expected " + std::to_string(w));
    }
    for (char c : line) {
      if (c != '0' && c != '1') throw ConfigError("mask file: cells must be 0 or 1");
      grid.push_back(c == '1');
    }
  }
  return ForegroundMask(h, w, std::move(grid));
}

void write_mask_file(const std::filesystem::path& path, const ForegroundMask& mask) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  os << format_mask(mask);
}

ForegroundMask read_mask_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("mask file not found: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_mask(ss.str());
}

// ---- gather / scatter -------------------------------------------------------------

DenseArray select_tokens(const DenseArray& x, std::span<const std::size_t> idx) {
  if (x.rank() != 2) throw ShapeError("select_tokens: expected [L x d], got " + x.shape().to_string());
  const std::size_t rows = x.dim(0), d = x.dim(1);
  DenseArray out(Shape{idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ShapeError("select_tokens: index " + std::to_string(idx[i]) + " out of range for " +
                       std::to_string(rows) + " tokens");
    }
    if (i && idx[i] <= idx[i - 1]) throw ShapeError("select_tokens: indices must be strictly ascending");
    std::copy_n(x.data() + idx[i] * d, d, out.data() + i * d);
  }
  return out;
}

DenseArray merge(const DenseArray& foreground, const DenseArray& background,
                 const ForegroundMask& mask) {
  const std::size_t lf = mask.foreground_count(), lb = mask.background_count();
  const bool fg_ok = foreground.rank() == 2 && foreground.dim(0) == lf;
  const bool bg_ok = lb == 0 ? (background.empty() || (background.rank() == 2 && background.dim(0) == 0))
                             : (background.rank() == 2 && background.dim(0) == lb);
  if (!fg_ok || !bg_ok) {
    throw ShapeError("merge: got " + foreground.shape().to_string() + " + " +
                     background.shape().to_string() + " for L_f=" + std::to_string(lf) +
                     ", L_b=" + std::to_string(lb));
  }
  const std::size_t d = lf ? foreground.dim(1) : background.dim(1);
  if (lf && lb && background.dim(1) != d) {
    throw ShapeError("merge: width mismatch " + foreground.shape().to_string() + " vs " +
                     background.shape().to_string());
  }
  DenseArray out(Shape{mask.token_count(), d});
  for (std::size_t i = 0; i < lf; ++i)
    std::copy_n(foreground.data() + i * d, d, out.data() + mask.fg_index()[i] * d);
  for (std::size_t i = 0; i < lb; ++i)
    std::copy_n(background.data() + i * d, d, out.data() + mask.bg_index()[i] * d);
  return out;
}

DenseArray gather_background(const DenseArray& full_output, const ForegroundMask& mask) {
  if (full_output.rank() == 2) return select_tokens(full_output, mask.bg_index());
  if (full_output.rank() != 3) {
    throw ShapeError("gather_background: expected rank 2 or 3, got " + full_output.shape().to_string());
  }
  const std::size_t frames = full_output.dim(0), d = full_output.dim(2);
  const std::size_t lb = mask.background_count();
  DenseArray out(Shape{frames, lb, d});
  for (std::size_t f = 0; f < frames; ++f) {
    const auto bg = select_tokens(frame_slice(full_output, f), mask.bg_index());
    std::copy(bg.values().begin(), bg.values().end(), out.data() + f * lb * d);
  }
  return out;
}

// ---- attention ---------------------------------------------------------------------

std::string_view to_string(AttentionSite site) {
  switch (site) {
    case AttentionSite::kReference: return "reference";
    case AttentionSite::kAudio: return "audio";
    case AttentionSite::kTemporal: return "temporal";
  }
  return "unknown";
}

void record_attention_flops(FlopLedger* ledger, std::string_view layer, std::size_t lq,
                            std::size_t lk, std::size_t d) {
  if (!ledger || lq == 0) return;
  ledger->record(OpTag::kAttentionScores, layer, 0, {lq, lk, d});
  ledger->record(OpTag::kSoftmax, layer, 0, {lq, lk});
  ledger->record(OpTag::kAttentionApply, layer, 0, {lq, lk, d});
}

DenseArray frame_attention(const DenseArray& q, const DenseArray& k, const DenseArray& v,
                           std::span<const std::size_t> locations, FlopLedger* ledger,
                           std::string_view layer) {
  if (q.rank() != 3 || !(q.shape() == k.shape()) || v.rank() != 3 || v.dim(0) != q.dim(0) ||
      v.dim(1) != q.dim(1)) {
    throw ShapeError("frame_attention: q/k/v shapes " + q.shape().to_string() + ", " +
                     k.shape().to_string() + ", " + v.shape().to_string());
  }
  const std::size_t frames = q.dim(0), tokens = q.dim(1), d = q.dim(2), dv = v.dim(2);
  DenseArray out(Shape{frames, locations.size(), dv});
  DenseArray qp(Shape{frames, d}), kp(Shape{frames, d}), vp(Shape{frames, dv});
  for (std::size_t li = 0; li < locations.size(); ++li) {
    const std::size_t p = locations[li];
    if (p >= tokens) throw ShapeError("frame_attention: location out of range");
    for (std::size_t f = 0; f < frames; ++f) {
      std::copy_n(q.data() + (f * tokens + p) * d, d, qp.data() + f * d);
      std::copy_n(k.data() + (f * tokens + p) * d, d, kp.data() + f * d);
      std::copy_n(v.data() + (f * tokens + p) * dv, dv, vp.data() + f * dv);
    }
    const DenseArray a = scaled_dot_attention(qp, kp, vp);
    for (std::size_t f = 0; f < frames; ++f)
      std::copy_n(a.data() + f * dv, dv, out.data() + (f * locations.size() + li) * dv);
  }
  if (ledger && !locations.empty()) {
    // Accounted as one batched evaluation: |locations| independent f x f problems.
    ledger->record(OpTag::kAttentionScores, layer, 0, {locations.size() * frames, frames, d});
    ledger->record(OpTag::kSoftmax, layer, 0, {locations.size() * frames, frames});
    ledger->record(OpTag::kAttentionApply, layer, 0, {locations.size() * frames, frames, dv});
  }
  return out;
}

DenseArray dfa_attention(const DenseArray& q, const DenseArray& k, const DenseArray& v,
                         const DfaContext& ctx, AttentionSite site, const DenseArray* ref_k,
                         const DenseArray* ref_v, FlopLedger* ledger, std::string_view layer) {
  switch (site) {
    case AttentionSite::kReference: {
      require_context(ctx, q.dim(0));
      if ((ref_k == nullptr) != (ref_v == nullptr)) {
        throw ShapeError("dfa_attention: reference keys and values must both be present");
      }
      const auto& fg = ctx.mask->fg_index();
      const DenseArray qf = select_tokens(q, fg);
      DenseArray kf = select_tokens(k, fg);
      DenseArray vf = select_tokens(v, fg);
      if (ref_k) {
        if (ref_k->dim(0) != q.dim(0)) {
          throw ShapeError("dfa_attention: reference length " + ref_k->shape().to_string() +
                           " vs tokens " + q.shape().to_string());
        }
        kf = concat_rows(kf, select_tokens(*ref_k, fg));
        vf = concat_rows(vf, select_tokens(*ref_v, fg));
      }
      if (fg.empty()) return merge(DenseArray(Shape{0, v.dim(1)}), ctx.bg_cache, *ctx.mask);
      record_attention_flops(ledger, layer, qf.dim(0), kf.dim(0), qf.dim(1));
      return merge(scaled_dot_attention(qf, kf, vf), ctx.bg_cache, *ctx.mask);
    }
    case AttentionSite::kAudio: {
      require_context(ctx, q.dim(0));
      const auto& fg = ctx.mask->fg_index();
      if (fg.empty()) return merge(DenseArray(Shape{0, v.dim(1)}), ctx.bg_cache, *ctx.mask);
      const DenseArray qf = select_tokens(q, fg);
      record_attention_flops(ledger, layer, qf.dim(0), k.dim(0), qf.dim(1));
      return merge(scaled_dot_attention(qf, k, v), ctx.bg_cache, *ctx.mask);
    }
    case AttentionSite::kTemporal: {
      if (q.rank() != 3) throw ShapeError("dfa_attention(temporal): expected [f x L x d]");
      require_context(ctx, q.dim(1));
      const std::size_t frames = q.dim(0), lf = ctx.mask->foreground_count();
      const std::size_t lb = ctx.mask->background_count(), dv = v.dim(2);
      if (lb && !(ctx.bg_cache.rank() == 3 && ctx.bg_cache.dim(0) == frames &&
                  ctx.bg_cache.dim(1) == lb && ctx.bg_cache.dim(2) == dv)) {
        throw ShapeError("dfa_attention(temporal): cache " + ctx.bg_cache.shape().to_string() +
                         " does not match " + std::to_string(frames) + " frames x L_b=" +
                         std::to_string(lb));
      }
      const DenseArray af = frame_attention(q, k, v, ctx.mask->fg_index(), ledger, layer);
      DenseArray out(Shape{frames, q.dim(1), dv});
      for (std::size_t f = 0; f < frames; ++f) {
        const DenseArray fg_rows = lf ? frame_slice(af, f) : DenseArray(Shape{0, dv});
        const DenseArray bg_rows = lb ? frame_slice(ctx.bg_cache, f) : DenseArray(Shape{0, dv});
        const DenseArray merged = merge(fg_rows, bg_rows, *ctx.mask);
        std::copy(merged.values().begin(), merged.values().end(),
                  out.data() + f * q.dim(1) * dv);
      }
      return out;
    }
  }
  throw ConfigError("dfa_attention: unknown site");
}

}  // namespace fastdenoise
