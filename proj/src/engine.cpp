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

#include "fastdenoise/engine.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <exception>
#include <thread>

#include "fastdenoise/error.hpp"

namespace fastdenoise {
namespace {

std::int64_t thread_cpu_ns() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<std::int64_t>(ts.tv_sec) * 1'000'000'000 + ts.tv_nsec;
}

// Runs `fn` and fills the record's timing fields.
template <typename Fn>
auto timed(StepRecord& rec, Fn&& fn) {
  const auto wall0 = std::chrono::steady_clock::now();
  const auto cpu0 = thread_cpu_ns();
  auto result = fn();
  rec.compute_ns = thread_cpu_ns() - cpu0;
  rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                    std::chrono::steady_clock::now() - wall0)
                    .count();
  return result;
}

std::shared_ptr<const ForegroundMask> latent_mask(const DenoiseSetup& s) {
  const auto& cfg = s.net.config();
  const auto h = static_cast<std::size_t>(cfg.height), w = static_cast<std::size_t>(cfg.width);
  if (!s.cond.mask) return std::make_shared<const ForegroundMask>(ForegroundMask::filled(h, w, true));
  if (s.cond.mask->height() != h || s.cond.mask->width() != w) {
    throw ShapeError("mask is " + std::to_string(s.cond.mask->height()) + "x" +
                     std::to_string(s.cond.mask->width()) + ", latent is " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  return s.cond.mask;
}

struct FullStep {
  ForwardTrace trace;
  DenseArray z_next;
};

FullStep full_step(const DenoiseSetup& s, const DenseArray& z_t, int t, int next,
                   const DenoiseOptions& options, StepRecord& rec) {
  ForwardOptions fo;
  fo.capture_sites = options.capture_sites;
  fo.capture_reference_weights = options.capture_reference_weights;
  if (s.strategy.dfa()) fo.capture_sites.emplace_back("U32");
  rec.t = t;
  rec.kind = StepKind::kKey;
  ForwardTrace trace = timed(rec, [&] { return s.net.forward(z_t, t, s.cond, fo); });
  rec.flops = trace.flops.total();
  DenseArray z_next = ddim_step_skipping(z_t, trace.eps_pred, t, next, s.sched);
  if (options.observer) options.observer(rec, z_t, trace);
  return {std::move(trace), std::move(z_next)};
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kLcp: return "lcp";
    case Variant::kLcpDfa: return "lcp_dfa";
    case Variant::kLcpDfaRm: return "lcp_dfa_rm";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::kBaseline, Variant::kLcp, Variant::kLcpDfa, Variant::kLcpDfaRm})
    if (to_string(v) == name) return v;
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected baseline, lcp, lcp_dfa or lcp_dfa_rm)");
}

std::string_view to_string(StepKind k) { return k == StepKind::kKey ? "key" : "nonkey"; }

void CacheStore::put(int clip, int key, CacheEntry entry) {
  if (!entries_.emplace(std::make_pair(clip, key), std::move(entry)).second) {
    throw InvariantError("cache for clip " + std::to_string(clip) + " key " + std::to_string(key) +
                         " written twice");
  }
}

const CacheEntry& CacheStore::get(int clip, int key) const {
  const auto it = entries_.find({clip, key});
  if (it == entries_.end()) {
    throw InvariantError("missing cache for clip " + std::to_string(clip) + " key " + std::to_string(key));
  }
  return it->second;
}

std::uint64_t DenoiseReport::total_flops() const {
  std::uint64_t sum = 0;
  for (const auto& s : steps) sum += s.flops;
  return sum;
}

DenseArray run_key_step(const DenoiseSetup& setup, CacheStore& cache, const DenseArray& z_t, int t,
                        StepRecord* record, FlopLedger* ledger, const DenoiseOptions& options) {
  if (!setup.plan.is_key(t)) throw InvariantError("timestep " + std::to_string(t) + " is not a key step");
  const PlanBlock& block = setup.plan.block_for_key(t);
  StepRecord rec;
  FullStep step = full_step(setup, z_t, t, block.successor(t), options, rec);
  if (setup.strategy.caches()) {
    CacheEntry entry;
    entry.f_u31 = step.trace.captured.at("f_U31");
    entry.eps_key = step.trace.eps_pred;
    entry.z_after_key = step.z_next;
    if (setup.strategy.dfa()) {
      const auto mask = latent_mask(setup);
      for (auto site : {AttentionSite::kReference, AttentionSite::kAudio, AttentionSite::kTemporal}) {
        const std::string module = module_name("U32", site);
        entry.background[module] =
            DfaContext{mask, gather_background(step.trace.captured.at(module), *mask)};
      }
    }
    cache.put(setup.clip, t, std::move(entry));
  }
  if (record) *record = rec;
  if (ledger) ledger->append(step.trace.flops);
  return std::move(step.z_next);
}

std::vector<DenseArray> estimate_input_latents(const DenseArray& z_after_key, const DenseArray& eps_key,
                                               const PlanBlock& block, const NoiseSchedule& sched) {
  std::vector<DenseArray> out;
  const auto& nk = block.nonkeys;
  for (std::size_t i = 1; i < nk.size(); ++i) {
    const DenseArray& anchor = i == 1 ? z_after_key : out.back();
    out.push_back(ddim_step_skipping(anchor, eps_key, nk[i - 1], nk[i], sched));
  }
  return out;
}

BlockResult run_nonkey_block(const DenoiseSetup& setup, const CacheStore& cache, const PlanBlock& block,
                             bool estimate, const DenoiseOptions& options) {
  const CacheEntry& entry = cache.get(setup.clip, block.key);
  BlockResult result;
  const std::size_t n = block.nonkeys.size();
  if (n == 0) {
    result.z_out = entry.z_after_key;
    return result;
  }

  const std::vector<DenseArray> estimates =
      estimate ? estimate_input_latents(entry.z_after_key, entry.eps_key, block, setup.sched)
               : std::vector<DenseArray>{};
  std::vector<const DenseArray*> inputs(n, &entry.z_after_key);
  for (std::size_t i = 1; i < n && estimate; ++i) inputs[i] = &estimates[i - 1];

  ForwardOptions fo;
  fo.reference_removal = setup.strategy.removal();
  fo.dfa = setup.strategy.dfa() ? &entry.background : nullptr;
  fo.capture_sites = options.capture_sites;
  fo.capture_reference_weights = options.capture_reference_weights;

  // Phase 1: independent predictions, one result slot per step.
  std::vector<ForwardTrace> traces(n);
  result.steps.resize(n);
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, setup.strategy.workers)), 1, n);
  std::vector<std::exception_ptr> errors(workers);
  const auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < n; i += workers) {
        StepRecord& rec = result.steps[i];
        rec.t = block.nonkeys[i];
        rec.kind = StepKind::kNonKey;
        traces[i] = timed(rec, [&] {
          return setup.net.subnet_forward(entry.f_u31, *inputs[i], rec.t, setup.cond, fo);
        });
        rec.flops = traces[i].flops.total();
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Phase 2: sequential update on the true latents.
  DenseArray z = entry.z_after_key;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = block.nonkeys[i];
    if (options.observer) options.observer(result.steps[i], *inputs[i], traces[i]);
    z = ddim_step_skipping(z, traces[i].eps_pred, t, block.successor(t), setup.sched);
    if (options.keep_latents) result.latents.push_back(z);
    result.flops.append(traces[i].flops);
  }
  result.z_out = std::move(z);
  return result;
}

DenoiseReport denoise_clip(const DenoiseSetup& setup, const DenseArray& z_T, const DenoiseOptions& options) {
  const auto& plan = setup.plan;
  if (plan.T != setup.sched.T()) {
    throw ConfigError("plan built for T=" + std::to_string(plan.T) + " but schedule has T=" +
                      std::to_string(setup.sched.T()));
  }
  if (plan.sampled.empty()) throw ConfigError("plan has no sampled timesteps");
  const Shape latent = setup.net.config().latent_shape();
  if (!(z_T.shape() == latent)) {
    throw ShapeError("initial latent " + z_T.shape().to_string() + ", expected " + latent.to_string());
  }

  DenoiseReport report;
  report.strategy = setup.strategy;
  report.plan = plan;
  DenseArray z = z_T;
  std::int64_t model_ns = 0;
  const auto wall0 = std::chrono::steady_clock::now();

  if (!setup.strategy.caches()) {
    for (std::size_t k = 0; k < plan.sampled.size(); ++k) {
      const int t = plan.sampled[k];
      const int next = k + 1 < plan.sampled.size() ? plan.sampled[k + 1] : 0;
      StepRecord rec;
      FullStep step = full_step(setup, z, t, next, options, rec);
      z = std::move(step.z_next);
      report.flops.append(step.trace.flops);
      report.steps.push_back(rec);
      model_ns += rec.compute_ns;
      if (options.keep_latents) report.latents.push_back(z);
    }
  } else {
    CacheStore cache;
    const auto workers = static_cast<std::size_t>(std::max(1, setup.strategy.workers));
    const auto overhead_ns = static_cast<std::int64_t>(setup.strategy.dispatch_overhead_s * 1e9);
    for (const auto& block : plan.blocks) {
      StepRecord key_rec;
      z = run_key_step(setup, cache, z, block.key, &key_rec, &report.flops, options);
      report.steps.push_back(key_rec);
      model_ns += key_rec.compute_ns;
      if (options.keep_latents) report.latents.push_back(z);

      BlockResult res = run_nonkey_block(setup, cache, block, block.estimate && setup.strategy.estimation, options);
      std::vector<std::int64_t> lanes(std::min(workers, std::max<std::size_t>(1, res.steps.size())), 0);
      for (std::size_t i = 0; i < res.steps.size(); ++i) {
        lanes[i % lanes.size()] += res.steps[i].compute_ns + overhead_ns;
        report.steps.push_back(res.steps[i]);
      }
      model_ns += *std::max_element(lanes.begin(), lanes.end());
      report.flops.append(res.flops);
      for (auto& l : res.latents) report.latents.push_back(std::move(l));
      z = std::move(res.z_out);
    }
  }

  report.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                       std::chrono::steady_clock::now() - wall0)
                       .count();
  report.latency_s = static_cast<double>(model_ns) * 1e-9;
  report.final_latent = std::move(z);
  return report;
}

std::vector<std::pair<DenseArray, int>> segment_audio(const DenseArray& audio, int f) {
  if (f <= 0) throw ConfigError("clip length must be >= 1, got " + std::to_string(f));
  if (audio.rank() < 1 || audio.dim(0) == 0) throw ConfigError("audio has no frames");
  const std::size_t total = audio.dim(0);
  const std::size_t per = audio.size() / total;
  const auto len = static_cast<std::size_t>(f);
  std::vector<std::size_t> dims = audio.shape().dims();
  dims[0] = len;
  std::vector<std::pair<DenseArray, int>> clips;
  for (std::size_t first = 0; first < total; first += len) {
    const std::size_t valid = std::min(len, total - first);
    DenseArray clip{Shape(dims)};
    std::copy_n(audio.data() + first * per, valid * per, clip.data());
    clips.emplace_back(std::move(clip), static_cast<int>(valid));
  }
  return clips;
}

std::vector<Conditioning> segment_condition(const DenseArray& audio, int f,
                                            const std::vector<DenseArray>& reference,
                                            std::shared_ptr<const ForegroundMask> mask) {
  std::vector<Conditioning> out;
  for (auto& [clip, valid] : segment_audio(audio, f)) {
    Conditioning c;
    c.reference = reference;
    c.audio = std::move(clip);
    c.mask = mask;
    c.valid_frames = valid;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace fastdenoise
