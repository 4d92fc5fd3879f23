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

#include "fastdenoise/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fastdenoise/error.hpp"

namespace fastdenoise {

using nlohmann::json;

namespace {

// Reads `key` into `out` if present and removes it from the pending set.
template <typename T>
void take(const json& obj, const char* key, T& out, std::set<std::string>& pending,
          const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  pending.erase(key);
  try {
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::set<std::string> keys_of(const json& obj, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> keys;
  for (const auto& [k, v] : obj.items()) keys.insert(k);
  return keys;
}

void reject_unknown(const std::set<std::string>& pending, const std::string& where) {
  if (!pending.empty()) throw ConfigError(where + ": unknown key '" + *pending.begin() + "'");
}

json unet_json(const UNetConfig& u) {
  return {{"latent_channels", u.latent_channels},
          {"channels", u.channels},
          {"height", u.height},
          {"width", u.width},
          {"frames", u.frames},
          {"batch", u.batch},
          {"audio_tokens", u.audio_tokens},
          {"audio_dim", u.audio_dim},
          {"head_dim", u.head_dim},
          {"time_embed_dim", u.time_embed_dim},
          {"attention_layers", u.attention_layers},
          {"removal_set", u.removal_set}};
}

void unet_from(const json& j, UNetConfig& u) {
  auto pending = keys_of(j, "unet");
  take(j, "latent_channels", u.latent_channels, pending, "unet");
  take(j, "channels", u.channels, pending, "unet");
  take(j, "height", u.height, pending, "unet");
  take(j, "width", u.width, pending, "unet");
  take(j, "frames", u.frames, pending, "unet");
  take(j, "batch", u.batch, pending, "unet");
  take(j, "audio_tokens", u.audio_tokens, pending, "unet");
  take(j, "audio_dim", u.audio_dim, pending, "unet");
  take(j, "head_dim", u.head_dim, pending, "unet");
  take(j, "time_embed_dim", u.time_embed_dim, pending, "unet");
  take(j, "attention_layers", u.attention_layers, pending, "unet");
  take(j, "removal_set", u.removal_set, pending, "unet");
  reject_unknown(pending, "unet");
}

}  // namespace

void RunConfig::validate() const {
  unet.validate();
  if (schedule.T < 1) throw ConfigError("schedule.T must be >= 1");
  if (schedule.S < 1 || schedule.S > schedule.T) throw ConfigError("schedule.S must be in 1..T");
  if (schedule.N < 1) throw ConfigError("schedule.N must be >= 1");
  if (!(schedule.t_thresh_fraction >= 0.0 && schedule.t_thresh_fraction <= 1.0)) {
    throw ConfigError("schedule.t_thresh_fraction must be in [0, 1]");
  }
  if (workers < 1) throw ConfigError("strategy.workers must be >= 1");
  if (dispatch_overhead_s < 0.0) throw ConfigError("strategy.dispatch_overhead_s must be >= 0");
  if (mask.scale < 1) throw ConfigError("mask.scale must be >= 1");
  if (audio_frames < 0) throw ConfigError("audio_frames must be >= 0");
  if (concurrent_clips < 1) throw ConfigError("concurrent_clips must be >= 1");
  if (ablate_seeds.empty()) throw ConfigError("ablate.seeds must not be empty");
}

json to_json(const RunConfig& c) {
  return {{"unet", unet_json(c.unet)},
          {"weights_dir", c.weights_dir},
          {"schedule",
           {{"T", c.schedule.T},
            {"beta_start", c.schedule.beta_start},
            {"beta_end", c.schedule.beta_end},
            {"S", c.schedule.S},
            {"N", c.schedule.N},
            {"t_thresh_fraction", c.schedule.t_thresh_fraction}}},
          {"strategy",
           {{"variant", std::string(to_string(c.variant))},
            {"estimation", c.estimation},
            {"workers", c.workers},
            {"dispatch_overhead_s", c.dispatch_overhead_s}}},
          {"mask", {{"spec", c.mask.spec}, {"scale", c.mask.scale}}},
          {"seeds", {{"weights", c.seeds.weights}, {"noise", c.seeds.noise}}},
          {"audio_frames", c.audio_frames},
          {"concurrent_clips", c.concurrent_clips},
          {"output_dir", c.output_dir},
          {"ablate", {{"seeds", c.ablate_seeds}}}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  auto pending = keys_of(j, "config");
  if (j.contains("unet")) {
    pending.erase("unet");
    unet_from(j["unet"], c.unet);
  }
  take(j, "weights_dir", c.weights_dir, pending, "config");
  if (j.contains("schedule")) {
    pending.erase("schedule");
    const json& s = j["schedule"];
    auto p = keys_of(s, "schedule");
    take(s, "T", c.schedule.T, p, "schedule");
    take(s, "beta_start", c.schedule.beta_start, p, "schedule");
    take(s, "beta_end", c.schedule.beta_end, p, "schedule");
    take(s, "S", c.schedule.S, p, "schedule");
    take(s, "N", c.schedule.N, p, "schedule");
    take(s, "t_thresh_fraction", c.schedule.t_thresh_fraction, p, "schedule");
    reject_unknown(p, "schedule");
  }
  if (j.contains("strategy")) {
    pending.erase("strategy");
    const json& s = j["strategy"];
    auto p = keys_of(s, "strategy");
    std::string variant(to_string(c.variant));
    take(s, "variant", variant, p, "strategy");
    c.variant = parse_variant(variant);
    take(s, "estimation", c.estimation, p, "strategy");
    take(s, "workers", c.workers, p, "strategy");
    take(s, "dispatch_overhead_s", c.dispatch_overhead_s, p, "strategy");
    reject_unknown(p, "strategy");
  }
  if (j.contains("mask")) {
    pending.erase("mask");
    const json& m = j["mask"];
    auto p = keys_of(m, "mask");
    take(m, "spec", c.mask.spec, p, "mask");
    take(m, "scale", c.mask.scale, p, "mask");
    reject_unknown(p, "mask");
  }
  if (j.contains("seeds")) {
    pending.erase("seeds");
    const json& s = j["seeds"];
    auto p = keys_of(s, "seeds");
    take(s, "weights", c.seeds.weights, p, "seeds");
    take(s, "noise", c.seeds.noise, p, "seeds");
    reject_unknown(p, "seeds");
  }
  take(j, "audio_frames", c.audio_frames, pending, "config");
  take(j, "concurrent_clips", c.concurrent_clips, pending, "config");
  take(j, "output_dir", c.output_dir, pending, "config");
  if (j.contains("ablate")) {
    pending.erase("ablate");
    const json& a = j["ablate"];
    auto p = keys_of(a, "ablate");
    take(a, "seeds", c.ablate_seeds, p, "ablate");
    reject_unknown(p, "ablate");
  }
  reject_unknown(pending, "config");
  c.unet.weight_seed = c.seeds.weights;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
  (*node)[parts.back()] = std::move(value);
}

std::shared_ptr<const ForegroundMask> resolve_mask(const RunConfig& cfg) {
  const auto h = static_cast<std::size_t>(cfg.unet.height), w = static_cast<std::size_t>(cfg.unet.width);
  const auto scale = static_cast<std::size_t>(cfg.mask.scale);
  const std::string& spec = cfg.mask.spec;
  ForegroundMask full = spec.rfind("rect:", 0) == 0 || spec.rfind("frac:", 0) == 0
                            ? synthesize_mask(spec, h * scale, w * scale)
                            : read_mask_file(spec);
  if (full.height() % h != 0 || full.width() % w != 0) {
    throw ConfigError("mask " + std::to_string(full.height()) + "x" + std::to_string(full.width()) +
                      " is not a multiple of the latent " + std::to_string(h) + "x" + std::to_string(w));
  }
  return std::make_shared<const ForegroundMask>(downsample_mask(full, h, w));
}

Resolved resolve(const RunConfig& cfg) {
  cfg.validate();
  NoiseSchedule sched = NoiseSchedule::linear(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
  TimestepPlan plan = build_timestep_plan(sched, cfg.schedule.S, cfg.schedule.N, cfg.schedule.t_thresh_fraction);
  UNetConfig ucfg = cfg.unet;
  ucfg.weight_seed = cfg.seeds.weights;
  ModelWeights weights = cfg.weights_dir.empty() ? init_weights(ucfg) : load_weights(cfg.weights_dir);
  auto net = std::make_shared<const ToyUNet>(ucfg, std::move(weights), sched);
  return {std::move(sched), std::move(plan), std::move(net), resolve_mask(cfg)};
}

}  // namespace fastdenoise
