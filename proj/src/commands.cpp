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

#include "fastdenoise/commands.hpp"

#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "fastdenoise/diagnostics.hpp"
#include "fastdenoise/error.hpp"
#include "fastdenoise/rng.hpp"
#include "fastdenoise/tns.hpp"

namespace fastdenoise {

using nlohmann::json;

namespace {

constexpr std::uint64_t kReferenceStream = 1;
constexpr std::uint64_t kAudioStream = 2;
constexpr std::uint64_t kLatentStream = 100;

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv(const std::filesystem::path& path, const json& config, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "# config: " << config.dump() << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

// Conditioning for every clip and each clip's initial latent, all drawn from
// the noise seed.
struct Inputs {
  std::vector<Conditioning> conds;
  std::vector<DenseArray> z_T;
};

Inputs make_inputs(const RunConfig& cfg, const Resolved& r) {
  const auto& u = cfg.unet;
  const int total = cfg.audio_frames > 0 ? cfg.audio_frames : u.frames;
  const auto reference = make_reference_features(u, derive_seed(cfg.seeds.noise, kReferenceStream));
  Rng audio_rng(derive_seed(cfg.seeds.noise, kAudioStream));
  const DenseArray audio = audio_rng.normal_array(Shape{static_cast<std::size_t>(total),
                                                        static_cast<std::size_t>(u.audio_tokens),
                                                        static_cast<std::size_t>(u.audio_dim)});
  Inputs in;
  in.conds = segment_condition(audio, u.frames, reference, r.mask);
  for (std::size_t i = 0; i < in.conds.size(); ++i) {
    Rng z_rng(derive_seed(cfg.seeds.noise, kLatentStream + i));
    in.z_T.push_back(z_rng.normal_array(u.latent_shape()));
  }
  return in;
}

std::vector<std::vector<std::string>> series_rows(const std::vector<int>& timesteps,
                                                  const std::vector<double>& values) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    rows.push_back({std::to_string(i), std::to_string(timesteps[i]), std::to_string(timesteps[i + 1]),
                    num(values[i])});
  }
  return rows;
}

const std::vector<std::string> kSeriesHeader{"step", "t_from", "t_to", "distance"};

}  // namespace

std::uint64_t RunResult::total_flops() const {
  std::uint64_t sum = 0;
  for (const auto& c : clips) sum += c.report.total_flops();
  return sum;
}

double RunResult::latency_per_clip_s() const {
  double sum = 0;
  for (const auto& c : clips) sum += c.report.latency_s;
  return clips.empty() ? 0.0 : sum / static_cast<double>(clips.size());
}

RunResult execute_run(const RunConfig& cfg) { return execute_run(cfg, resolve(cfg)); }

RunResult execute_run(const RunConfig& cfg, const Resolved& r) {
  cfg.validate();
  Inputs in = make_inputs(cfg, r);
  const std::size_t n = in.conds.size();
  RunResult result;
  result.config = cfg;
  result.plan = r.plan;
  result.clips.resize(n);

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const DenoiseSetup setup{*r.net, r.sched, r.plan, in.conds[i], cfg.strategy(), static_cast<int>(i)};
        result.clips[i] = {denoise_clip(setup, in.z_T[i]), in.conds[i].valid_frames};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto lanes = std::min<std::size_t>(static_cast<std::size_t>(cfg.concurrent_clips), n);
  if (lanes <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < lanes; ++i) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::size_t> dims{n};
  const Shape latent = cfg.unet.latent_shape();
  for (auto d : latent.dims()) dims.push_back(d);
  std::vector<float> data;
  for (const auto& c : result.clips)
    data.insert(data.end(), c.report.final_latent.values().begin(), c.report.final_latent.values().end());
  result.final_latent = DenseArray(Shape(std::move(dims)), std::move(data));
  return result;
}

json plan_json(const TimestepPlan& plan) {
  json blocks = json::array();
  for (const auto& b : plan.blocks) {
    blocks.push_back({{"key", b.key}, {"nonkeys", b.nonkeys}, {"exit", b.exit}, {"estimate", b.estimate}});
  }
  return {{"T", plan.T},
          {"S", plan.sampled.size()},
          {"N", plan.block_size},
          {"t_thresh_fraction", plan.t_thresh_fraction},
          {"t_thresh", plan.t_thresh},
          {"sampled", plan.sampled},
          {"blocks", blocks}};
}

json report_json(const RunResult& result) {
  const Strategy s = result.config.strategy();
  json clips = json::array();
  std::int64_t wall = 0;
  for (std::size_t i = 0; i < result.clips.size(); ++i) {
    const auto& rep = result.clips[i].report;
    json steps = json::array();
    int keys = 0, nonkeys = 0;
    for (const auto& st : rep.steps) {
      steps.push_back({{"t", st.t},
                       {"kind", std::string(to_string(st.kind))},
                       {"flops", st.flops},
                       {"wall_ns", st.wall_ns},
                       {"compute_ns", st.compute_ns}});
      (st.kind == StepKind::kKey ? keys : nonkeys)++;
    }
    wall += rep.wall_ns;
    clips.push_back({{"clip", i},
                     {"valid_frames", result.clips[i].valid_frames},
                     {"per_step", steps},
                     {"totals", {{"flops", rep.total_flops()}, {"key_steps", keys}, {"nonkey_steps", nonkeys}}},
                     {"latency_s", rep.latency_s},
                     {"wall_ns", rep.wall_ns},
                     {"final_latent_checksum", checksum_hex(rep.final_latent)}});
  }
  return {{"config", to_json(result.config)},
          {"seeds", {{"weights", result.config.seeds.weights}, {"noise", result.config.seeds.noise}}},
          {"strategy",
           {{"variant", std::string(to_string(s.variant))},
            {"estimation", s.estimation},
            {"workers", s.workers},
            {"dispatch_overhead_s", s.dispatch_overhead_s}}},
          {"plan", plan_json(result.plan)},
          {"latent_shape", result.final_latent.shape().dims()},
          {"clips", clips},
          {"totals",
           {{"flops", result.total_flops()},
            {"latency_s", result.latency_per_clip_s() * static_cast<double>(result.clips.size())},
            {"latency_per_clip_s", result.latency_per_clip_s()},
            {"wall_ns", wall}}},
          {"final_latent_checksum", checksum_hex(result.final_latent)},
          {"final_latent", "final.tns"}};
}

RunResult cmd_run(const RunConfig& cfg) {
  RunResult result = execute_run(cfg);
  const auto dir = prepare_dir(cfg.output_dir);
  write_json(dir / "report.json", report_json(result));
  write_tns(dir / "final.tns", result.final_latent);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < result.clips.size(); ++i) {
    for (const auto& st : result.clips[i].report.steps) {
      rows.push_back({std::to_string(i), std::to_string(st.t), std::string(to_string(st.kind)),
                      std::to_string(st.flops)});
    }
  }
  write_csv(dir / "flops.csv", to_json(cfg), {"clip", "timestep", "kind", "flops"}, rows);
  return result;
}

DiagnoseResult cmd_diagnose(const RunConfig& cfg) {
  const Resolved r = resolve(cfg);
  if (r.mask->foreground_count() == 0) throw ConfigError("diagnose: mask has no foreground tokens");
  const TimestepPlan plan = build_timestep_plan(r.sched, cfg.schedule.S, 1, cfg.schedule.t_thresh_fraction);
  const Inputs in = make_inputs(cfg, r);
  const auto& mask = *r.mask;
  const std::size_t L = mask.token_count();

  std::vector<KeyGroup> groups(2 * L);
  for (std::size_t j = 0; j < L; ++j) {
    const bool fg = mask.is_foreground(j);
    groups[j] = fg ? KeyGroup::kForegroundNoisy : KeyGroup::kBackgroundNoisy;
    groups[L + j] = fg ? KeyGroup::kForegroundReference : KeyGroup::kBackgroundReference;
  }

  DiagnoseResult out;
  std::vector<DenseArray> f_u31, inputs, eps;
  std::map<std::string, std::vector<DenseArray>> background;
  std::array<double, 4> mass_sum{};
  DenoiseOptions opts;
  opts.capture_sites = {"U32"};
  opts.capture_reference_weights = true;
  opts.observer = [&](const StepRecord& rec, const DenseArray& z_in, const ForwardTrace& trace) {
    out.timesteps.push_back(rec.t);
    f_u31.push_back(trace.captured.at("f_U31"));
    inputs.push_back(z_in);
    eps.push_back(trace.eps_pred);
    for (auto site : {AttentionSite::kReference, AttentionSite::kAudio, AttentionSite::kTemporal}) {
      background[std::string(to_string(site))].push_back(
          gather_background(trace.captured.at(module_name("U32", site)), mask));
    }
    const DenseArray rows = select_tokens(trace.captured.at("U32.reference.weights"), mask.fg_index());
    const auto m = fg_attention_mass(rows, groups);
    for (std::size_t g = 0; g < 4; ++g) mass_sum[g] += m[g];
  };
  const DenoiseSetup setup{*r.net, r.sched, plan, in.conds.front(), Strategy{Variant::kBaseline, false, 1, 0.0}, 0};
  const DenoiseReport rep = denoise_clip(setup, in.z_T.front(), opts);

  out.flops = rep.flops;
  out.f_u31_l2 = l2_series(f_u31);
  out.f_u31_cosine = cosine_matrix(f_u31);
  out.input_latents_l2 = l2_series(inputs);
  out.noise_pred_l2 = l2_series(eps);
  for (std::size_t g = 0; g < 4; ++g) out.fg_mass[g] = mass_sum[g] / static_cast<double>(out.timesteps.size());
  for (const auto& [site, snaps] : background) {
    out.background_l2[site] =
        snaps.front().empty() ? std::vector<double>(snaps.size() - 1, 0.0) : l2_series(snaps);
  }

  const auto dir = prepare_dir(cfg.output_dir);
  const json cj = to_json(cfg);
  const auto& ts = out.timesteps;
  write_csv(dir / "l2_series.csv", cj, kSeriesHeader, series_rows(ts, out.f_u31_l2));
  write_csv(dir / "input_latents_l2.csv", cj, kSeriesHeader, series_rows(ts, out.input_latents_l2));
  write_csv(dir / "noise_pred_l2.csv", cj, kSeriesHeader, series_rows(ts, out.noise_pred_l2));
  for (const auto& [site, series] : out.background_l2)
    write_csv(dir / ("bg_l2_" + site + ".csv"), cj, kSeriesHeader, series_rows(ts, series));

  std::vector<std::string> header;
  for (int t : ts) header.push_back("t" + std::to_string(t));
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : out.f_u31_cosine) {
    rows.emplace_back();
    for (double v : row) rows.back().push_back(num(v));
  }
  write_csv(dir / "cosine_matrix.csv", cj, header, rows);

  rows.clear();
  for (std::size_t g = 0; g < 4; ++g) rows.push_back({kKeyGroupNames[g], num(out.fg_mass[g])});
  write_csv(dir / "fg_mass.csv", cj, {"group", "mass"}, rows);

  rows.clear();
  for (const auto& st : rep.steps)
    rows.push_back({"0", std::to_string(st.t), std::string(to_string(st.kind)), std::to_string(st.flops)});
  write_csv(dir / "flops.csv", cj, {"clip", "timestep", "kind", "flops"}, rows);
  return out;
}

AblationResult cmd_ablate(const RunConfig& cfg) {
  struct RowSpec {
    const char* name;
    Variant variant;
    bool estimation;
  };
  static constexpr std::array<RowSpec, 5> kRows{{{"baseline", Variant::kBaseline, false},
                                                 {"lcp_wo_estimate", Variant::kLcp, false},
                                                 {"lcp", Variant::kLcp, true},
                                                 {"lcp_dfa", Variant::kLcpDfa, true},
                                                 {"lcp_dfa_rm", Variant::kLcpDfaRm, true}}};
  const Resolved r = resolve(cfg);
  AblationResult out;
  out.seeds = static_cast<int>(cfg.ablate_seeds.size());
  for (const auto& spec : kRows) out.rows.push_back({spec.name, spec.variant, spec.estimation});

  for (std::uint64_t seed : cfg.ablate_seeds) {
    std::vector<RunResult> runs;
    for (const auto& spec : kRows) {
      RunConfig c = cfg;
      c.seeds.noise = seed;
      c.variant = spec.variant;
      c.estimation = spec.estimation;
      runs.push_back(execute_run(c, r));
    }
    const DenseArray& base = runs.front().final_latent;
    std::vector<double> err;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      auto& row = out.rows[i];
      err.push_back(relative_l2(runs[i].final_latent, base));
      row.error += err.back();
      row.flops += static_cast<double>(runs[i].total_flops()) / static_cast<double>(runs[i].clips.size());
      row.latency_s += runs[i].latency_per_clip_s();
    }
    if (err[2] <= err[1]) ++out.estimation_wins;
  }
  for (auto& row : out.rows) {
    row.error /= out.seeds;
    row.flops /= out.seeds;
    row.latency_s /= out.seeds;
  }
  for (auto& row : out.rows) row.speedup = speedup(out.rows.front().latency_s, row.latency_s);

  const auto dir = prepare_dir(cfg.output_dir);
  std::vector<std::vector<std::string>> rows;
  json jrows = json::array();
  for (const auto& row : out.rows) {
    rows.push_back({row.name, std::string(to_string(row.variant)), row.estimation ? "on" : "off", num(row.flops),
                    num(row.latency_s), num(row.speedup), num(row.error)});
    jrows.push_back({{"name", row.name},
                     {"variant", std::string(to_string(row.variant))},
                     {"estimation", row.estimation},
                     {"flops", row.flops},
                     {"latency_s", row.latency_s},
                     {"speedup", row.speedup},
                     {"error_vs_baseline", row.error}});
  }
  write_csv(dir / "ablation.csv", to_json(cfg),
            {"row", "variant", "estimation", "flops", "latency_s", "speedup", "error_vs_baseline"}, rows);
  write_json(dir / "ablation.json", {{"config", to_json(cfg)},
                                     {"rows", jrows},
                                     {"estimation_wins", out.estimation_wins},
                                     {"seeds", out.seeds}});
  return out;
}

namespace {

struct LoadedReport {
  std::filesystem::path path;
  json doc;
  DenseArray latent;
};

LoadedReport load_report(const std::filesystem::path& p) {
  LoadedReport r;
  r.path = std::filesystem::is_directory(p) ? p / "report.json" : p;
  std::ifstream in(r.path);
  if (!in) throw ConfigError("cannot open report " + r.path.string());
  try {
    r.doc = json::parse(in);
    const auto latent_file = r.doc.at("final_latent").get<std::string>();
    r.latent = read_tns(r.path.parent_path() / latent_file);
    r.doc.at("totals").at("latency_per_clip_s").get<double>();
    r.doc.at("totals").at("flops").get<double>();
    r.doc.at("final_latent_checksum").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError("report " + r.path.string() + ": " + e.what());
  }
  return r;
}

}  // namespace

json compare_reports(const std::filesystem::path& base_path, const std::filesystem::path& accel_path) {
  const LoadedReport base = load_report(base_path);
  const LoadedReport accel = load_report(accel_path);
  if (!(base.latent.shape() == accel.latent.shape())) {
    throw ConfigError("compare: incompatible latent shapes " + base.latent.shape().to_string() + " vs " +
                      accel.latent.shape().to_string());
  }
  const double base_lat = base.doc["totals"]["latency_per_clip_s"].get<double>();
  const double accel_lat = accel.doc["totals"]["latency_per_clip_s"].get<double>();
  const double base_flops = base.doc["totals"]["flops"].get<double>();
  const double accel_flops = accel.doc["totals"]["flops"].get<double>();
  if (!(base_flops > 0)) throw ConfigError("compare: base report has no FLOPs");
  return {{"base", base.path.string()},
          {"accel", accel.path.string()},
          {"base_latency_s", base_lat},
          {"accel_latency_s", accel_lat},
          {"speedup", speedup(base_lat, accel_lat)},
          {"flops_ratio", accel_flops / base_flops},
          {"final_latent_rel_l2", relative_l2(accel.latent, base.latent)},
          {"checksums_equal",
           base.doc["final_latent_checksum"].get<std::string>() == accel.doc["final_latent_checksum"].get<std::string>()},
          {"base_config", base.doc.value("config", json::object())},
          {"accel_config", accel.doc.value("config", json::object())}};
}

json cmd_compare(const std::filesystem::path& base, const std::filesystem::path& accel,
                 const std::filesystem::path& out_dir) {
  json doc = compare_reports(base, accel);
  const auto dir = prepare_dir(out_dir.string());
  write_json(dir / "comparison.json", doc);
  return doc;
}

}  // namespace fastdenoise
