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

#include "fastdenoise/cli.hpp"

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fastdenoise/commands.hpp"
#include "fastdenoise/error.hpp"

namespace fastdenoise {

using nlohmann::json;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> strategy, plan, mask, estimation, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool strategy_flags) {
  cmd->add_option("--config", f.config_path, "run config (JSON)");
  cmd->add_option("--set", f.overrides, "dotted override, e.g. schedule.N=3")->take_all();
  cmd->add_option("--seed", f.seed, "noise seed");
  cmd->add_option("--plan", f.plan, "plan overrides, e.g. N=2 or S=20,N=3");
  cmd->add_option("--mask", f.mask, "rect:x0,y0,x1,y1 | frac:F | mask file");
  cmd->add_option("--out", f.out, "output directory");
  if (strategy_flags) {
    cmd->add_option("--strategy", f.strategy, "baseline | lcp | lcp_dfa | lcp_dfa_rm");
    cmd->add_option("--workers", f.workers, "non-key prediction workers");
    cmd->add_option("--estimation", f.estimation, "on | off");
  }
}

RunConfig build_config(const ConfigFlags& f) {
  json doc = to_json(f.config_path.empty() ? RunConfig{} : load_config(f.config_path));
  for (const auto& o : f.overrides) apply_override(doc, o);
  if (f.strategy) doc["strategy"]["variant"] = *f.strategy;
  if (f.workers) doc["strategy"]["workers"] = *f.workers;
  if (f.estimation) {
    if (*f.estimation != "on" && *f.estimation != "off") {
      throw ConfigError("--estimation expects on or off, got '" + *f.estimation + "'");
    }
    doc["strategy"]["estimation"] = *f.estimation == "on";
  }
  if (f.seed) doc["seeds"]["noise"] = *f.seed;
  if (f.mask) doc["mask"]["spec"] = *f.mask;
  if (f.out) doc["output_dir"] = *f.out;
  if (f.plan) {
    std::stringstream ss(*f.plan);
    std::string item;
    while (std::getline(ss, item, ',')) apply_override(doc, "schedule." + item);
  }
  return config_from_json(doc);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fastdenoise: cached, parallel and foreground-restricted diffusion sampling on a toy UNet"};
  app.require_subcommand(1);

  ConfigFlags run_f, diag_f, abl_f;
  auto* run = app.add_subcommand("run", "denoise every clip and write report.json, final.tns, flops.csv");
  add_config_flags(run, run_f, true);
  auto* diagnose = app.add_subcommand("diagnose", "baseline run with feature capture; writes diagnostic CSVs");
  add_config_flags(diagnose, diag_f, false);
  auto* ablate = app.add_subcommand("ablate", "strategy grid; writes ablation.csv and ablation.json");
  add_config_flags(ablate, abl_f, false);
  auto* compare = app.add_subcommand("compare", "compare an accelerated report against a base report");
  std::string base_report, accel_report, compare_out = ".";
  compare->add_option("base", base_report, "base report.json or its directory")->required();
  compare->add_option("accel", accel_report, "accelerated report.json or its directory")->required();
  compare->add_option("--out", compare_out, "directory for comparison.json");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp& e) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      throw ConfigError(e.what());
    }

    if (run->parsed()) {
      const RunResult r = cmd_run(build_config(run_f));
      out << "run: strategy=" << to_string(r.config.variant) << " clips=" << r.clips.size()
          << " flops=" << r.total_flops() << " checksum=" << checksum_hex(r.final_latent) << " -> "
          << r.config.output_dir << '\n';
    } else if (diagnose->parsed()) {
      const RunConfig cfg = build_config(diag_f);
      const DiagnoseResult d = cmd_diagnose(cfg);
      out << "diagnose: steps=" << d.timesteps.size() << " -> " << cfg.output_dir << '\n';
    } else if (ablate->parsed()) {
      const RunConfig cfg = build_config(abl_f);
      const AblationResult a = cmd_ablate(cfg);
      for (const auto& row : a.rows) {
        out << row.name << " flops=" << row.flops << " speedup=" << row.speedup << " error=" << row.error << '\n';
      }
      out << "estimation_wins=" << a.estimation_wins << "/" << a.seeds << " -> " << cfg.output_dir << '\n';
    } else if (compare->parsed()) {
      const json c = cmd_compare(base_report, accel_report, compare_out);
      out << "compare: speedup=" << c["speedup"].get<double>() << " flops_ratio=" << c["flops_ratio"].get<double>()
          << " rel_l2=" << c["final_latent_rel_l2"].get<double>()
          << " checksums_equal=" << (c["checksums_equal"].get<bool>() ? "true" : "false") << '\n';
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "error[config]: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    err << "error[config]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error[runtime]: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace fastdenoise
