// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// emshep: command-line driver for the staged detection pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "emshep/pipeline.hpp"

namespace {

using emshep::pipeline::ExperimentConfig;
using emshep::pipeline::Stage;

struct Options {
  std::string config;
  long long seed = -1;
  std::string out = "runs";
  std::string stage;
  std::size_t jobs = 1;
  std::vector<std::string> overrides;
  std::string param;
  std::vector<std::string> values;
};

void add_common(CLI::App* cmd, Options& o, bool with_stage) {
  cmd->add_option("--config", o.config, "config file (key = value lines)");
  cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
  cmd->add_option("--out", o.out, "output root; runs go to <out>/<config hash>/")
      ->capture_default_str();
  cmd->add_option("--jobs", o.jobs, "worker threads within a stage")->capture_default_str();
  cmd->add_option("--set", o.overrides, "extra key=value override (repeatable)");
  if (with_stage) cmd->add_option("--stage", o.stage, "last stage to run");
}

ExperimentConfig make_config(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : emshep::pipeline::load_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw emshep::ConfigError("--set expects key=value, got " + kv);
    cfg.set(emshep::io::trim(kv.substr(0, eq)), emshep::io::trim(kv.substr(eq + 1)));
  }
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  cfg.jobs = o.jobs;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"emshep: EM side-channel adversarial input detection pipeline"};
  app.require_subcommand(1);
  Options o;

  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (int i = 0; i < emshep::pipeline::kNumStages; ++i) {
    const Stage s = static_cast<Stage>(i);
    auto* cmd = app.add_subcommand(std::string(emshep::pipeline::stage_name(s)),
                                   "run the '" + std::string(emshep::pipeline::stage_name(s)) +
                                       "' stage (earlier stages must be complete)");
    add_common(cmd, o, false);
    stage_cmds.emplace_back(cmd, s);
  }
  auto* run = app.add_subcommand("run", "run every stage up to --stage (default: report)");
  add_common(run, o, true);
  auto* robust = app.add_subcommand("robust", "robust-victim scenario (scenario = robust)");
  add_common(robust, o, true);
  auto* sweep = app.add_subcommand("sweep", "one run per parameter value, comparison table");
  add_common(sweep, o, false);
  sweep->add_option("--param", o.param, "window | bands | latent | norm | sigma")->required();
  sweep->add_option("--values", o.values, "comma-separated values")->required()->delimiter(',');
  auto* show = app.add_subcommand("config", "print the canonical configuration and its hash");
  add_common(show, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (const auto& [cmd, s] : stage_cmds) {
      if (!cmd->parsed()) continue;
      emshep::pipeline::Pipeline p(make_config(o), o.out);
      p.run_stage(s);
      std::cout << p.stage_dir(s).string() << "\n";
      return 0;
    }
    if (run->parsed() || robust->parsed()) {
      ExperimentConfig cfg = make_config(o);
      if (robust->parsed()) cfg.scenario = "robust";
      emshep::pipeline::Pipeline p(cfg, o.out);
      p.run_until(o.stage.empty() ? Stage::kReport : emshep::pipeline::parse_stage(o.stage));
      std::cout << p.run_dir().string() << "\n";
      return 0;
    }
    if (sweep->parsed()) {
      const ExperimentConfig cfg = make_config(o);
      const auto rows = emshep::pipeline::sweep(cfg, o.param, o.values, o.out);
      const std::filesystem::path dir = std::filesystem::path(o.out) / "sweeps";
      emshep::pipeline::write_sweep(dir, o.param, rows);
      std::cout << (dir / ("sweep_" + o.param + ".csv")).string() << "\n";
      return 0;
    }
    if (show->parsed()) {
      const ExperimentConfig cfg = make_config(o);
      std::cout << cfg.canonical() << "# hash = " << emshep::io::hex64(cfg.hash()) << "\n";
      return 0;
    }
  } catch (const emshep::Error& e) {
    std::fprintf(stderr, "emshep: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "emshep: %s\n", e.what());
    return 1;
  }
  return 0;
}
