// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "emshep/pipeline.hpp"
#include "test_util.hpp"

using namespace emshep;
namespace pl = emshep::pipeline;
namespace fs = std::filesystem;

namespace {

// Three classes, tiny pools: the whole chain runs in seconds.
pl::ExperimentConfig small_config() {
  pl::ExperimentConfig c;
  c.n_classes = 3;
  c.n_per_class = 100;
  c.victim_layers = {64, 64, 3};
  c.victim_epochs = 10;
  c.adv_per_target = 4;
  c.attack_max_attempts = 40;
  c.pgd_steps = 10;
  c.trace_export = 2;
  c.clf_epochs = 10;
  c.vae_epochs = 20;
  c.calib_per_class = 100;
  c.holdout_per_class = 40;
  return c;
}

std::string small_config_text() {
  return "n_classes = 3\nn_per_class = 100\nvictim_layers = 64,64,3\nvictim_epochs = 10\n"
         "adv_per_target = 4\nattack_max_attempts = 40\npgd_steps = 10\ntrace_export = 2\n"
         "clf_epochs = 10\nvae_epochs = 20\ncalib_per_class = 100\nholdout_per_class = 40\n";
}

int cli(const std::string& args) {
  const std::string cmd = std::string(EMSHEP_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = pl::parse_config("# comment\n seed = 11  # trailing\n\nattack_norms = l2, linf\n");
  CHECK(c.seed == 11);
  CHECK(c.attack_norms == std::vector<attacks::Norm>{attacks::Norm::kL2, attacks::Norm::kLinf});
  CHECK(c.n_classes == 10);

  CHECK_THROWS_AS(pl::parse_config("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(pl::parse_config("seed = -3\n"), ConfigError);
  CHECK_THROWS_AS(pl::parse_config("attack_norms = l7\n"), ConfigError);
  try {
    pl::parse_config("seed = 1\nno equals sign\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("config line 2") != std::string::npos);
  }

  pl::ExperimentConfig bad;
  bad.victim_layers = {64, 32, 9};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.jitter_max = bad.gap;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.holdout_per_class = std::size_t{1} << 24;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  pl::ExperimentConfig{}.validate();
}

TEST_CASE("canonical form and hashes") {
  const pl::ExperimentConfig a;
  CHECK(pl::parse_config(a.canonical()).canonical() == a.canonical());
  CHECK(pl::parse_config(a.canonical()).hash() == a.hash());
  CHECK(a.canonical().find("jobs") == std::string::npos);

  pl::ExperimentConfig b = a;
  b.jobs = 4;
  CHECK(b.hash() == a.hash());

  // A detection-stage key leaves earlier stage hashes alone.
  b.holdout_per_class = 123;
  CHECK(b.hash() != a.hash());
  CHECK(b.stage_hash(pl::Stage::kCalibrate) == a.stage_hash(pl::Stage::kCalibrate));
  CHECK(b.stage_hash(pl::Stage::kDetect) != a.stage_hash(pl::Stage::kDetect));

  b = a;
  b.seed = 8;
  for (int s = 0; s < pl::kNumStages; ++s)
    CHECK(b.stage_hash(static_cast<pl::Stage>(s)) != a.stage_hash(static_cast<pl::Stage>(s)));

  for (const auto& k : pl::config_keys()) CHECK_NOTHROW(a.get(k));
  for (int s = 0; s < pl::kNumStages; ++s) {
    const auto st = static_cast<pl::Stage>(s);
    CHECK(pl::parse_stage(pl::stage_name(st)) == st);
  }
  CHECK_THROWS_AS(pl::parse_stage("nope"), ConfigError);
}

TEST_CASE("stage prerequisites and mixed configurations") {
  const test::TempDir dir;
  pl::Pipeline p(small_config(), dir.path());
  CHECK_THROWS_AS(p.run_stage(pl::Stage::kDetect), PrerequisiteError);
  CHECK_THROWS_AS(p.run_stage(pl::Stage::kTrainVictim), PrerequisiteError);
  p.run_stage(pl::Stage::kGenData);
  CHECK(p.is_complete(pl::Stage::kGenData));

  // A marker from another configuration is a mismatch, not a missing stage.
  std::ofstream(p.stage_dir(pl::Stage::kGenData) / "STAGE") << "something else\n";
  CHECK_FALSE(p.is_complete(pl::Stage::kGenData));
  CHECK_THROWS_AS(p.run_stage(pl::Stage::kTrainVictim), ConfigError);
}

TEST_CASE("small end-to-end run is reproducible") {
  const test::TempDir a, b;
  pl::Pipeline p(small_config(), a.path());
  p.run_until();
  for (int s = 0; s < pl::kNumStages; ++s) CHECK(p.is_complete(static_cast<pl::Stage>(s)));

  const auto m = pl::read_metrics(p.run_dir());
  CHECK(m.count("dr_mean_linf") == 1);
  CHECK(m.count("fpr_holdout_overall") == 1);
  CHECK(m.at("victim_test_accuracy") >= 0.9);
  for (const char* f : {"metrics.csv", "fpr.csv", "dr.csv", "report.md", "pr_linf.csv"})
    CHECK(fs::exists(p.stage_dir(pl::Stage::kReport) / f));
  const fs::path traces = p.stage_dir(pl::Stage::kSimulate) / "traces";
  CHECK(std::distance(fs::directory_iterator(traces), fs::directory_iterator{}) >= 2);

  // Regenerating the report from the same artifacts is bitwise stable.
  const std::string report = test::slurp(p.stage_dir(pl::Stage::kReport) / "metrics.csv");
  fs::remove_all(p.stage_dir(pl::Stage::kReport));
  p.run_stage(pl::Stage::kReport);
  CHECK(test::slurp(p.stage_dir(pl::Stage::kReport) / "metrics.csv") == report);

  // A fresh run elsewhere reproduces verdicts and report.
  pl::Pipeline q(small_config(), b.path());
  q.run_until();
  for (const char* f : {"detect/verdicts_holdout.csv", "detect/verdicts_adv_linf.csv",
                        "report/metrics.csv", "report/report.md"})
    CHECK(test::slurp(p.run_dir() / f) == test::slurp(q.run_dir() / f));

  // A later-stage change reuses earlier stages from the sibling run.
  auto c = small_config();
  c.holdout_per_class = 30;
  pl::Pipeline r(c, a.path());
  r.run_until();
  CHECK(test::slurp(r.stage_dir(pl::Stage::kCalibrate) / "thresholds.csv") ==
        test::slurp(p.stage_dir(pl::Stage::kCalibrate) / "thresholds.csv"));
  CHECK(pl::read_metrics(r.run_dir()).at("dr_mean_linf") == m.at("dr_mean_linf"));
}

TEST_CASE("cli exit codes") {
  const test::TempDir dir;
  const fs::path cfg = dir.path() / "small.cfg";
  std::ofstream(cfg) << small_config_text();
  const std::string common = "--config " + cfg.string() + " --out " + (dir.path() / "runs").string();

  CHECK(cli("config " + common) == 0);
  CHECK(cli("config --set bogus=1 " + common) == 2);
  CHECK(cli("config --set victim_layers=64,3,9 " + common) == 2);
  CHECK(cli("detect " + common) == 3);
  CHECK(cli("gen-data " + common) == 0);
  CHECK(cli("run --stage train-victim --set victim_lr=1e200 " + common) == 4);
  CHECK(cli("no-such-command") == 2);

  // The CLI and the library agree on where a configuration lives.
  const auto parsed = pl::load_config(cfg);
  CHECK(fs::exists(dir.path() / "runs" / io::hex64(parsed.hash()) / "gen-data" / "STAGE"));
}
