// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration, staged artifact pipeline and scenarios.
//
// Layout: <out>/<config hash>/<stage>/ with a STAGE marker per completed
// stage.  Every artifact embeds the hash of the configuration prefix that
// produced it, so stages can be reused across configurations that only
// differ in later-stage keys (sweeps) and mixing is detected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "emshep/attacks.hpp"

namespace emshep::pipeline {

enum class Stage : int {
  kGenData = 0,
  kTrainVictim,
  kAttack,
  kSimulate,
  kProcess,
  kTrainEmclf,
  kTrainDetector,
  kCalibrate,
  kDetect,
  kReport,
};
inline constexpr int kNumStages = 10;

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string scenario = "baseline";  // baseline | robust

  // dataset
  std::size_t n_classes = 10;
  std::size_t n_per_class = 300;
  std::size_t dim = 64;
  double class_separation = 3.0;
  double train_fraction = 0.6;
  double validation_fraction = 0.2;

  // victim
  std::vector<std::size_t> victim_layers{64, 48, 32, 10};
  double victim_lr = 0.05;
  double victim_momentum = 0.0;
  std::size_t victim_epochs = 30;
  std::size_t victim_batch = 32;
  double robust_fgsm_eps = 0.1;  // robust scenario: augmentation and benign FGSM set

  // attacks (targeted PGD, one batch per norm)
  std::vector<attacks::Norm> attack_norms{attacks::Norm::kLinf, attacks::Norm::kL2,
                                          attacks::Norm::kL1};
  std::size_t adv_per_target = 50;
  std::size_t attack_max_attempts = 400;  // per target class
  std::size_t pgd_steps = 40;
  double eps_linf = 0.1;
  double eps_l2 = 1.0;
  double eps_l1 = 5.0;

  // leakage
  std::size_t samples_per_mac = 2;
  std::size_t gap = 256;
  double carrier = 0.15;
  double baseline = 1.0;
  double gain = 1.0;
  std::size_t quant_bits = 8;
  std::size_t jitter_max = 32;
  double noise_sigma = 0.25;
  std::size_t trace_export = 20;  // EMSH files written by `simulate`

  // trace processing
  double bandpass_halfwidth = 0.04;
  std::size_t energy_window = 64;
  double segment_threshold = 0.25;
  std::size_t stft_window = 256;
  std::size_t stft_stride = 128;
  std::size_t bands = 15;

  // EM classifiers
  std::size_t clf_hidden = 64;
  double clf_lr = 1e-2;
  double clf_momentum = 0.0;
  std::size_t clf_epochs = 50;
  std::size_t clf_batch = 32;

  // detectors
  std::size_t vae_latent = 6;
  double vae_lambda = 1.0;
  double vae_lr = 1e-3;
  std::size_t vae_epochs = 200;
  std::size_t vae_batch = 32;

  // calibration and evaluation pools (fresh benign draws per class)
  double target_fpr = 0.1;
  std::size_t calib_per_class = 10000;
  std::size_t holdout_per_class = 10000;

  // Not part of the hash.
  std::size_t jobs = 1;

  void validate() const;
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  // "key = value" lines in registry order.
  std::string canonical() const;
  std::uint64_t hash() const;
  // Hash over the keys that affect stages up to and including s.
  std::uint64_t stage_hash(Stage s) const;
};

std::vector<std::string> config_keys();
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, std::filesystem::path out_root);

  const ExperimentConfig& config() const { return cfg_; }
  std::filesystem::path run_dir() const;
  std::filesystem::path stage_dir(Stage s) const;
  bool is_complete(Stage s) const;

  // Runs one stage; prerequisites must be complete.  Skips if already done.
  void run_stage(Stage s);
  // Runs every stage up to and including `last`, skipping completed ones.
  void run_until(Stage last = Stage::kReport);

 private:
  void require(Stage s) const;
  bool try_reuse(Stage s);
  void mark_complete(Stage s) const;

  void gen_data();
  void train_victim();
  void attack();
  void simulate();
  void process();
  void train_emclf();
  void train_detector();
  void calibrate();
  void detect();
  void report();

  ExperimentConfig cfg_;
  std::filesystem::path out_root_;
};

struct SweepRow {
  std::string value;
  std::map<std::string, double> metrics;
};

// parameter in {window, bands, latent, norm, sigma}.
std::vector<SweepRow> sweep(const ExperimentConfig& base, std::string_view parameter,
                            const std::vector<std::string>& values,
                            const std::filesystem::path& out_root);
void write_sweep(const std::filesystem::path& dir, std::string_view parameter,
                 const std::vector<SweepRow>& rows);

// Key metrics from a completed run (report/metrics.csv).
std::map<std::string, double> read_metrics(const std::filesystem::path& run_dir);

}  // namespace emshep::pipeline
