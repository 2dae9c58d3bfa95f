// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Per-class VAE anomaly detectors over concatenated logits vectors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "emshep/nn.hpp"

namespace emshep::anomaly {

struct VaeConfig {
  std::vector<std::size_t> hidden{64, 32, 16};  // encoder widths; decoder mirrors
  std::size_t latent = 6;
  double lambda = 1.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
};

struct Vae {
  nn::Mlp encoder;  // D -> ... -> 2L  (mean, log-variance)
  nn::Mlp decoder;  // L -> ... -> D
  std::size_t latent = 0;
  double lambda = 1.0;

  std::size_t input_dim() const { return encoder.input_dim(); }
};

struct VaeLoss {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

Vae make_vae(std::size_t input_dim, const VaeConfig& cfg, std::uint64_t stream_index = 0);

// -1/2 * sum(1 + lv - mu^2 - exp(lv))
double kl_divergence(std::span<const double> mu, std::span<const double> log_var);

// Evaluation loss: the decoder sees the latent mean.
VaeLoss vae_loss(const Vae& vae, std::span<const double> x);

// Loss and parameter gradients for one example.  `noise` (length L) is the
// reparameterization draw; nullptr means evaluation mode (zero noise).
VaeLoss vae_gradient(const Vae& vae, std::span<const double> x, const double* noise,
                     nn::MlpGrads& enc_grads, nn::MlpGrads& dec_grads);

struct VaeTrainReport {
  std::vector<double> epoch_loss;  // mean training total loss per epoch
};

Vae train_vae(const std::vector<std::vector<double>>& data, const VaeConfig& cfg,
              std::uint64_t stream_index = 0, VaeTrainReport* report = nullptr);

nn::GradCheckResult grad_check_vae(Vae& vae, std::span<const double> x, double step = 1e-4);

inline constexpr std::size_t kMinCalibration = 20;

// Empirical (1 - fpr) quantile, linear interpolation between order statistics.
double fit_threshold(std::span<const double> losses, double fpr);

enum class Decision { kBenign, kAdversarial };

struct Verdict {
  std::size_t predicted_class = 0;
  double loss = 0.0;
  double threshold = 0.0;
  Decision decision = Decision::kBenign;
};

struct DetectorBank {
  std::vector<Vae> detectors;      // one per class
  std::vector<double> thresholds;  // empty until calibrated
  double target_fpr = 0.1;

  bool calibrated() const { return !thresholds.empty(); }
  std::size_t n_classes() const { return detectors.size(); }
};

// Loss of detector n; independent of thresholds.
double score(const DetectorBank& bank, std::span<const double> lv, std::size_t n);

// Adversarial iff loss > threshold of the predicted class.
Verdict detect(const DetectorBank& bank, std::span<const double> lv, std::size_t predicted);

void save_bank(const std::filesystem::path& path, const DetectorBank& bank,
               std::uint64_t config_hash);
DetectorBank load_bank(const std::filesystem::path& path, std::uint64_t* config_hash = nullptr);

struct VerdictRow {
  std::uint64_t sample_id = 0;
  Verdict verdict;
};

// sample_id,pred_label,loss,threshold,decision
void export_verdicts_csv(const std::filesystem::path& path, const std::vector<VerdictRow>& rows,
                         std::uint64_t config_hash);

}  // namespace emshep::anomaly
