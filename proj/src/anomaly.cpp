// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "emshep/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "emshep/errors.hpp"
#include "emshep/evalkit.hpp"
#include "emshep/io.hpp"
#include "emshep/rng.hpp"

namespace emshep::anomaly {

namespace {

nn::Mlp stack(const std::vector<std::size_t>& dims) {
  std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::kRelu);
  acts.back() = nn::Activation::kLinear;
  return nn::Mlp(dims, acts);
}

}  // namespace

Vae make_vae(std::size_t input_dim, const VaeConfig& cfg, std::uint64_t stream_index) {
  if (input_dim == 0) throw ConfigError("vae: input dimension must be >= 1");
  if (cfg.latent == 0) throw ConfigError("vae: latent dimension must be >= 1");
  if (!(cfg.lambda >= 0.0)) throw ConfigError("vae: lambda must be >= 0");
  std::vector<std::size_t> enc{input_dim};
  enc.insert(enc.end(), cfg.hidden.begin(), cfg.hidden.end());
  enc.push_back(2 * cfg.latent);
  std::vector<std::size_t> dec{cfg.latent};
  dec.insert(dec.end(), cfg.hidden.rbegin(), cfg.hidden.rend());
  dec.push_back(input_dim);

  Vae v;
  v.encoder = stack(enc);
  v.decoder = stack(dec);
  v.latent = cfg.latent;
  v.lambda = cfg.lambda;
  Rng rng = make_rng(cfg.seed, stream::kVae, stream_index);
  v.encoder.init_uniform(rng);
  v.decoder.init_uniform(rng);
  return v;
}

double kl_divergence(std::span<const double> mu, std::span<const double> log_var) {
  if (mu.size() != log_var.size()) throw ShapeError("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    s += 1.0 + log_var[i] - mu[i] * mu[i] - std::exp(log_var[i]);
  }
  return -0.5 * s;
}

VaeLoss vae_gradient(const Vae& vae, std::span<const double> x, const double* noise,
                     nn::MlpGrads& enc_grads, nn::MlpGrads& dec_grads) {
  if (x.size() != vae.input_dim()) throw ShapeError("vae: input dimension mismatch");
  const std::size_t L = vae.latent;
  nn::ForwardCache enc;
  vae.encoder.forward(x, enc);
  const auto h = enc.output();
  std::span<const double> mu = h.subspan(0, L);
  std::span<const double> lv = h.subspan(L, L);

  std::vector<double> z(L);
  for (std::size_t i = 0; i < L; ++i) {
    z[i] = mu[i] + (noise ? std::exp(0.5 * lv[i]) * noise[i] : 0.0);
  }
  nn::ForwardCache dec;
  vae.decoder.forward(z, dec);
  const auto y = dec.output();

  VaeLoss loss;
  const double inv_d = 1.0 / static_cast<double>(x.size());
  std::vector<double> gy(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = y[j] - x[j];
    loss.recon += d * d;
    gy[j] = 2.0 * d * inv_d;
  }
  loss.recon *= inv_d;
  loss.kl = kl_divergence(mu, lv);
  loss.total = loss.recon + vae.lambda * loss.kl;

  std::vector<double> gz;
  vae.decoder.backward(dec, gy, dec_grads, &gz);
  std::vector<double> gh(2 * L);
  for (std::size_t i = 0; i < L; ++i) {
    const double sigma = std::exp(0.5 * lv[i]);
    gh[i] = gz[i] + vae.lambda * mu[i];
    gh[L + i] = (noise ? gz[i] * noise[i] * 0.5 * sigma : 0.0) +
                vae.lambda * 0.5 * (sigma * sigma - 1.0);
  }
  vae.encoder.backward(enc, gh, enc_grads);
  return loss;
}

VaeLoss vae_loss(const Vae& vae, std::span<const double> x) {
  if (x.size() != vae.input_dim()) throw ShapeError("vae: input dimension mismatch");
  const std::size_t L = vae.latent;
  const std::vector<double> h = vae.encoder.forward(x);
  std::span<const double> mu(h.data(), L);
  std::span<const double> lv(h.data() + L, L);
  const std::vector<double> y = vae.decoder.forward(mu);
  VaeLoss loss;
  for (std::size_t j = 0; j < x.size(); ++j) loss.recon += (y[j] - x[j]) * (y[j] - x[j]);
  loss.recon /= static_cast<double>(x.size());
  loss.kl = kl_divergence(mu, lv);
  loss.total = loss.recon + vae.lambda * loss.kl;
  if (!std::isfinite(loss.total)) throw NumericError("vae: non-finite loss");
  return loss;
}

Vae train_vae(const std::vector<std::vector<double>>& data, const VaeConfig& cfg,
              std::uint64_t stream_index, VaeTrainReport* report) {
  if (data.size() < 50) {
    throw ConfigError("train_vae: need at least 50 training vectors, got " +
                      std::to_string(data.size()));
  }
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw ConfigError("train_vae: bad epochs/batch");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train_vae: learning rate must be > 0");
  Vae vae = make_vae(data.front().size(), cfg, stream_index);
  nn::Adam enc_opt(cfg.learning_rate);
  nn::Adam dec_opt(cfg.learning_rate);
  nn::MlpGrads ge = vae.encoder.make_grads();
  nn::MlpGrads gd = vae.decoder.make_grads();
  Rng rng = make_rng(cfg.seed, stream::kVae, 0x10000 + stream_index);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> noise(vae.latent);
  VaeTrainReport local;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ge.zero();
      gd.zero();
      for (std::size_t k = start; k < end; ++k) {
        for (double& e : noise) e = normal(rng);
        total += vae_gradient(vae, data[order[k]], noise.data(), ge, gd).total;
      }
      const double s = 1.0 / static_cast<double>(end - start);
      ge.scale(s);
      gd.scale(s);
      enc_opt.step(vae.encoder, ge);
      dec_opt.step(vae.decoder, gd);
    }
    const double mean = total / static_cast<double>(data.size());
    if (!std::isfinite(mean) || !vae.encoder.all_finite() || !vae.decoder.all_finite()) {
      throw NumericError("train_vae: training diverged at epoch " + std::to_string(epoch));
    }
    local.epoch_loss.push_back(mean);
  }
  vae.encoder.round_to_float();
  vae.decoder.round_to_float();
  if (report) *report = std::move(local);
  return vae;
}

nn::GradCheckResult grad_check_vae(Vae& vae, std::span<const double> x, double step) {
  nn::MlpGrads ge = vae.encoder.make_grads();
  nn::MlpGrads gd = vae.decoder.make_grads();
  vae_gradient(vae, x, nullptr, ge, gd);
  std::vector<std::span<double>> params = vae.encoder.param_blocks();
  for (auto b : vae.decoder.param_blocks()) params.push_back(b);
  std::vector<std::span<const double>> analytic = std::as_const(ge).blocks();
  for (auto b : std::as_const(gd).blocks()) analytic.push_back(b);
  auto loss = [&]() {
    nn::ForwardCache enc;
    vae.encoder.forward(x, enc);
    const auto h = enc.output();
    nn::ForwardCache dec;
    vae.decoder.forward(h.subspan(0, vae.latent), dec);
    nn::PiecewiseLoss l;
    l.value = vae_loss(vae, x).total;
    nn::append_relu_pattern(vae.encoder, enc, l.pattern);
    nn::append_relu_pattern(vae.decoder, dec, l.pattern);
    return l;
  };
  return nn::check_gradients(std::move(params), std::move(analytic), loss, step);
}

double fit_threshold(std::span<const double> losses, double fpr) {
  if (losses.size() < kMinCalibration) {
    throw ConfigError("fit_threshold: need at least " + std::to_string(kMinCalibration) +
                      " calibration losses, got " + std::to_string(losses.size()));
  }
  if (!(fpr > 0.0 && fpr <= 0.5)) throw ConfigError("fit_threshold: fpr must be in (0, 0.5]");
  return evalkit::quantile({losses.begin(), losses.end()}, 1.0 - fpr);
}

double score(const DetectorBank& bank, std::span<const double> lv, std::size_t n) {
  if (n >= bank.detectors.size()) throw ConfigError("detect: class index out of range");
  return vae_loss(bank.detectors[n], lv).total;
}

Verdict detect(const DetectorBank& bank, std::span<const double> lv, std::size_t predicted) {
  if (!bank.calibrated()) throw PrerequisiteError("detect: detector bank is not calibrated");
  Verdict v;
  v.predicted_class = predicted;
  v.loss = score(bank, lv, predicted);
  v.threshold = bank.thresholds[predicted];
  v.decision = v.loss > v.threshold ? Decision::kAdversarial : Decision::kBenign;
  return v;
}

void save_bank(const std::filesystem::path& path, const DetectorBank& bank,
               std::uint64_t config_hash) {
  io::BinaryWriter w(path);
  w.header("EMSV", "BANK", config_hash);
  w.u32(static_cast<std::uint32_t>(bank.detectors.size()));
  for (const auto& v : bank.detectors) {
    w.u32(static_cast<std::uint32_t>(v.latent));
    w.f64(v.lambda);
    io::write_mlp(w, v.encoder);
    io::write_mlp(w, v.decoder);
  }
  w.f64(bank.target_fpr);
  w.u8(bank.calibrated() ? 1 : 0);
  for (double t : bank.thresholds) w.f64(t);
  w.close();
}

DetectorBank load_bank(const std::filesystem::path& path, std::uint64_t* config_hash) {
  io::BinaryReader r(path);
  const std::uint64_t h = r.header("EMSV", "BANK");
  if (config_hash) *config_hash = h;
  DetectorBank bank;
  const std::uint32_t n = r.u32();
  if (n > 4096) throw FormatError("detector bank: implausible class count");
  for (std::uint32_t i = 0; i < n; ++i) {
    Vae v;
    v.latent = r.u32();
    v.lambda = r.f64();
    v.encoder = io::read_mlp(r);
    v.decoder = io::read_mlp(r);
    if (v.encoder.output_dim() != 2 * v.latent || v.decoder.input_dim() != v.latent ||
        v.decoder.output_dim() != v.encoder.input_dim()) {
      throw FormatError("detector bank: inconsistent VAE shapes");
    }
    bank.detectors.push_back(std::move(v));
  }
  bank.target_fpr = r.f64();
  if (r.u8()) {
    for (std::uint32_t i = 0; i < n; ++i) bank.thresholds.push_back(r.f64());
  }
  return bank;
}

void export_verdicts_csv(const std::filesystem::path& path, const std::vector<VerdictRow>& rows,
                         std::uint64_t config_hash) {
  io::CsvWriter w(path);
  w.comment("config_hash=" + io::hex64(config_hash));
  w.row({"sample_id", "pred_label", "loss", "threshold", "decision"});
  for (const auto& r : rows) {
    w.row({std::to_string(r.sample_id), std::to_string(r.verdict.predicted_class),
           io::format_double(r.verdict.loss), io::format_double(r.verdict.threshold),
           r.verdict.decision == Decision::kAdversarial ? "adversarial" : "benign"});
  }
  w.close();
}

}  // namespace emshep::anomaly
