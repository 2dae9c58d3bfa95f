// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "emshep/anomaly.hpp"
#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace emshep;
namespace an = emshep::anomaly;

namespace {

constexpr std::size_t kDim = 30;

// Benign-looking vectors: a 3-dimensional structure plus small noise.
std::vector<std::vector<double>> cluster(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::mt19937_64 fixed(99);
  const auto center = oracle::uniform_vec(fixed, kDim, -3, 3);
  std::vector<std::vector<double>> basis;
  for (int k = 0; k < 3; ++k) basis.push_back(oracle::uniform_vec(fixed, kDim, -1, 1));
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto x = center;
    for (const auto& b : basis) {
      const double a = z(g);
      for (std::size_t j = 0; j < kDim; ++j) x[j] += a * b[j];
    }
    for (double& v : x) v += 0.05 * z(g);
    out.push_back(std::move(x));
  }
  return out;
}

an::VaeConfig quick() {
  an::VaeConfig c;
  c.epochs = 40;
  return c;
}

double kl_oracle(const std::vector<double>& mu, const std::vector<double>& lv) {
  double s = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double term = 1.0 + lv[i] - mu[i] * mu[i] - std::exp(lv[i]);
    s += term;
  }
  return -0.5 * s;
}

}  // namespace

TEST_CASE("KL closed forms and non-negativity") {
  const std::vector<double> zero(6, 0.0);
  CHECK(an::kl_divergence(zero, zero) == 0.0);

  std::mt19937_64 g(61);
  std::uniform_real_distribution<double> mu(-5, 5), lv(-8, 4);
  double worst = 0;
  for (int i = 0; i < 100000; ++i) {
    const std::vector<double> m{mu(g)}, l{lv(g)};
    const double k = an::kl_divergence(m, l);
    REQUIRE(k >= 0.0);
    worst = std::max(worst, std::abs(k - kl_oracle(m, l)));
  }
  CHECK(worst <= 1e-9);

  const auto m6 = oracle::uniform_vec(g, 6, -2, 2);
  const auto l6 = oracle::uniform_vec(g, 6, -2, 2);
  CHECK(std::abs(an::kl_divergence(m6, l6) - kl_oracle(m6, l6)) <= 1e-9);
  CHECK_THROWS_AS(an::kl_divergence(m6, std::vector<double>(3, 0.0)), ShapeError);
}

TEST_CASE("vae_loss: perfect reconstruction and unit posterior") {
  an::Vae v = an::make_vae(kDim, {});
  v.encoder.set_zero();  // mu = 0, log-variance = 0
  v.decoder.set_zero();
  std::mt19937_64 g(62);
  const auto x = oracle::uniform_vec(g, kDim, -1, 1);
  v.decoder.layer(v.decoder.num_layers() - 1).b = x;
  const auto l = an::vae_loss(v, x);
  CHECK(l.recon == 0.0);
  CHECK(l.kl == 0.0);
  CHECK(l.total == 0.0);

  const auto y = oracle::uniform_vec(g, kDim, -1, 1);
  const auto ly = an::vae_loss(v, y);
  double mse = 0;
  for (std::size_t j = 0; j < kDim; ++j) mse += (x[j] - y[j]) * (x[j] - y[j]);
  CHECK(ly.recon == doctest::Approx(mse / kDim));
  CHECK_THROWS_AS(an::vae_loss(v, std::vector<double>(3)), ShapeError);
}

TEST_CASE("vae layout") {
  const an::Vae v = an::make_vae(kDim, {});
  CHECK(v.encoder.num_layers() == 4);
  CHECK(v.decoder.num_layers() == 4);
  CHECK(v.encoder.dims() == std::vector<std::size_t>{kDim, 64, 32, 16, 12});
  CHECK(v.decoder.dims() == std::vector<std::size_t>{6, 16, 32, 64, kDim});
}

TEST_CASE("vae gradients match central differences") {
  std::mt19937_64 g(63);
  for (std::uint64_t i = 0; i < 10; ++i) {
    an::VaeConfig cfg;
    cfg.seed = 200 + i;
    an::Vae v = an::make_vae(kDim, cfg);
    const auto x = oracle::uniform_vec(g, kDim, -3, 3);
    const auto r = an::grad_check_vae(v, x);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("train_vae: loss falls, deterministic, degenerate data") {
  const auto data = cluster(1, 200);
  an::VaeTrainReport rep;
  const an::Vae a = an::train_vae(data, quick(), 0, &rep);
  const an::Vae b = an::train_vae(data, quick(), 0);
  CHECK(a.encoder == b.encoder);
  CHECK(a.decoder == b.decoder);
  REQUIRE(rep.epoch_loss.size() == 40);
  CHECK(rep.epoch_loss.back() <= 0.9 * rep.epoch_loss.front());

  const std::vector<std::vector<double>> same(64, data[0]);
  an::VaeConfig cfg;
  cfg.epochs = 300;
  const an::Vae d = an::train_vae(same, cfg, 1);
  CHECK(an::vae_loss(d, data[0]).recon < 1e-3);

  CHECK_THROWS_AS(an::train_vae(cluster(2, 49), quick()), ConfigError);
}

TEST_CASE("fit_threshold") {
  std::vector<double> l(100);
  for (int i = 0; i < 100; ++i) l[i] = 100 - i;  // order must not matter
  CHECK(an::fit_threshold(l, 0.1) == doctest::Approx(90.1));
  CHECK(an::fit_threshold(l, 0.5) == doctest::Approx(50.5));
  CHECK(an::fit_threshold(std::vector<double>(30, 2.5), 0.1) == 2.5);
  CHECK_THROWS_AS(an::fit_threshold(std::vector<double>(19, 1.0), 0.1), ConfigError);
  CHECK_THROWS_AS(an::fit_threshold(l, 0.6), ConfigError);
}

TEST_CASE("detect: strict threshold and routing") {
  an::DetectorBank bank;
  for (std::uint64_t c = 0; c < 3; ++c) bank.detectors.push_back(an::make_vae(kDim, {}, c));
  std::mt19937_64 g(64);
  const auto x = oracle::uniform_vec(g, kDim, -1, 1);
  CHECK_THROWS_AS(an::detect(bank, x, 0), PrerequisiteError);

  const double l0 = an::score(bank, x, 0);
  bank.thresholds = {l0, l0 * 2, l0 / 2};
  auto v = an::detect(bank, x, 0);
  CHECK(v.loss == l0);
  CHECK(v.decision == an::Decision::kBenign);  // equal is benign
  bank.thresholds[0] = std::nextafter(l0, 0.0);
  CHECK(an::detect(bank, x, 0).decision == an::Decision::kAdversarial);
  bank.thresholds[0] = l0 * 1.5;
  CHECK(an::detect(bank, x, 0).decision == an::Decision::kBenign);

  // Routing picks a detector and its threshold; scores never depend on it.
  for (std::size_t n = 0; n < 3; ++n) {
    v = an::detect(bank, x, n);
    CHECK(v.predicted_class == n);
    CHECK(v.threshold == bank.thresholds[n]);
    CHECK(v.loss == an::score(bank, x, n));
    CHECK(v.decision == (v.loss > v.threshold ? an::Decision::kAdversarial : an::Decision::kBenign));
  }
  CHECK_THROWS_AS(an::detect(bank, x, 3), ConfigError);
}

TEST_CASE("bank round-trip and verdict CSV") {
  an::DetectorBank bank;
  const auto data = cluster(3, 60);
  an::VaeConfig cfg = quick();
  cfg.epochs = 2;
  for (std::uint64_t c = 0; c < 2; ++c) bank.detectors.push_back(an::train_vae(data, cfg, c));
  const test::TempDir dir;
  an::save_bank(dir.path() / "u.bin", bank, 3);
  CHECK_FALSE(an::load_bank(dir.path() / "u.bin").calibrated());

  bank.thresholds = {0.5, 0.25};
  an::save_bank(dir.path() / "b.bin", bank, 4);
  std::uint64_t h = 0;
  const auto back = an::load_bank(dir.path() / "b.bin", &h);
  CHECK(h == 4);
  CHECK(back.thresholds == bank.thresholds);
  for (std::size_t c = 0; c < 2; ++c) CHECK(an::score(back, data[5], c) == an::score(bank, data[5], c));

  std::vector<an::VerdictRow> rows{{7, an::detect(bank, data[0], 1)}};
  an::export_verdicts_csv(dir.path() / "v.csv", rows, 4);
  const auto t = io::read_csv(dir.path() / "v.csv");
  CHECK(t.header == std::vector<std::string>{"sample_id", "pred_label", "loss", "threshold", "decision"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "7");
  CHECK(t.rows[0][1] == "1");
  CHECK((t.rows[0][4] == "benign" || t.rows[0][4] == "adversarial"));
}
