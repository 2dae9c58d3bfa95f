// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "emshep/traceproc.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace emshep;
namespace tp = emshep::traceproc;

namespace {

// Carrier bursts of `len` samples starting at `starts`, silence elsewhere.
leaksim::Trace bursts(std::size_t n, const std::vector<std::size_t>& starts, std::size_t len,
                      double carrier = 0.15) {
  leaksim::Trace t;
  t.samples.assign(n, 0.0);
  for (std::size_t s : starts)
    for (std::size_t k = s; k < s + len; ++k)
      t.samples[k] = std::sin(2 * std::numbers::pi * carrier * static_cast<double>(k));
  return t;
}

}  // namespace

TEST_CASE("bandpass keeps in-band tones and removes out-of-band ones") {
  // Both tones sit on exact DFT bins.
  const std::size_t n = 1000;
  const auto in = oracle::tone(n, 0.15);
  const auto out = tp::bandpass(in, 0.15, 0.04);
  REQUIRE(out.size() == n);
  CHECK(oracle::dft_power(out) >= 0.99 * oracle::dft_power(in));

  const auto far = oracle::tone(n, 0.30);
  CHECK(oracle::dft_power(tp::bandpass(far, 0.15, 0.04)) <= 1e-6 * oracle::dft_power(far));

  const std::vector<double> zero(n, 0.0);
  for (double v : tp::bandpass(zero, 0.15, 0.04)) CHECK(v == 0.0);

  CHECK_THROWS_AS(tp::bandpass(in, 0.02, 0.04), ConfigError);
  CHECK_THROWS_AS(tp::bandpass(in, 0.48, 0.04), ConfigError);
}

TEST_CASE("segment finds bursts at their known offsets") {
  const std::vector<std::size_t> starts{300, 2000, 3500};
  const std::size_t len = 800;
  const auto t = bursts(5000, starts, len);
  tp::SegmentConfig cfg;
  const auto segs = tp::segment(t, cfg);
  REQUIRE(segs.size() == 3);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(segs[m].index == m);
    CHECK(std::abs(static_cast<long>(segs[m].start) - static_cast<long>(starts[m])) <= 64);
    const long end = static_cast<long>(segs[m].start + segs[m].samples.size());
    CHECK(std::abs(end - static_cast<long>(starts[m] + len)) <= 64);
  }
  // Identical trace, identical boundaries.
  const auto again = tp::segment(t, cfg);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(again[m].start == segs[m].start);
    CHECK(again[m].samples == segs[m].samples);
  }
}

TEST_CASE("segment errors") {
  leaksim::Trace silent;
  silent.samples.assign(1000, 0.0);
  CHECK_THROWS_AS(tp::segment(silent, {}), SegmentationError);
  tp::SegmentConfig bad;
  bad.threshold = 1.0;
  CHECK_THROWS_AS(tp::segment(bursts(1000, {100}, 200), bad), ConfigError);
}

TEST_CASE("hanning window") {
  for (std::size_t n : {2u, 5u, 64u, 257u}) {
    const auto w = tp::hanning(n);
    CHECK(w.front() == doctest::Approx(0.0));
    CHECK(std::abs(w.back()) < 1e-15);
    for (std::size_t k = 0; k < n; ++k) CHECK(w[k] == doctest::Approx(w[n - 1 - k]).epsilon(1e-12));
    if (n % 2) CHECK(w[n / 2] == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(tp::hanning(1), ConfigError);
}

TEST_CASE("stft matches a direct DFT on 50 random segments") {
  std::mt19937_64 g(41);
  std::uniform_int_distribution<std::size_t> len(300, 900);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const auto x = oracle::uniform_vec(g, len(g), -1, 1);
    const std::size_t window = (i % 2) ? 128 : 100;
    const std::size_t stride = window / 2;
    const auto s = tp::stft(x, window, stride);
    REQUIRE(s.windows == (x.size() - window) / stride + 1);
    REQUIRE(s.bins == window / 2 + 1);
    const auto w = tp::hanning(window);
    for (std::size_t t = 0; t < s.windows; ++t) {
      std::vector<double> slice(window);
      for (std::size_t k = 0; k < window; ++k) slice[k] = x[t * stride + k] * w[k];
      const auto ref = oracle::dft_magnitude(slice);
      for (std::size_t f = 0; f < s.bins; ++f) {
        const double denom = std::max(std::abs(ref[f]), 1e-12);
        worst = std::max(worst, std::abs(s.at(t, f) - ref[f]) / denom);
      }
    }
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst <= 1e-6);
}

TEST_CASE("stft: zero input, short input, Parseval with a rectangular window") {
  const std::vector<double> zero(600, 0.0);
  for (double v : tp::stft(zero, 256, 128).magnitude) CHECK(v == 0.0);
  CHECK_THROWS_AS(tp::stft(std::vector<double>(100, 1.0), 256, 128), ShapeError);

  std::mt19937_64 g(42);
  const std::size_t window = 64;
  const auto x = oracle::uniform_vec(g, 640, -1, 1);
  const std::vector<double> rect(window, 1.0);
  const auto s = tp::stft(x, window, 32, rect);
  for (std::size_t t = 0; t < s.windows; ++t) {
    // Rebuild the two-sided power from the one-sided magnitudes.
    double spec = 0;
    for (std::size_t f = 0; f < s.bins; ++f) {
      const double p = s.at(t, f) * s.at(t, f);
      spec += (f == 0 || f == window / 2) ? p : 2 * p;
    }
    double time = 0;
    for (std::size_t k = 0; k < window; ++k) time += x[t * 32 + k] * x[t * 32 + k];
    CHECK(std::abs(spec / static_cast<double>(window) - time) <= 1e-9 * std::max(1.0, time));
  }
}

TEST_CASE("select_bands") {
  const auto x = oracle::tone(2048, 0.15);
  const auto s = tp::stft(x, 256, 128);
  const auto full = tp::select_bands(s, 0.15, s.bins);
  CHECK(full.magnitude == s.magnitude);
  CHECK(full.bands == s.bands);

  const auto sel = tp::select_bands(s, 0.15, 15);
  REQUIRE(sel.bins == 15);
  CHECK(sel.windows == s.windows);
  CHECK(sel.bands[7] == static_cast<std::size_t>(std::lround(0.15 * 256)));
  double e_sel = 0, e_full = 0;
  for (double v : sel.magnitude) e_sel += v * v;
  for (double v : s.magnitude) e_full += v * v;
  CHECK(e_sel >= 0.99 * e_full);

  // Clamped at the spectrum edge.
  const auto edge = tp::select_bands(s, 0.001, 15);
  CHECK(edge.bands.front() == 0);
  CHECK_THROWS_AS(tp::select_bands(s, 0.15, s.bins + 1), ConfigError);
}

TEST_CASE("shifting a burst by up to stride/2 changes spectrogram columns by at most 20% RMS") {
  const std::size_t window = 256, stride = 128;
  const auto base = bursts(4096, {0}, 4096);
  const auto ref = tp::select_bands(tp::stft(base.samples, window, stride), 0.15, 15);
  for (std::size_t shift : {1u, 7u, 32u, 64u}) {
    const std::span<const double> seg(base.samples.data() + shift, 4096 - 64);
    const auto moved = tp::select_bands(tp::stft(seg, window, stride), 0.15, 15);
    for (std::size_t t = 0; t < moved.windows; ++t) {
      double num = 0, den = 0;
      for (std::size_t f = 0; f < 15; ++f) {
        num += std::pow(moved.at(t, f) - ref.at(t, f), 2);
        den += std::pow(ref.at(t, f), 2);
      }
      CHECK(std::sqrt(num / den) <= 0.20);
    }
  }
}

TEST_CASE("fit_length and spectrogram CSV") {
  const std::vector<double> x{1, 2, 3};
  CHECK(tp::fit_length(x, 2) == std::vector<double>{1, 2});
  CHECK(tp::fit_length(x, 5) == std::vector<double>{1, 2, 3, 0, 0});

  const auto s = tp::select_bands(tp::stft(oracle::tone(1024, 0.15), 256, 128), 0.15, 3);
  const test::TempDir dir;
  tp::export_spectrogram_csv(dir.path() / "s.csv", s);
  const auto t = io::read_csv(dir.path() / "s.csv");
  REQUIRE(t.comments.size() == 1);
  CHECK(t.comments[0].find("window=256,stride=128,bands=") != std::string::npos);
  CHECK(t.rows.size() == s.windows);
  CHECK(t.header.size() == 3);
}
