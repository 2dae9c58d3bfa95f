// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "emshep/traceproc.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "emshep/kernels/kernels.hpp"
#include "fft.hpp"

namespace emshep::traceproc {

std::vector<double> bandpass(std::span<const double> x, double center, double halfwidth) {
  if (!(halfwidth > 0.0) || !(center - halfwidth > 0.0) || !(center + halfwidth < 0.5)) {
    throw ConfigError("bandpass: band must lie strictly inside (0, 0.5)");
  }
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::vector<std::complex<double>> spec;
  fft::forward_real(x, spec);
  const double lo = center - halfwidth;
  const double hi = center + halfwidth;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(n);
    if (f < lo || f > hi) spec[k] = 0.0;
  }
  std::vector<double> out;
  fft::inverse_real(spec, n, out);
  return out;
}

leaksim::Trace bandpass(const leaksim::Trace& t, double center, double halfwidth) {
  leaksim::Trace out = t;
  out.samples = bandpass(t.samples, center, halfwidth);
  return out;
}

std::vector<double> moving_rms(std::span<const double> x, std::size_t window) {
  if (window == 0) throw ConfigError("moving_rms: window must be >= 1");
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  std::vector<double> out(n);
  const std::size_t half = window / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i >= half ? i - half : 0;
    const std::size_t b = std::min(n, a + window);
    const double e = std::max(prefix[b] - prefix[a], 0.0);
    out[i] = std::sqrt(e / static_cast<double>(b - a));
  }
  return out;
}

std::vector<Segment> segment(const leaksim::Trace& t, const SegmentConfig& cfg) {
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) {
    throw ConfigError("segment: threshold fraction must be in (0, 1)");
  }
  const std::vector<double> rms = moving_rms(t.samples, cfg.energy_window);
  const double peak = rms.empty() ? 0.0 : *std::max_element(rms.begin(), rms.end());
  if (!(peak > 0.0)) throw SegmentationError("segment: trace has no energy");
  const double thr = cfg.threshold * peak;
  const std::size_t min_len = cfg.min_length ? cfg.min_length : cfg.energy_window;
  std::vector<Segment> out;
  std::size_t i = 0;
  while (i < rms.size()) {
    if (rms[i] < thr) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < rms.size() && rms[j] >= thr) ++j;
    if (j - i < min_len) {
      i = j;
      continue;
    }
    Segment s;
    s.index = out.size();
    s.start = i;
    s.samples.assign(t.samples.begin() + static_cast<std::ptrdiff_t>(i),
                     t.samples.begin() + static_cast<std::ptrdiff_t>(j));
    s.provenance = t.provenance;
    out.push_back(std::move(s));
    i = j;
  }
  if (out.empty()) throw SegmentationError("segment: no region exceeds the threshold");
  return out;
}

std::vector<double> fit_length(std::span<const double> x, std::size_t n) {
  std::vector<double> out(n, 0.0);
  std::copy_n(x.begin(), std::min(n, x.size()), out.begin());
  return out;
}

std::vector<double> hanning(std::size_t n) {
  if (n < 2) throw ConfigError("hanning: length must be >= 2");
  std::vector<double> w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / denom));
  }
  return w;
}

std::size_t stft_windows(std::size_t length, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ConfigError("stft: window and stride must be >= 1");
  if (length < window) {
    throw ShapeError("stft: segment of " + std::to_string(length) +
                     " samples is shorter than one window (" + std::to_string(window) + ")");
  }
  return (length - window) / stride + 1;
}

Spectrogram stft(std::span<const double> x, std::size_t window, std::size_t stride) {
  const std::vector<double> w = hanning(window);
  return stft(x, window, stride, w);
}

Spectrogram stft(std::span<const double> x, std::size_t window, std::size_t stride,
                 std::span<const double> taper) {
  if (taper.size() != window) throw ShapeError("stft: taper length != window");
  Spectrogram s;
  s.windows = stft_windows(x.size(), window, stride);
  s.bins = window / 2 + 1;
  s.window_size = window;
  s.stride = stride;
  s.magnitude.resize(s.windows * s.bins);
  s.bands.resize(s.bins);
  for (std::size_t f = 0; f < s.bins; ++f) s.bands[f] = f;

  const auto& k = kernels::active();
  std::vector<double> slice(window);
  std::vector<std::complex<double>> spec;
  for (std::size_t t = 0; t < s.windows; ++t) {
    k.mul(x.data() + t * stride, taper.data(), slice.data(), window);
    fft::forward_real(slice, spec);
    k.complex_abs(reinterpret_cast<const double*>(spec.data()), s.magnitude.data() + t * s.bins,
                  s.bins);
  }
  return s;
}

Spectrogram select_bands(const Spectrogram& s, double carrier, std::size_t n_bands) {
  if (n_bands == 0 || n_bands > s.bins) {
    throw ConfigError("select_bands: band count must be in [1, " + std::to_string(s.bins) + "]");
  }
  const long center = std::lround(carrier * static_cast<double>(s.window_size));
  long lo = center - static_cast<long>(n_bands / 2);
  lo = std::clamp(lo, 0L, static_cast<long>(s.bins - n_bands));
  const std::size_t first = static_cast<std::size_t>(lo);

  Spectrogram out;
  out.windows = s.windows;
  out.bins = n_bands;
  out.window_size = s.window_size;
  out.stride = s.stride;
  out.magnitude.resize(out.windows * n_bands);
  for (std::size_t t = 0; t < s.windows; ++t) {
    for (std::size_t f = 0; f < n_bands; ++f) {
      out.magnitude[t * n_bands + f] = s.magnitude[t * s.bins + first + f];
    }
  }
  for (std::size_t f = 0; f < n_bands; ++f) out.bands.push_back(s.bands[first + f]);
  return out;
}

void export_spectrogram_csv(const std::filesystem::path& path, const Spectrogram& s) {
  io::CsvWriter w(path);
  std::string bands;
  for (std::size_t i = 0; i < s.bands.size(); ++i) {
    if (i) bands += ';';
    bands += std::to_string(s.bands[i]);
  }
  w.comment("window=" + std::to_string(s.window_size) + ",stride=" + std::to_string(s.stride) +
            ",bands=" + bands);
  std::vector<std::string> header;
  for (std::size_t b : s.bands) header.push_back("bin" + std::to_string(b));
  w.row(header);
  std::vector<std::string> row(s.bins);
  for (std::size_t t = 0; t < s.windows; ++t) {
    for (std::size_t f = 0; f < s.bins; ++f) row[f] = io::format_double(s.at(t, f));
    w.row(row);
  }
  w.close();
}

}  // namespace emshep::traceproc
