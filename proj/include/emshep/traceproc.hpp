// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Trace processing: band-pass, burst segmentation, STFT, band selection.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "emshep/leaksim.hpp"

namespace emshep::traceproc {

// DFT mask filter keeping |f| in [center - halfwidth, center + halfwidth].
std::vector<double> bandpass(std::span<const double> x, double center, double halfwidth);
leaksim::Trace bandpass(const leaksim::Trace& t, double center, double halfwidth);

struct Segment {
  std::vector<double> samples;
  std::size_t index = 0;  // m
  std::size_t start = 0;  // offset in the parent trace
  leaksim::Provenance provenance;
};

struct SegmentConfig {
  std::size_t energy_window = 64;
  double threshold = 0.25;  // fraction of the global max RMS
  // Regions shorter than this are threshold flicker, not bursts; 0 means
  // energy_window.
  std::size_t min_length = 0;
};

// Centered moving RMS; windows are truncated at the trace edges.
std::vector<double> moving_rms(std::span<const double> x, std::size_t window);

// Throws SegmentationError if nothing crosses the threshold.
std::vector<Segment> segment(const leaksim::Trace& t, const SegmentConfig& cfg);

// Crops or zero-pads to exactly n samples, keeping the start aligned.
std::vector<double> fit_length(std::span<const double> x, std::size_t n);

std::vector<double> hanning(std::size_t n);

struct Spectrogram {
  std::size_t windows = 0;        // time
  std::size_t bins = 0;           // frequency
  std::vector<double> magnitude;  // windows x bins, row-major
  std::size_t window_size = 0;
  std::size_t stride = 0;
  std::vector<std::size_t> bands;  // DFT bin index of each column

  double at(std::size_t t, std::size_t f) const { return magnitude[t * bins + f]; }
};

std::size_t stft_windows(std::size_t length, std::size_t window, std::size_t stride);

// Hann-windowed STFT; the overload takes an explicit taper of length `window`.
Spectrogram stft(std::span<const double> x, std::size_t window, std::size_t stride);
Spectrogram stft(std::span<const double> x, std::size_t window, std::size_t stride,
                 std::span<const double> taper);

// Keeps n_bands consecutive bins centered on the carrier's bin, clamped
// inside the spectrum.
Spectrogram select_bands(const Spectrogram& s, double carrier, std::size_t n_bands);

// # window=..,stride=..,bands=i;j;..  then one row per time window.
void export_spectrogram_csv(const std::filesystem::path& path, const Spectrogram& s);

}  // namespace emshep::traceproc
