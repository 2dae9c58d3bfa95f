// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic EM trace for one victim inference.
//
// Every leaked activation is quantized, and the Hamming weight of the code
// sets the amplitude of a carrier burst.  Each compute layer becomes one
// contiguous burst whose length is proportional to the layer's
// multiply-accumulate count; bursts are separated by silent gaps and
// preceded by a random jitter pad.  White Gaussian noise is added last.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "emshep/victim.hpp"

namespace emshep::leaksim {

struct SegmentDescriptor {
  std::size_t samples_per_value = 0;  // burst samples per leaked activation
  std::size_t values = 0;             // activations leaked by this layer
  std::size_t gap = 0;                // silence after the burst
  double act_lo = 0.0;                // quantization range
  double act_hi = 1.0;

  std::size_t length() const { return samples_per_value * values; }
};

struct ExecutionSchedule {
  std::vector<SegmentDescriptor> segments;
  double carrier = 0.15;  // cycles per sample
  double baseline = 1.0;  // burst amplitude at Hamming weight 0

  std::size_t num_segments() const { return segments.size(); }
};

struct ScheduleConfig {
  std::size_t samples_per_mac = 2;
  std::size_t gap = 256;
  double carrier = 0.15;
  double baseline = 1.0;
};

// Layer m leaks its fan_out activations, each for samples_per_mac * fan_in
// samples, so the burst length is samples_per_mac * fan_in * fan_out.
ExecutionSchedule build_schedule(const victim::VictimModel& model, const ScheduleConfig& cfg);

// Sets each layer's quantization range to the observed [min, max] over the
// given activations (uniform 8-bit style quantization of the layer output).
void calibrate_quantization(ExecutionSchedule& sched,
                            const std::vector<victim::LayerActivations>& observed);

struct LeakageConfig {
  double noise_sigma = 0.25;
  std::size_t jitter_max = 32;
  unsigned bits = 8;
  double gain = 1.0;
  std::uint64_t seed = 7;

  void validate(const ExecutionSchedule& sched) const;
};

struct Provenance {
  std::uint32_t input_id = 0;
  std::uint32_t true_label = 0;
  std::uint32_t predicted_label = 0;
};

struct Trace {
  std::vector<double> samples;
  double sample_rate = 1.0;
  Provenance provenance;
  // Simulator ground truth (burst start per segment); not persisted.
  std::vector<std::size_t> burst_starts;
};

unsigned hamming_weight(std::uint32_t v, unsigned bits);

// Uniform code in [0, 2^bits - 1] for v over [lo, hi], clamped.
std::uint32_t quantize(double v, double lo, double hi, unsigned bits);

// Deterministic in (cfg.seed, sample_id).
Trace synth_trace(const victim::LayerActivations& acts, const ExecutionSchedule& sched,
                  const LeakageConfig& cfg, std::uint64_t sample_id,
                  const Provenance& provenance = {});

// Trace file:
//   char[4] "EMSH" | u32 version | u64 sample count | f64 sample rate |
//   u32 input id | u32 true label | u32 predicted label | f32 samples[]
inline constexpr std::uint32_t kTraceVersion = 1;
void write_trace(const std::filesystem::path& path, const Trace& trace);
Trace read_trace(const std::filesystem::path& path);

void save_schedule(const std::filesystem::path& path, const ExecutionSchedule& sched,
                   std::uint64_t config_hash);
ExecutionSchedule load_schedule(const std::filesystem::path& path,
                                std::uint64_t* config_hash = nullptr);

}  // namespace emshep::leaksim
