// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "emshep/leaksim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "emshep/rng.hpp"

namespace emshep::leaksim {

ExecutionSchedule build_schedule(const victim::VictimModel& model, const ScheduleConfig& cfg) {
  if (model.net.num_layers() == 0) throw ConfigError("build_schedule: empty model");
  if (cfg.samples_per_mac == 0) throw ConfigError("build_schedule: samples_per_mac must be >= 1");
  if (!(cfg.carrier > 0.0 && cfg.carrier < 0.5)) {
    throw ConfigError("build_schedule: carrier must lie in (0, 0.5) cycles/sample");
  }
  ExecutionSchedule s;
  s.carrier = cfg.carrier;
  s.baseline = cfg.baseline;
  for (std::size_t i = 0; i < model.net.num_layers(); ++i) {
    const auto& l = model.net.layer(i);
    SegmentDescriptor d;
    d.samples_per_value = cfg.samples_per_mac * l.in;
    d.values = l.out;
    d.gap = cfg.gap;
    d.act_lo = 0.0;
    d.act_hi = 1.0;
    s.segments.push_back(d);
  }
  return s;
}

void calibrate_quantization(ExecutionSchedule& sched,
                            const std::vector<victim::LayerActivations>& observed) {
  if (observed.empty()) return;
  for (std::size_t m = 0; m < sched.segments.size(); ++m) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& acts : observed) {
      if (acts.size() != sched.segments.size()) {
        throw ShapeError("calibrate_quantization: layer count mismatch");
      }
      for (double v : acts[m]) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (!(hi > lo)) hi = lo + 1.0;
    sched.segments[m].act_lo = lo;
    sched.segments[m].act_hi = hi;
  }
}

void LeakageConfig::validate(const ExecutionSchedule& sched) const {
  if (bits < 1 || bits > 16) throw ConfigError("leakage: quantization bits must be in [1, 16]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("leakage: noise sigma must be >= 0");
  if (!(gain > 0.0)) throw ConfigError("leakage: gain must be > 0");
  for (const auto& s : sched.segments) {
    if (jitter_max >= s.gap) throw ConfigError("leakage: jitter must be shorter than the gap");
  }
}

unsigned hamming_weight(std::uint32_t v, unsigned bits) {
  if (bits == 0 || bits > 32) throw ConfigError("hamming_weight: bits must be in [1, 32]");
  if (bits < 32 && v >= (std::uint32_t{1} << bits)) {
    throw ConfigError("hamming_weight: value does not fit in " + std::to_string(bits) + " bits");
  }
  return static_cast<unsigned>(std::popcount(v));
}

std::uint32_t quantize(double v, double lo, double hi, unsigned bits) {
  const double levels = static_cast<double>((std::uint32_t{1} << bits) - 1);
  const double t = (v - lo) / (hi - lo);
  const double q = std::round(std::clamp(t, 0.0, 1.0) * levels);
  return static_cast<std::uint32_t>(q);
}

Trace synth_trace(const victim::LayerActivations& acts, const ExecutionSchedule& sched,
                  const LeakageConfig& cfg, std::uint64_t sample_id,
                  const Provenance& provenance) {
  cfg.validate(sched);
  if (acts.size() != sched.segments.size()) {
    throw ShapeError("synth_trace: " + std::to_string(acts.size()) + " activation layers for " +
                     std::to_string(sched.segments.size()) + " segments");
  }
  Rng rng = make_rng(cfg.seed, stream::kLeak, sample_id);
  std::uniform_int_distribution<std::size_t> jitter(0, cfg.jitter_max);

  std::vector<std::size_t> pads(sched.segments.size());
  std::size_t total = 0;
  for (std::size_t m = 0; m < sched.segments.size(); ++m) {
    const auto& seg = sched.segments[m];
    if (acts[m].size() != seg.values) throw ShapeError("synth_trace: layer width mismatch");
    pads[m] = jitter(rng);
    total += pads[m] + seg.length() + seg.gap;
  }

  Trace t;
  t.provenance = provenance;
  t.samples.assign(total, 0.0);
  const double omega = 2.0 * std::numbers::pi * sched.carrier;
  const double bits = static_cast<double>(cfg.bits);
  std::size_t pos = 0;
  for (std::size_t m = 0; m < sched.segments.size(); ++m) {
    const auto& seg = sched.segments[m];
    pos += pads[m];
    t.burst_starts.push_back(pos);
    for (double v : acts[m]) {
      const std::uint32_t code = quantize(v, seg.act_lo, seg.act_hi, cfg.bits);
      const double amp = sched.baseline + cfg.gain * hamming_weight(code, cfg.bits) / bits;
      for (std::size_t k = 0; k < seg.samples_per_value; ++k, ++pos) {
        t.samples[pos] = amp * std::sin(omega * static_cast<double>(pos));
      }
    }
    pos += seg.gap;
  }
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, cfg.noise_sigma);
    for (double& s : t.samples) s += normal(rng);
  }
  return t;
}

void write_trace(const std::filesystem::path& path, const Trace& trace) {
  io::BinaryWriter w(path);
  w.bytes("EMSH");
  w.u32(kTraceVersion);
  w.u64(trace.samples.size());
  w.f64(trace.sample_rate);
  w.u32(trace.provenance.input_id);
  w.u32(trace.provenance.true_label);
  w.u32(trace.provenance.predicted_label);
  w.f32_array(trace.samples);
  w.close();
}

Trace read_trace(const std::filesystem::path& path) {
  io::BinaryReader r(path);
  if (r.bytes(4) != "EMSH") throw FormatError("not a trace file: " + path.string());
  if (r.u32() != kTraceVersion) throw FormatError("unsupported trace version: " + path.string());
  const std::uint64_t n = r.u64();
  if (n > (std::uint64_t{1} << 32)) throw FormatError("implausible trace length");
  Trace t;
  t.sample_rate = r.f64();
  t.provenance.input_id = r.u32();
  t.provenance.true_label = r.u32();
  t.provenance.predicted_label = r.u32();
  t.samples = r.f32_array(static_cast<std::size_t>(n));
  return t;
}

void save_schedule(const std::filesystem::path& path, const ExecutionSchedule& sched,
                   std::uint64_t config_hash) {
  io::BinaryWriter w(path);
  w.header("EMSV", "SCHD", config_hash);
  w.f64(sched.carrier);
  w.f64(sched.baseline);
  w.u32(static_cast<std::uint32_t>(sched.segments.size()));
  for (const auto& s : sched.segments) {
    w.u32(static_cast<std::uint32_t>(s.samples_per_value));
    w.u32(static_cast<std::uint32_t>(s.values));
    w.u32(static_cast<std::uint32_t>(s.gap));
    w.f64(s.act_lo);
    w.f64(s.act_hi);
  }
  w.close();
}

ExecutionSchedule load_schedule(const std::filesystem::path& path, std::uint64_t* config_hash) {
  io::BinaryReader r(path);
  const std::uint64_t h = r.header("EMSV", "SCHD");
  if (config_hash) *config_hash = h;
  ExecutionSchedule s;
  s.carrier = r.f64();
  s.baseline = r.f64();
  const std::uint32_t n = r.u32();
  if (n > 1024) throw FormatError("implausible segment count");
  for (std::uint32_t i = 0; i < n; ++i) {
    SegmentDescriptor d;
    d.samples_per_value = r.u32();
    d.values = r.u32();
    d.gap = r.u32();
    d.act_lo = r.f64();
    d.act_hi = r.f64();
    s.segments.push_back(d);
  }
  return s;
}

}  // namespace emshep::leaksim
