// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "internal.hpp"

namespace emshep::pipeline::detail {

std::uint64_t norm_group(attacks::Norm n) {
  switch (n) {
    case attacks::Norm::kL1: return kGroupL1;
    case attacks::Norm::kL2: return kGroupL2;
    case attacks::Norm::kLinf: return kGroupLinf;
    case attacks::Norm::kL0: break;
  }
  throw ConfigError("pipeline: L0 attacks are not supported");
}

std::string norm_tag(attacks::Norm n) {
  switch (n) {
    case attacks::Norm::kL1: return "l1";
    case attacks::Norm::kL2: return "l2";
    case attacks::Norm::kLinf: return "linf";
    case attacks::Norm::kL0: return "l0";
  }
  return "?";
}

const FeatureGroup& FeatureStore::group(std::string_view name) const {
  for (const auto& g : groups)
    if (g.name == name) return g;
  throw FormatError("features: no group '" + std::string(name) + "'");
}

std::size_t FeatureStore::feature_size() const {
  std::size_t n = 0;
  for (const auto& l : layout) n += l.windows * l.bands.size();
  return n;
}

std::vector<traceproc::Spectrogram> FeatureStore::spectrograms(const FeatureRecord& r) const {
  std::vector<traceproc::Spectrogram> out;
  std::size_t off = 0;
  for (const auto& l : layout) {
    traceproc::Spectrogram s;
    s.windows = l.windows;
    s.bins = l.bands.size();
    s.window_size = window;
    s.stride = stride;
    s.bands = l.bands;
    const std::size_t n = s.windows * s.bins;
    s.magnitude.assign(r.values.begin() + static_cast<std::ptrdiff_t>(off),
                       r.values.begin() + static_cast<std::ptrdiff_t>(off + n));
    off += n;
    out.push_back(std::move(s));
  }
  return out;
}

void save_features(const std::filesystem::path& path, const FeatureStore& fs,
                   std::uint64_t config_hash) {
  io::BinaryWriter w(path);
  w.header("EMSV", "FEAT", config_hash);
  w.u32(static_cast<std::uint32_t>(fs.window));
  w.u32(static_cast<std::uint32_t>(fs.stride));
  w.u32(static_cast<std::uint32_t>(fs.layout.size()));
  for (const auto& l : fs.layout) {
    w.u32(static_cast<std::uint32_t>(l.length));
    w.u32(static_cast<std::uint32_t>(l.windows));
    w.u32(static_cast<std::uint32_t>(l.bands.size()));
    for (std::size_t b : l.bands) w.u32(static_cast<std::uint32_t>(b));
  }
  const std::size_t d = fs.feature_size();
  w.u32(static_cast<std::uint32_t>(fs.groups.size()));
  for (const auto& g : fs.groups) {
    w.u32(static_cast<std::uint32_t>(g.name.size()));
    w.bytes(g.name);
    w.u64(g.records.size());
    for (const auto& r : g.records) {
      if (r.values.size() != d) throw ShapeError("features: record size mismatch");
      w.u64(r.id);
      w.u32(r.label);
      w.u32(r.pred);
      w.u8(r.segmented ? 1 : 0);
      w.f32_array(r.values);
    }
  }
  w.close();
}

FeatureStore load_features(const std::filesystem::path& path, std::uint64_t* config_hash) {
  io::BinaryReader r(path);
  const std::uint64_t h = r.header("EMSV", "FEAT");
  if (config_hash) *config_hash = h;
  FeatureStore fs;
  fs.window = r.u32();
  fs.stride = r.u32();
  const std::uint32_t m = r.u32();
  if (m == 0 || m > 1024) throw FormatError("features: implausible segment count");
  for (std::uint32_t i = 0; i < m; ++i) {
    SegmentLayout l;
    l.length = r.u32();
    l.windows = r.u32();
    const std::uint32_t nb = r.u32();
    if (nb > 65536) throw FormatError("features: implausible band count");
    for (std::uint32_t b = 0; b < nb; ++b) l.bands.push_back(r.u32());
    fs.layout.push_back(std::move(l));
  }
  const std::size_t d = fs.feature_size();
  const std::uint32_t ng = r.u32();
  for (std::uint32_t g = 0; g < ng; ++g) {
    FeatureGroup grp;
    grp.name = r.bytes(r.u32());
    const std::uint64_t n = r.u64();
    for (std::uint64_t k = 0; k < n; ++k) {
      FeatureRecord rec;
      rec.id = r.u64();
      rec.label = r.u32();
      rec.pred = r.u32();
      rec.segmented = r.u8() != 0;
      rec.values = r.f32_array(d);
      grp.records.push_back(std::move(rec));
    }
    fs.groups.push_back(std::move(grp));
  }
  return fs;
}

leaksim::LeakageConfig leakage_config(const ExperimentConfig& cfg) {
  leaksim::LeakageConfig lc;
  lc.noise_sigma = cfg.noise_sigma;
  lc.jitter_max = cfg.jitter_max;
  lc.bits = static_cast<unsigned>(cfg.quant_bits);
  lc.gain = cfg.gain;
  lc.seed = cfg.seed;
  return lc;
}

victim::DatasetConfig dataset_config(const ExperimentConfig& cfg) {
  victim::DatasetConfig dc;
  dc.seed = cfg.seed;
  dc.n_classes = cfg.n_classes;
  dc.n_per_class = cfg.n_per_class;
  dc.dim = cfg.dim;
  dc.class_separation = cfg.class_separation;
  dc.train_fraction = cfg.train_fraction;
  dc.validation_fraction = cfg.validation_fraction;
  return dc;
}

victim::TrainConfig victim_train_config(const ExperimentConfig& cfg) {
  victim::TrainConfig tc;
  tc.layer_sizes = cfg.victim_layers;
  tc.learning_rate = cfg.victim_lr;
  tc.momentum = cfg.victim_momentum;
  tc.epochs = cfg.victim_epochs;
  tc.batch_size = cfg.victim_batch;
  tc.seed = cfg.seed;
  return tc;
}

Featurizer::Featurizer(const ExperimentConfig& cfg, const victim::VictimModel& model,
                       const leaksim::ExecutionSchedule& sched)
    : cfg_(cfg), model_(model), sched_(sched), leak_(leakage_config(cfg)) {
  seg_.energy_window = cfg.energy_window;
  seg_.threshold = cfg.segment_threshold;
}

leaksim::Trace Featurizer::trace(std::span<const double> x, std::uint64_t id,
                                 std::uint32_t label) const {
  leaksim::Provenance p;
  p.input_id = static_cast<std::uint32_t>(id);
  p.true_label = label;
  p.predicted_label = static_cast<std::uint32_t>(victim::predict(model_, x).label);
  return leaksim::synth_trace(victim::forward_trace(model_, x), sched_, leak_, id, p);
}

std::vector<traceproc::Segment> Featurizer::segments(std::span<const double> x,
                                                     std::uint64_t id) const {
  const leaksim::Trace t = traceproc::bandpass(trace(x, id, 0), cfg_.carrier, cfg_.bandpass_halfwidth);
  try {
    return traceproc::segment(t, seg_);
  } catch (const SegmentationError&) {
    return {};
  }
}

FeatureRecord Featurizer::featurize(std::span<const double> x, std::uint64_t id,
                                    std::uint32_t label) const {
  if (layout_.empty()) throw PrerequisiteError("featurize: canonical segment layout not set");
  FeatureRecord rec;
  rec.id = id;
  rec.label = label;
  rec.pred = static_cast<std::uint32_t>(victim::predict(model_, x).label);
  std::vector<traceproc::Segment> segs = segments(x, id);
  rec.segmented = segs.size() == layout_.size();
  // A miscounted trace keeps its first M regions; missing ones are silence.
  segs.resize(layout_.size());
  for (std::size_t m = 0; m < layout_.size(); ++m) {
    const std::vector<double> fitted = traceproc::fit_length(segs[m].samples, layout_[m].length);
    const traceproc::Spectrogram s = traceproc::select_bands(
        traceproc::stft(fitted, cfg_.stft_window, cfg_.stft_stride), cfg_.carrier, cfg_.bands);
    // Stored as f32; round here so in-memory and reloaded features agree.
    for (double v : s.magnitude) rec.values.push_back(static_cast<float>(v));
  }
  return rec;
}

void check_hash(std::uint64_t embedded, std::uint64_t expected, const std::string& what) {
  if (embedded != expected) {
    throw ConfigError("config-hash mismatch in " + what + ": artifact " + io::hex64(embedded) +
                      ", expected " + io::hex64(expected));
  }
}

void write_metric_table(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, double>>& rows,
                        std::uint64_t config_hash) {
  io::CsvWriter w(path);
  w.comment("config_hash=" + io::hex64(config_hash));
  w.row({"metric", "value"});
  for (const auto& [k, v] : rows) w.row({k, io::format_double(v)});
  w.close();
}

std::map<std::string, double> read_metric_table(const std::filesystem::path& path) {
  const io::CsvTable t = io::read_csv(path);
  const std::size_t k = t.column("metric");
  const std::size_t v = t.column("value");
  std::map<std::string, double> out;
  for (const auto& row : t.rows) out[row[k]] = io::parse_double(row[v]);
  return out;
}

}  // namespace emshep::pipeline::detail
