// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "emshep/victim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "emshep/rng.hpp"

namespace emshep::victim {

namespace {

// Class centroids: 0.5 + kPatternScale / sqrt(d) * N(0, 1) per coordinate,
// so centroid distances do not depend on the input dimension.
constexpr double kPatternScale = 0.8;
// Within-class variation: a shared kManifoldRank-dimensional subspace
// (scale kManifoldScale / separation) plus an isotropic residual
// (kResidualScale / separation).  Classes are tight compared with the
// centroid spacing, so a sample's activations, and hence its leakage, are
// largely fixed by its class.
constexpr std::size_t kManifoldRank = 6;
constexpr double kManifoldScale = 0.05;
constexpr double kResidualScale = 0.03;

// Orthonormal d x k basis (column-major) from Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> manifold_basis(std::uint64_t seed, std::size_t dim) {
  const std::size_t k = std::min(kManifoldRank, dim);
  Rng rng = make_rng(seed, stream::kPattern, 0xBA515);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  while (basis.size() < k) {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    for (const auto& b : basis) {
      double proj = 0.0;
      for (std::size_t j = 0; j < dim; ++j) proj += v[j] * b[j];
      for (std::size_t j = 0; j < dim; ++j) v[j] -= proj * b[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

Split split_for(std::size_t i, std::size_t n, double train_frac, double val_frac) {
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * n + 1e-9));
  if (i < n_train) return Split::kTrain;
  if (i < n_train + n_val) return Split::kValidation;
  return Split::kTest;
}

void validate(const DatasetConfig& cfg) {
  if (cfg.n_classes < 2) throw ConfigError("dataset: need at least 2 classes");
  if (cfg.n_per_class < 10) throw ConfigError("dataset: need at least 10 samples per class");
  if (cfg.dim < 4) throw ConfigError("dataset: dimension must be at least 4");
  if (!(cfg.class_separation > 0.0)) throw ConfigError("dataset: class_separation must be > 0");
  if (cfg.train_fraction <= 0.0 || cfg.validation_fraction < 0.0 ||
      cfg.train_fraction + cfg.validation_fraction > 1.0) {
    throw ConfigError("dataset: split fractions must be nonnegative and sum to at most 1");
  }
}

}  // namespace

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

std::vector<double> class_pattern(std::uint64_t seed, std::size_t cls, std::size_t dim) {
  Rng rng = make_rng(seed, stream::kPattern, cls);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = kPatternScale / std::sqrt(static_cast<double>(dim));
  std::vector<double> p(dim);
  for (double& v : p) v = 0.5 + scale * normal(rng);
  return p;
}

SampleSource::SampleSource(const DatasetConfig& cfg)
    : cfg_(cfg) {
  validate(cfg);
  basis_ = manifold_basis(cfg.seed, cfg.dim);
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    patterns_.push_back(class_pattern(cfg.seed, c, cfg.dim));
  }
}

std::vector<double> SampleSource::draw(std::size_t cls, std::uint64_t stream_tag,
                                       std::uint64_t index) const {
  if (cls >= cfg_.n_classes) throw ConfigError("dataset: class index out of range");
  const double along = kManifoldScale / cfg_.class_separation;
  const double residual = kResidualScale / cfg_.class_separation;
  std::normal_distribution<double> normal(0.0, 1.0);
  Rng rng = make_rng(cfg_.seed, stream_tag, index);
  std::vector<double> x = patterns_[cls];
  for (const auto& b : basis_) {
    const double z = along * normal(rng);
    for (std::size_t j = 0; j < cfg_.dim; ++j) x[j] += z * b[j];
  }
  for (double& v : x) v = std::clamp(v + residual * normal(rng), 0.0, 1.0);
  return x;
}

Dataset gen_dataset(const DatasetConfig& cfg) {
  const SampleSource source(cfg);
  Dataset d;
  d.n_classes = cfg.n_classes;
  d.dim = cfg.dim;
  d.train_fraction = cfg.train_fraction;
  d.validation_fraction = cfg.validation_fraction;
  const std::size_t total = cfg.n_classes * cfg.n_per_class;
  d.inputs.reserve(total);
  for (std::size_t i = 0; i < cfg.n_per_class; ++i) {
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      d.inputs.push_back(source.draw(c, stream::kDataset, i * cfg.n_classes + c));
      d.labels.push_back(static_cast<std::uint32_t>(c));
      d.splits.push_back(
          split_for(i, cfg.n_per_class, cfg.train_fraction, cfg.validation_fraction));
    }
  }
  return d;
}

VictimModel make_victim(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ConfigError("victim: need at least one layer");
  std::vector<nn::Activation> acts(layer_sizes.size() - 1, nn::Activation::kRelu);
  acts.back() = nn::Activation::kLinear;
  VictimModel m{nn::Mlp(layer_sizes, acts)};
  Rng rng = make_rng(seed, stream::kVictim);
  m.net.init_uniform(rng);
  return m;
}

std::vector<double> logits(const VictimModel& model, std::span<const double> x) {
  return model.net.forward(x);
}

Prediction predict(const VictimModel& model, std::span<const double> x) {
  Prediction p;
  p.probs = nn::softmax(logits(model, x));
  p.label = nn::argmax(p.probs);
  return p;
}

LayerActivations forward_trace(const VictimModel& model, std::span<const double> x) {
  nn::ForwardCache cache;
  model.net.forward(x, cache);
  return LayerActivations(cache.post.begin() + 1, cache.post.end());
}

double input_gradient(const VictimModel& model, std::span<const double> x,
                      std::size_t label, std::vector<double>& grad) {
  nn::ForwardCache cache;
  model.net.forward(x, cache);
  std::vector<double> g_logits;
  const double loss = nn::cross_entropy(cache.output(), label, &g_logits);
  nn::MlpGrads scratch = model.net.make_grads();
  model.net.backward(cache, g_logits, scratch, &grad);
  return loss;
}

double parameter_gradient(const VictimModel& model, std::span<const double> x,
                          std::size_t label, nn::MlpGrads& grads) {
  nn::ForwardCache cache;
  model.net.forward(x, cache);
  std::vector<double> g_logits;
  const double loss = nn::cross_entropy(cache.output(), label, &g_logits);
  model.net.backward(cache, g_logits, grads);
  return loss;
}

nn::GradCheckResult grad_check_victim(VictimModel& model, std::span<const double> x,
                                      std::size_t label, double step) {
  nn::MlpGrads analytic = model.net.make_grads();
  parameter_gradient(model, x, label, analytic);
  auto loss = [&]() {
    nn::ForwardCache cache;
    model.net.forward(x, cache);
    nn::PiecewiseLoss out;
    out.value = nn::cross_entropy(cache.output(), label);
    nn::append_relu_pattern(model.net, cache, out.pattern);
    return out;
  };
  return nn::check_gradients(model.net.param_blocks(), std::as_const(analytic).blocks(), loss, step);
}

double accuracy(const VictimModel& model, const Dataset& data, Split split) {
  std::size_t n = 0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.splits[i] != split) continue;
    ++n;
    if (predict(model, data.inputs[i]).label == data.labels[i]) ++hit;
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

double mean_loss(const VictimModel& model, const Dataset& data, Split split) {
  std::size_t n = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.splits[i] != split) continue;
    ++n;
    sum += nn::cross_entropy(logits(model, data.inputs[i]), data.labels[i]);
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

VictimModel train_victim(const Dataset& data, const TrainConfig& cfg, TrainReport* report,
                         const Augmenter& augment) {
  if (cfg.epochs == 0) throw ConfigError("train_victim: epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train_victim: learning rate must be > 0");
  if (cfg.batch_size == 0) throw ConfigError("train_victim: batch size must be >= 1");
  if (cfg.layer_sizes.empty() || cfg.layer_sizes.front() != data.dim ||
      cfg.layer_sizes.back() != data.n_classes) {
    throw ConfigError("train_victim: layer sizes do not match the dataset");
  }
  std::vector<std::size_t> order = data.indices(Split::kTrain);
  if (order.empty()) throw ConfigError("train_victim: empty training split");

  VictimModel model = make_victim(cfg.layer_sizes, cfg.seed);
  nn::Sgd opt(cfg.learning_rate, cfg.momentum);
  nn::MlpGrads grads = model.net.make_grads();
  Rng rng = make_rng(cfg.seed, stream::kVictim, 1);
  TrainReport local;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      grads.zero();
      std::size_t count = 0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        parameter_gradient(model, data.inputs[i], data.labels[i], grads);
        ++count;
        if (augment) {
          const std::vector<double> extra = augment(model, data.inputs[i], data.labels[i]);
          parameter_gradient(model, extra, data.labels[i], grads);
          ++count;
        }
      }
      grads.scale(1.0 / static_cast<double>(count));
      opt.step(model.net, grads);
    }
    const double loss = mean_loss(model, data, Split::kTrain);
    if (!std::isfinite(loss) || !model.net.all_finite()) {
      throw NumericError("train_victim: training diverged at epoch " + std::to_string(epoch));
    }
    local.epoch_loss.push_back(loss);
  }
  model.net.round_to_float();
  local.train_accuracy = accuracy(model, data, Split::kTrain);
  local.test_accuracy = accuracy(model, data, Split::kTest);
  if (report) *report = std::move(local);
  return model;
}

void save_victim(const std::filesystem::path& path, const VictimModel& model,
                 std::uint64_t config_hash) {
  io::BinaryWriter w(path);
  w.header("EMSV", "VICT", config_hash);
  io::write_mlp(w, model.net);
  w.close();
}

VictimModel load_victim(const std::filesystem::path& path, std::uint64_t* config_hash) {
  io::BinaryReader r(path);
  const std::uint64_t h = r.header("EMSV", "VICT");
  if (config_hash) *config_hash = h;
  return VictimModel{io::read_mlp(r)};
}

void export_dataset_csv(const std::filesystem::path& path, const Dataset& data,
                        std::uint64_t config_hash) {
  io::CsvWriter w(path);
  w.comment("config_hash=" + io::hex64(config_hash));
  w.comment("split=" + io::format_double(data.train_fraction) + ":" +
            io::format_double(data.validation_fraction));
  std::vector<std::string> header{"label"};
  for (std::size_t j = 0; j < data.dim; ++j) header.push_back("f" + std::to_string(j));
  w.row(header);
  std::vector<std::string> row;
  for (std::size_t i = 0; i < data.size(); ++i) {
    row.clear();
    row.push_back(std::to_string(data.labels[i]));
    for (double v : data.inputs[i]) row.push_back(io::format_double(v));
    w.row(row);
  }
  w.close();
}

Dataset import_dataset_csv(const std::filesystem::path& path, std::size_t n_classes,
                           std::uint64_t* config_hash) {
  const io::CsvTable t = io::read_csv(path);
  Dataset d;
  d.n_classes = n_classes;
  if (t.header.size() < 2 || t.header.front() != "label") {
    throw FormatError("dataset CSV: unexpected header");
  }
  d.dim = t.header.size() - 1;
  bool have_split = false;
  for (const auto& c : t.comments) {
    if (c.rfind("config_hash=", 0) == 0 && config_hash) {
      *config_hash = io::parse_hex64(c.substr(12));
    }
    if (c.rfind("split=", 0) == 0) {
      const auto parts = io::split(c.substr(6), ':');
      if (parts.size() != 2) throw FormatError("dataset CSV: bad split comment");
      d.train_fraction = io::parse_double(parts[0]);
      d.validation_fraction = io::parse_double(parts[1]);
      have_split = true;
    }
  }
  if (!have_split) throw FormatError("dataset CSV: missing split comment");
  if (t.rows.size() % n_classes != 0) throw FormatError("dataset CSV: row count not a multiple of classes");
  const std::size_t per_class = t.rows.size() / n_classes;
  for (const auto& row : t.rows) {
    const long long label = io::parse_int(row[0]);
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      throw FormatError("dataset CSV: label out of range");
    }
    std::vector<double> x(d.dim);
    for (std::size_t j = 0; j < d.dim; ++j) x[j] = io::parse_double(row[1 + j]);
    d.inputs.push_back(std::move(x));
    const std::size_t k = d.labels.size();
    d.labels.push_back(static_cast<std::uint32_t>(label));
    d.splits.push_back(
        split_for(k / n_classes, per_class, d.train_fraction, d.validation_fraction));
  }
  return d;
}

}  // namespace emshep::victim
