// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "emshep/emclf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "emshep/rng.hpp"

namespace emshep::emclf {

namespace {

void check_shape(const EmClassifier& clf, const traceproc::Spectrogram& s) {
  if (s.windows != clf.windows || s.bins != clf.bands) {
    throw ShapeError("emclf: spectrogram " + std::to_string(s.windows) + "x" +
                     std::to_string(s.bins) + " does not match classifier input " +
                     std::to_string(clf.windows) + "x" + std::to_string(clf.bands));
  }
}

std::vector<double> normalize(const EmClassifier& clf, std::vector<double> x) {
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - clf.mean[j]) / clf.stddev[j];
  return x;
}

}  // namespace

std::vector<double> log_features(const traceproc::Spectrogram& s) {
  std::vector<double> x(s.magnitude.size());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::log(s.magnitude[j] + kLogFloor);
  return x;
}

std::vector<double> features(const EmClassifier& clf, const traceproc::Spectrogram& s) {
  check_shape(clf, s);
  return normalize(clf, log_features(s));
}

EmClassifier make_classifier(std::size_t segment, std::size_t windows, std::size_t bands,
                             std::size_t n_classes, const ClassifierConfig& cfg) {
  if (windows == 0 || bands == 0) throw ShapeError("emclf: empty input shape");
  if (n_classes < 2) throw ConfigError("emclf: need at least 2 classes");
  if (cfg.hidden == 0) throw ConfigError("emclf: hidden width must be >= 1");
  EmClassifier c;
  c.segment = segment;
  c.windows = windows;
  c.bands = bands;
  c.mean.assign(windows * bands, 0.0);
  c.stddev.assign(windows * bands, 1.0);
  c.net = nn::Mlp({windows * bands, cfg.hidden, n_classes},
                  {nn::Activation::kRelu, nn::Activation::kLinear});
  Rng rng = make_rng(cfg.seed, stream::kClassifier, segment);
  c.net.init_uniform(rng);
  return c;
}

double parameter_gradient(const EmClassifier& clf, std::span<const double> x,
                          std::size_t label, nn::MlpGrads& grads) {
  nn::ForwardCache cache;
  clf.net.forward(x, cache);
  std::vector<double> g;
  const double loss = nn::cross_entropy(cache.output(), label, &g);
  clf.net.backward(cache, g, grads);
  return loss;
}

EmClassifier train_classifier(std::size_t segment,
                              const std::vector<traceproc::Spectrogram>& train,
                              std::span<const std::size_t> train_labels,
                              const std::vector<traceproc::Spectrogram>& validation,
                              std::span<const std::size_t> validation_labels,
                              std::size_t n_classes, const ClassifierConfig& cfg,
                              TrainResult* result) {
  if (train.empty()) throw ConfigError("emclf: empty training set");
  if (train.size() != train_labels.size() || validation.size() != validation_labels.size()) {
    throw ShapeError("emclf: spectrogram and label counts differ");
  }
  if (cfg.epochs == 0) throw ConfigError("emclf: epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("emclf: learning rate must be > 0");
  if (cfg.batch_size == 0) throw ConfigError("emclf: batch size must be >= 1");
  for (std::size_t y : train_labels)
    if (y >= n_classes) throw ConfigError("emclf: label out of range");

  EmClassifier clf = make_classifier(segment, train.front().windows, train.front().bins,
                                     n_classes, cfg);
  const std::size_t dim = clf.input_dim();

  // Log features and per-feature standardization from the training split.
  std::vector<std::vector<double>> xs;
  xs.reserve(train.size());
  for (const auto& s : train) {
    check_shape(clf, s);
    xs.push_back(log_features(s));
  }
  std::vector<double> mean(dim, 0.0);
  std::vector<double> var(dim, 0.0);
  for (const auto& x : xs)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += x[j];
  for (double& m : mean) m /= static_cast<double>(xs.size());
  for (const auto& x : xs)
    for (std::size_t j = 0; j < dim; ++j) var[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
  for (std::size_t j = 0; j < dim; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(xs.size()));
    clf.mean[j] = static_cast<double>(static_cast<float>(mean[j]));
    clf.stddev[j] = static_cast<double>(static_cast<float>(sd > 1e-6 ? sd : 1.0));
  }
  for (auto& x : xs) x = normalize(clf, std::move(x));

  nn::Sgd opt(cfg.learning_rate, cfg.momentum);
  nn::MlpGrads grads = clf.net.make_grads();
  Rng rng = make_rng(cfg.seed, stream::kClassifier, 0x5000 + segment);
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult local;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      grads.zero();
      for (std::size_t k = start; k < end; ++k) {
        total += parameter_gradient(clf, xs[order[k]], train_labels[order[k]], grads);
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      opt.step(clf.net, grads);
    }
    const double loss = total / static_cast<double>(xs.size());
    if (!std::isfinite(loss) || !clf.net.all_finite()) {
      throw NumericError("emclf: training diverged at epoch " + std::to_string(epoch) +
                         " (segment " + std::to_string(segment) + ")");
    }
    local.epoch_loss.push_back(loss);
  }
  clf.net.round_to_float();
  if (!validation.empty()) {
    local.validation = per_class_report(clf, validation, validation_labels);
    local.validation_accuracy = local.validation.accuracy;
  }
  if (result) *result = std::move(local);
  return clf;
}

std::vector<double> classify_features(const EmClassifier& clf, std::span<const double> x) {
  if (x.size() != clf.input_dim()) throw ShapeError("emclf: feature length mismatch");
  return clf.net.forward(x);
}

std::vector<double> classify(const EmClassifier& clf, std::size_t segment,
                             const traceproc::Spectrogram& s) {
  if (segment != clf.segment) {
    throw ShapeError("emclf: classifier for segment " + std::to_string(clf.segment) +
                     " given segment " + std::to_string(segment));
  }
  return classify_features(clf, features(clf, s));
}

std::vector<double> concat_logits(const std::vector<std::vector<double>>& per_segment,
                                  std::size_t n_segments, std::size_t n_classes) {
  if (per_segment.size() != n_segments) {
    throw ShapeError("concat_logits: expected " + std::to_string(n_segments) +
                     " segments, got " + std::to_string(per_segment.size()));
  }
  std::vector<double> out;
  out.reserve(n_segments * n_classes);
  for (const auto& l : per_segment) {
    if (l.size() != n_classes) throw ShapeError("concat_logits: logits length != N");
    out.insert(out.end(), l.begin(), l.end());
  }
  return out;
}

nn::GradCheckResult grad_check_classifier(EmClassifier& clf, std::span<const double> x,
                                          std::size_t label, double step) {
  nn::MlpGrads analytic = clf.net.make_grads();
  parameter_gradient(clf, x, label, analytic);
  auto loss = [&]() {
    nn::ForwardCache cache;
    clf.net.forward(x, cache);
    nn::PiecewiseLoss l;
    l.value = nn::cross_entropy(cache.output(), label);
    nn::append_relu_pattern(clf.net, cache, l.pattern);
    return l;
  };
  return nn::check_gradients(clf.net.param_blocks(), std::as_const(analytic).blocks(), loss,
                             step);
}

evalkit::ClassReport per_class_report(const EmClassifier& clf,
                                      const std::vector<traceproc::Spectrogram>& specs,
                                      std::span<const std::size_t> labels) {
  if (specs.empty()) throw ConfigError("per_class_report: empty validation set");
  if (specs.size() != labels.size()) throw ShapeError("per_class_report: length mismatch");
  std::vector<std::size_t> preds;
  preds.reserve(specs.size());
  for (const auto& s : specs) preds.push_back(nn::argmax(classify(clf, clf.segment, s)));
  return evalkit::class_report(evalkit::confusion_matrix(preds, labels, clf.n_classes()));
}

void save_classifiers(const std::filesystem::path& path, const std::vector<EmClassifier>& clfs,
                      std::uint64_t config_hash) {
  io::BinaryWriter w(path);
  w.header("EMSV", "ECLF", config_hash);
  w.u32(static_cast<std::uint32_t>(clfs.size()));
  for (const auto& c : clfs) {
    w.u32(static_cast<std::uint32_t>(c.segment));
    w.u32(static_cast<std::uint32_t>(c.windows));
    w.u32(static_cast<std::uint32_t>(c.bands));
    w.f32_array(c.mean);
    w.f32_array(c.stddev);
    io::write_mlp(w, c.net);
  }
  w.close();
}

std::vector<EmClassifier> load_classifiers(const std::filesystem::path& path,
                                           std::uint64_t* config_hash) {
  io::BinaryReader r(path);
  const std::uint64_t h = r.header("EMSV", "ECLF");
  if (config_hash) *config_hash = h;
  const std::uint32_t n = r.u32();
  if (n > 1024) throw FormatError("classifier bank: implausible count");
  std::vector<EmClassifier> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    EmClassifier c;
    c.segment = r.u32();
    c.windows = r.u32();
    c.bands = r.u32();
    if (c.windows * c.bands > (std::size_t{1} << 24)) throw FormatError("classifier: bad shape");
    c.mean = r.f32_array(c.windows * c.bands);
    c.stddev = r.f32_array(c.windows * c.bands);
    c.net = io::read_mlp(r);
    if (c.net.input_dim() != c.input_dim()) throw FormatError("classifier: shape mismatch");
    out.push_back(std::move(c));
  }
  return out;
}

void export_logits_csv(const std::filesystem::path& path,
                       std::span<const std::uint64_t> sample_ids,
                       std::span<const std::size_t> pred_labels,
                       const std::vector<std::vector<double>>& logits,
                       std::uint64_t config_hash) {
  if (sample_ids.size() != logits.size() || pred_labels.size() != logits.size()) {
    throw ShapeError("export_logits_csv: length mismatch");
  }
  io::CsvWriter w(path);
  w.comment("config_hash=" + io::hex64(config_hash));
  std::vector<std::string> header{"sample_id", "pred_label"};
  const std::size_t dim = logits.empty() ? 0 : logits.front().size();
  for (std::size_t j = 0; j < dim; ++j) header.push_back("l_" + std::to_string(j));
  w.row(header);
  std::vector<std::string> row;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    row.clear();
    row.push_back(std::to_string(sample_ids[i]));
    row.push_back(std::to_string(pred_labels[i]));
    for (double v : logits[i]) row.push_back(io::format_double(v));
    w.row(row);
  }
  w.close();
}

}  // namespace emshep::emclf
