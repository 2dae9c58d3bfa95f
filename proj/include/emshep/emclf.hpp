// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Per-segment EM classifiers over band-selected spectrograms, and the
// segment-major logits vector that feeds the anomaly detectors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "emshep/evalkit.hpp"
#include "emshep/nn.hpp"
#include "emshep/traceproc.hpp"

namespace emshep::emclf {

// log(magnitude + kLogFloor), then standardized per feature.
inline constexpr double kLogFloor = 1e-3;

struct EmClassifier {
  std::size_t segment = 0;
  std::size_t windows = 0;  // input shape: windows x bands
  std::size_t bands = 0;
  std::vector<double> mean;    // per feature, from the training split
  std::vector<double> stddev;
  nn::Mlp net;  // flatten -> hidden (rectifier) -> N logits

  std::size_t input_dim() const { return windows * bands; }
  std::size_t n_classes() const { return net.output_dim(); }
};

struct ClassifierConfig {
  std::size_t hidden = 64;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean training loss per epoch
  double validation_accuracy = 0.0;
  evalkit::ClassReport validation;
};

// Raw (un-normalized) features of one spectrogram: log magnitudes.
std::vector<double> log_features(const traceproc::Spectrogram& s);

// Normalized network input; checks the shape against the classifier.
std::vector<double> features(const EmClassifier& clf, const traceproc::Spectrogram& s);

EmClassifier make_classifier(std::size_t segment, std::size_t windows, std::size_t bands,
                             std::size_t n_classes, const ClassifierConfig& cfg);

// validation may be empty.
EmClassifier train_classifier(std::size_t segment,
                              const std::vector<traceproc::Spectrogram>& train,
                              std::span<const std::size_t> train_labels,
                              const std::vector<traceproc::Spectrogram>& validation,
                              std::span<const std::size_t> validation_labels,
                              std::size_t n_classes, const ClassifierConfig& cfg,
                              TrainResult* result = nullptr);

// Raw logits (length N).  The segment index guards against feeding a
// spectrogram of another segment.
std::vector<double> classify(const EmClassifier& clf, std::size_t segment,
                             const traceproc::Spectrogram& s);
std::vector<double> classify_features(const EmClassifier& clf, std::span<const double> x);

// Segment-major: element m * N + c is segment m's logit for class c.
std::vector<double> concat_logits(const std::vector<std::vector<double>>& per_segment,
                                  std::size_t n_segments, std::size_t n_classes);

// Cross-entropy gradient w.r.t. parameters for one normalized input.
double parameter_gradient(const EmClassifier& clf, std::span<const double> x,
                          std::size_t label, nn::MlpGrads& grads);

nn::GradCheckResult grad_check_classifier(EmClassifier& clf, std::span<const double> x,
                                          std::size_t label, double step = 1e-4);

evalkit::ClassReport per_class_report(const EmClassifier& clf,
                                      const std::vector<traceproc::Spectrogram>& specs,
                                      std::span<const std::size_t> labels);

// All M classifiers in one "EMSV" container, role "ECLF".
void save_classifiers(const std::filesystem::path& path, const std::vector<EmClassifier>& clfs,
                      std::uint64_t config_hash);
std::vector<EmClassifier> load_classifiers(const std::filesystem::path& path,
                                           std::uint64_t* config_hash = nullptr);

// sample_id,pred_label,l_0,...,l_{MN-1}
void export_logits_csv(const std::filesystem::path& path,
                       std::span<const std::uint64_t> sample_ids,
                       std::span<const std::size_t> pred_labels,
                       const std::vector<std::vector<double>>& logits,
                       std::uint64_t config_hash);

}  // namespace emshep::emclf
