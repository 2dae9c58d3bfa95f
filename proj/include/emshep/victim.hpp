// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic classification data and the small dense victim classifier whose
// inference the leakage simulator observes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "emshep/nn.hpp"

namespace emshep::victim {

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };

struct DatasetConfig {
  std::uint64_t seed = 7;
  std::size_t n_classes = 10;
  std::size_t n_per_class = 300;
  std::size_t dim = 64;
  // Centroid spacing relative to the within-class spread; larger is easier.
  double class_separation = 3.0;
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
};

struct Dataset {
  std::vector<std::vector<double>> inputs;
  std::vector<std::uint32_t> labels;
  std::vector<Split> splits;
  std::size_t n_classes = 0;
  std::size_t dim = 0;
  double train_fraction = 0.0;
  double validation_fraction = 0.0;

  std::size_t size() const { return inputs.size(); }
  std::vector<std::size_t> indices(Split s) const;
};

// Samples are emitted round-robin over classes; within each class the first
// train_fraction of draws are training data, then validation, then test.
Dataset gen_dataset(const DatasetConfig& cfg);

// Draws individual samples from the dataset distribution.  gen_dataset uses
// stream kDataset with index i * n_classes + c; other streams give fresh
// benign samples of the same distribution.
class SampleSource {
 public:
  explicit SampleSource(const DatasetConfig& cfg);
  std::vector<double> draw(std::size_t cls, std::uint64_t stream_tag, std::uint64_t index) const;

 private:
  DatasetConfig cfg_;
  std::vector<std::vector<double>> basis_;
  std::vector<std::vector<double>> patterns_;
};

// Per-class centroid used by gen_dataset (before noise and clipping).
std::vector<double> class_pattern(std::uint64_t seed, std::size_t cls, std::size_t dim);

struct VictimModel {
  nn::Mlp net;  // rectifier hidden layers, linear logits

  std::size_t input_dim() const { return net.input_dim(); }
  std::size_t n_classes() const { return net.output_dim(); }
};

// layer_sizes = {input, hidden..., classes}
VictimModel make_victim(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);

struct TrainConfig {
  std::vector<std::size_t> layer_sizes{64, 48, 32, 10};
  double learning_rate = 0.05;
  double momentum = 0.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
};

// Optional per-sample training augmentation: given the current model and a
// training pair, returns an extra input that is trained with the same label.
using Augmenter = std::function<std::vector<double>(const VictimModel&,
                                                    std::span<const double>, std::size_t)>;

struct TrainReport {
  std::vector<double> epoch_loss;  // mean training-split loss after each epoch
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

VictimModel train_victim(const Dataset& data, const TrainConfig& cfg,
                         TrainReport* report = nullptr, const Augmenter& augment = {});

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probs;
};

std::vector<double> logits(const VictimModel& model, std::span<const double> x);
Prediction predict(const VictimModel& model, std::span<const double> x);

// Post-activation output of every layer in execution order; the last entry
// is the logits vector.
using LayerActivations = std::vector<std::vector<double>>;
LayerActivations forward_trace(const VictimModel& model, std::span<const double> x);

// Cross-entropy at (x, label) and its gradient with respect to x.
double input_gradient(const VictimModel& model, std::span<const double> x,
                      std::size_t label, std::vector<double>& grad);

// Cross-entropy at (x, label) and its parameter gradients.
double parameter_gradient(const VictimModel& model, std::span<const double> x,
                          std::size_t label, nn::MlpGrads& grads);

nn::GradCheckResult grad_check_victim(VictimModel& model, std::span<const double> x,
                                      std::size_t label, double step = 1e-4);

double accuracy(const VictimModel& model, const Dataset& data, Split split);
double mean_loss(const VictimModel& model, const Dataset& data, Split split);

void save_victim(const std::filesystem::path& path, const VictimModel& model,
                 std::uint64_t config_hash);
VictimModel load_victim(const std::filesystem::path& path, std::uint64_t* config_hash = nullptr);

// CSV with header label,f0,...,f{d-1}.  Leading comment lines carry the
// config hash and the split fractions, from which the split of every row is
// recomputed on import.
void export_dataset_csv(const std::filesystem::path& path, const Dataset& data,
                        std::uint64_t config_hash);
Dataset import_dataset_csv(const std::filesystem::path& path, std::size_t n_classes,
                           std::uint64_t* config_hash = nullptr);

}  // namespace emshep::victim
