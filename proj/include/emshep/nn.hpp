// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Small dense networks with explicit backprop.  Shared by the victim model,
// the per-segment EM classifiers and the VAE detectors.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "emshep/rng.hpp"

namespace emshep::nn {

enum class Activation { kLinear, kRelu };

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
  Activation act = Activation::kLinear;
};

// Activations recorded by a forward pass.  post[0] is the input; pre[i] and
// post[i + 1] belong to layer i.
struct ForwardCache {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;

  std::span<const double> output() const { return post.back(); }
};

struct MlpGrads {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;

  void zero();
  void scale(double s);
  void add(const MlpGrads& other);
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
};

class Mlp {
 public:
  Mlp() = default;
  // dims = {input, hidden..., output}; acts has dims.size() - 1 entries.
  Mlp(std::vector<std::size_t> dims, std::vector<Activation> acts);

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t num_params() const;
  std::vector<std::size_t> dims() const;

  const DenseLayer& layer(std::size_t i) const { return layers_[i]; }
  DenseLayer& layer(std::size_t i) { return layers_[i]; }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  void init_uniform(Rng& rng);
  void set_zero();

  std::vector<double> forward(std::span<const double> x) const;
  void forward(std::span<const double> x, ForwardCache& cache) const;

  // Accumulates parameter gradients of a scalar loss into `grads` given
  // dL/d(output).  If `grad_input` is non-null it receives dL/dx.
  void backward(const ForwardCache& cache, std::span<const double> grad_out,
                MlpGrads& grads, std::vector<double>* grad_input = nullptr) const;

  MlpGrads make_grads() const;

  std::vector<std::span<double>> param_blocks();
  std::vector<std::span<const double>> param_blocks() const;

  bool all_finite() const;

  // Rounds every parameter to the nearest float so that float32 checkpoints
  // round-trip bitwise.
  void round_to_float();

  bool operator==(const Mlp& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

class Sgd {
 public:
  explicit Sgd(double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum) {}
  void step(Mlp& net, const MlpGrads& grads);

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(Mlp& net, const MlpGrads& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

std::vector<double> softmax(std::span<const double> logits);

// Cross-entropy of softmax(logits) against `label`; writes dL/dlogits.
double cross_entropy(std::span<const double> logits, std::size_t label,
                     std::vector<double>* grad = nullptr);

std::size_t argmax(std::span<const double> v);

// True if the ReLU on/off pattern of two forward passes is identical.
bool same_relu_pattern(const Mlp& net, const ForwardCache& a, const ForwardCache& b);

// A loss value together with the on/off pattern of every rectifier that
// produced it.  Finite differences are only meaningful between two points on
// the same linear piece.
struct PiecewiseLoss {
  double value = 0.0;
  std::vector<char> pattern;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a rectifier kink
};

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Central-difference check of `analytic` against `loss`, perturbing every
// entry of `params` in place (restored afterwards).
GradCheckResult check_gradients(std::vector<std::span<double>> params,
                                std::vector<std::span<const double>> analytic,
                                const std::function<PiecewiseLoss()>& loss,
                                double step = 1e-4);

// Appends the rectifier on/off pattern of a forward pass.
void append_relu_pattern(const Mlp& net, const ForwardCache& cache,
                         std::vector<char>& pattern);

}  // namespace emshep::nn
