// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "emshep/nn.hpp"

#include <algorithm>
#include <cmath>

#include "emshep/errors.hpp"
#include "emshep/kernels/kernels.hpp"

namespace emshep::nn {

void MlpGrads::zero() {
  for (auto& v : w) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
}

void MlpGrads::scale(double s) {
  for (auto& v : w)
    for (double& x : v) x *= s;
  for (auto& v : b)
    for (double& x : v) x *= s;
}

void MlpGrads::add(const MlpGrads& other) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    kernels::axpy(1.0, other.w[i], w[i]);
    kernels::axpy(1.0, other.b[i], b[i]);
  }
}

std::vector<std::span<double>> MlpGrads::blocks() {
  std::vector<std::span<double>> out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.emplace_back(w[i]);
    out.emplace_back(b[i]);
  }
  return out;
}

std::vector<std::span<const double>> MlpGrads::blocks() const {
  std::vector<std::span<const double>> out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.emplace_back(w[i]);
    out.emplace_back(b[i]);
  }
  return out;
}

Mlp::Mlp(std::vector<std::size_t> dims, std::vector<Activation> acts) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1) {
    throw ConfigError("mlp: need at least two dims and one activation per layer");
  }
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0) throw ConfigError("mlp: zero layer width");
    DenseLayer l;
    l.in = dims[i];
    l.out = dims[i + 1];
    l.w.assign(l.in * l.out, 0.0);
    l.b.assign(l.out, 0.0);
    l.act = acts[i];
    layers_.push_back(std::move(l));
  }
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.w.size() + l.b.size();
  return n;
}

std::vector<std::size_t> Mlp::dims() const {
  std::vector<std::size_t> d;
  if (layers_.empty()) return d;
  d.push_back(layers_.front().in);
  for (const auto& l : layers_) d.push_back(l.out);
  return d;
}

void Mlp::init_uniform(Rng& rng) {
  for (auto& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : l.w) x = dist(rng);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

void Mlp::set_zero() {
  for (auto& l : layers_) {
    std::fill(l.w.begin(), l.w.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  ForwardCache cache;
  forward(x, cache);
  return std::move(cache.post.back());
}

void Mlp::forward(std::span<const double> x, ForwardCache& cache) const {
  if (x.size() != input_dim()) {
    throw ShapeError("mlp: input has " + std::to_string(x.size()) +
                     " values, expected " + std::to_string(input_dim()));
  }
  cache.pre.resize(layers_.size());
  cache.post.resize(layers_.size() + 1);
  cache.post[0].assign(x.begin(), x.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& l = layers_[i];
    cache.pre[i].resize(l.out);
    kernels::matvec_bias(l.w, l.out, l.in, cache.post[i], l.b, cache.pre[i]);
    cache.post[i + 1].resize(l.out);
    if (l.act == Activation::kRelu) {
      kernels::active().relu(cache.pre[i].data(), cache.post[i + 1].data(), l.out);
    } else {
      cache.post[i + 1] = cache.pre[i];
    }
  }
}

void Mlp::backward(const ForwardCache& cache, std::span<const double> grad_out,
                   MlpGrads& grads, std::vector<double>* grad_input) const {
  if (grad_out.size() != output_dim()) throw ShapeError("mlp: grad_out size mismatch");
  std::vector<double> delta(grad_out.begin(), grad_out.end());
  std::vector<double> next;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const DenseLayer& l = layers_[li];
    if (l.act == Activation::kRelu) {
      for (std::size_t j = 0; j < l.out; ++j) {
        if (!(cache.pre[li][j] > 0.0)) delta[j] = 0.0;
      }
    }
    kernels::outer_acc(grads.w[li], l.out, l.in, delta, cache.post[li]);
    kernels::axpy(1.0, delta, grads.b[li]);
    if (li > 0 || grad_input != nullptr) {
      next.assign(l.in, 0.0);
      kernels::matvec_transposed_acc(l.w, l.out, l.in, delta, next);
      delta.swap(next);
    }
  }
  if (grad_input != nullptr) *grad_input = std::move(delta);
}

MlpGrads Mlp::make_grads() const {
  MlpGrads g;
  for (const auto& l : layers_) {
    g.w.emplace_back(l.w.size(), 0.0);
    g.b.emplace_back(l.b.size(), 0.0);
  }
  return g;
}

std::vector<std::span<double>> Mlp::param_blocks() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.w);
    out.emplace_back(l.b);
  }
  return out;
}

std::vector<std::span<const double>> Mlp::param_blocks() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers_) {
    out.emplace_back(l.w);
    out.emplace_back(l.b);
  }
  return out;
}

bool Mlp::all_finite() const {
  for (const auto& blk : param_blocks())
    for (double x : blk)
      if (!std::isfinite(x)) return false;
  return true;
}

void Mlp::round_to_float() {
  for (auto blk : param_blocks())
    for (double& x : blk) x = static_cast<double>(static_cast<float>(x));
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.in != b.in || a.out != b.out || a.act != b.act || a.w != b.w || a.b != b.b) {
      return false;
    }
  }
  return true;
}

void Sgd::step(Mlp& net, const MlpGrads& grads) {
  auto params = net.param_blocks();
  auto g = grads.blocks();
  if (momentum_ == 0.0) {
    for (std::size_t i = 0; i < params.size(); ++i) kernels::axpy(-lr_, g[i], params[i]);
    return;
  }
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const auto& p : params) velocity_.emplace_back(p.size(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = velocity_[i];
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = momentum_ * v[k] + g[i][k];
    kernels::axpy(-lr_, v, params[i]);
  }
}

void Adam::step(Mlp& net, const MlpGrads& grads) {
  auto params = net.param_blocks();
  auto g = grads.blocks();
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      const double gk = g[i][k];
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * gk;
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * gk * gk;
      const double mhat = m_[i][k] / c1;
      const double vhat = v_[i][k] / c2;
      params[i][k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& x : p) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : p) x /= sum;
  return p;
}

double cross_entropy(std::span<const double> logits, std::size_t label,
                     std::vector<double>* grad) {
  if (label >= logits.size()) throw ShapeError("cross_entropy: label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double log_z = mx + std::log(sum);
  if (grad != nullptr) {
    grad->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      (*grad)[i] = std::exp(logits[i] - log_z) - (i == label ? 1.0 : 0.0);
    }
  }
  return log_z - logits[label];
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool same_relu_pattern(const Mlp& net, const ForwardCache& a, const ForwardCache& b) {
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    if (net.layer(i).act != Activation::kRelu) continue;
    for (std::size_t j = 0; j < a.pre[i].size(); ++j) {
      if ((a.pre[i][j] > 0.0) != (b.pre[i][j] > 0.0)) return false;
    }
  }
  return true;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(std::vector<std::span<double>> params,
                                std::vector<std::span<const double>> analytic,
                                const std::function<PiecewiseLoss()>& loss,
                                double step) {
  if (params.size() != analytic.size()) throw ShapeError("grad check: block count mismatch");
  GradCheckResult result;
  const PiecewiseLoss base = loss();
  for (std::size_t bi = 0; bi < params.size(); ++bi) {
    if (params[bi].size() != analytic[bi].size()) {
      throw ShapeError("grad check: block size mismatch");
    }
    for (std::size_t k = 0; k < params[bi].size(); ++k) {
      double& p = params[bi][k];
      const double saved = p;
      p = saved + step;
      const PiecewiseLoss plus = loss();
      p = saved - step;
      const PiecewiseLoss minus = loss();
      p = saved;
      if (plus.pattern != base.pattern || minus.pattern != base.pattern) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * step);
      result.max_rel_error =
          std::max(result.max_rel_error, relative_error(analytic[bi][k], numeric));
      ++result.checked;
    }
  }
  return result;
}

void append_relu_pattern(const Mlp& net, const ForwardCache& cache,
                         std::vector<char>& pattern) {
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    if (net.layer(i).act != Activation::kRelu) continue;
    for (double z : cache.pre[i]) pattern.push_back(z > 0.0 ? 1 : 0);
  }
}

}  // namespace emshep::nn
