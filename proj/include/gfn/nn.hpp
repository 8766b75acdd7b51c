#pragma once

// Small fully connected nets and a bias-corrected Adam. The MLP keeps one
// weight/bias pair per affine layer with a leaky rectifier between layers
// (slope 0.01). forward() records the tape; forward_plain() is the
// allocation-light path used for sampling and exact evaluation, and computes
// the same arithmetic in the same order.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfn/rng.hpp"
#include "gfn/tensor.hpp"

namespace gfn {

inline constexpr double kLeakySlope = 0.01;

class Mlp {
 public:
  Mlp() = default;

  /// dims = {in, h1, ..., out}; L = dims.size()-1 affine layers, activation
  /// after every layer except the last.
  Mlp(std::vector<std::size_t> dims, Rng& rng) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw std::invalid_argument("mlp: need at least one layer");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const std::size_t fan_in = dims_[l], fan_out = dims_[l + 1];
      std::vector<double> w(fan_out * fan_in);
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : w) v = rng.normal() * scale;
      weights_.push_back(make_leaf(std::move(w), {fan_out, fan_in}));
      // small nonzero bias init keeps pre-activations off the rectifier kink
      // even for all-zero encodings (the initial state)
      std::vector<double> b(fan_out);
      for (auto& v : b) v = rng.normal() * 0.01;
      biases_.push_back(make_leaf(std::move(b), {fan_out}));
    }
  }

  std::size_t in_dim() const { return dims_.front(); }
  std::size_t out_dim() const { return dims_.back(); }
  std::size_t layer_count() const { return weights_.size(); }

  TensorPtr forward(const TensorPtr& input) const {
    if (input->size() != in_dim())
      throw std::invalid_argument("mlp: input size " + std::to_string(input->size()) +
                                  " does not match first layer " + std::to_string(in_dim()));
    TensorPtr h = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = affine(weights_[l], biases_[l], h);
      if (l + 1 < weights_.size()) h = leaky_relu(h, kLeakySlope);
    }
    return h;
  }

  /// Tape-free forward; `out` receives the final activations.
  void forward_plain(std::span<const double> input, std::vector<double>& out) const {
    if (input.size() != in_dim())
      throw std::invalid_argument("mlp: input size mismatch");
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const auto& W = weights_[l]->values;
      const auto& b = biases_[l]->values;
      const std::size_t m = dims_[l + 1], n = dims_[l];
      next.assign(m, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        double acc = b[i];
        const double* row = W.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * cur[j];
        next[i] = acc;
      }
      if (l + 1 < weights_.size())
        for (auto& v : next) v = v >= 0.0 ? v : kLeakySlope * v;
      cur.swap(next);
    }
    out = std::move(cur);
  }

  std::vector<TensorPtr> params() const {
    std::vector<TensorPtr> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(weights_[l]);
      out.push_back(biases_[l]);
    }
    return out;
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  const TensorPtr& weight(std::size_t l) const { return weights_[l]; }
  const TensorPtr& bias(std::size_t l) const { return biases_[l]; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<TensorPtr> weights_;
  std::vector<TensorPtr> biases_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Parameters join in groups so the policy net
/// and log Z can carry different learning rates; one step() advances the
/// shared step counter by exactly 1.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void add_group(const std::vector<TensorPtr>& params, double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
    for (const auto& p : params) {
      if (!p->requires_grad) throw std::invalid_argument("adam: parameter without grad");
      slots_.push_back(Slot{p, std::vector<double>(p->size(), 0.0),
                            std::vector<double>(p->size(), 0.0), lr});
    }
  }

  long long step_count() const { return t_; }

  void zero_grad() {
    for (auto& s : slots_) s.param->zero_grad();
  }

  void step() {
    for (const auto& s : slots_)
      for (double g : s.param->grad)
        if (!std::isfinite(g))
          throw std::runtime_error("adam: non-finite gradient, step rejected");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
      auto& p = s.param->values;
      const auto& g = s.param->grad;
      for (std::size_t i = 0; i < p.size(); ++i) {
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        p[i] -= s.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  const AdamConfig& config() const { return cfg_; }

 private:
  struct Slot {
    TensorPtr param;
    std::vector<double> m, v;
    double lr;
  };
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  long long t_ = 0;
};

}  // namespace gfn
