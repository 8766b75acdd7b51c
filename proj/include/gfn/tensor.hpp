#pragma once

// Dense double-precision tensors on a reverse-mode tape. Nodes own their
// inputs through shared_ptr, so holding a loss keeps its whole graph alive
// until backward() has run. Only the handful of ops the engine needs are
// provided; everything is 64-bit throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace gfn {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

class Tensor : public std::enable_shared_from_this<Tensor> {
 public:
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated iff requires_grad, same extent as values
  bool requires_grad = false;

  std::vector<TensorPtr> parents;
  std::function<void()> backprop;  // scatters this->grad into parents' grad

  Tensor(std::vector<double> v, std::vector<std::size_t> s, bool rg)
      : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    if (n != values.size())
      throw std::invalid_argument("tensor: value count does not match shape");
    if (requires_grad) grad.assign(values.size(), 0.0);
  }

  std::size_t size() const { return values.size(); }
  bool is_scalar() const { return values.size() == 1; }

  double item() const {
    if (!is_scalar()) throw std::invalid_argument("tensor: item() on non-scalar");
    return values[0];
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

inline TensorPtr make_leaf(std::vector<double> v, std::vector<std::size_t> shape,
                           bool requires_grad = true) {
  return std::make_shared<Tensor>(std::move(v), std::move(shape), requires_grad);
}

inline TensorPtr make_vector(std::vector<double> v, bool requires_grad = false) {
  std::vector<std::size_t> shape{v.size()};
  return std::make_shared<Tensor>(std::move(v), std::move(shape), requires_grad);
}

inline TensorPtr make_scalar(double v, bool requires_grad = false) {
  return std::make_shared<Tensor>(std::vector<double>{v}, std::vector<std::size_t>{1},
                                  requires_grad);
}

namespace detail {

inline TensorPtr make_node(std::vector<double> v, std::vector<std::size_t> shape,
                           std::vector<TensorPtr> parents) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto node = std::make_shared<Tensor>(std::move(v), std::move(shape), rg);
  node->parents = std::move(parents);
  return node;
}

}  // namespace detail

/// y = W x + b with W of shape {m, n} (row-major), b {m}, x {n}.
inline TensorPtr affine(const TensorPtr& W, const TensorPtr& b, const TensorPtr& x) {
  if (W->shape.size() != 2) throw std::invalid_argument("affine: W must be rank 2");
  const std::size_t m = W->shape[0], n = W->shape[1];
  if (b->size() != m || x->size() != n)
    throw std::invalid_argument("affine: dimension mismatch");
  std::vector<double> y(m);
  const double* w = W->values.data();
  const double* xv = x->values.data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = b->values[i];
    const double* row = w + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv[j];
    y[i] = acc;
  }
  auto node = detail::make_node(std::move(y), {m}, {W, b, x});
  if (node->requires_grad) {
    Tensor* self = node.get();
    node->backprop = [self, W, b, x, m, n]() {
      const double* g = self->grad.data();
      if (W->requires_grad) {
        double* gw = W->grad.data();
        const double* xv = x->values.data();
        for (std::size_t i = 0; i < m; ++i) {
          double gi = g[i];
          if (gi == 0.0) continue;
          double* row = gw + i * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += gi * xv[j];
        }
      }
      if (b->requires_grad) {
        for (std::size_t i = 0; i < m; ++i) b->grad[i] += g[i];
      }
      if (x->requires_grad) {
        const double* w = W->values.data();
        double* gx = x->grad.data();
        for (std::size_t i = 0; i < m; ++i) {
          double gi = g[i];
          if (gi == 0.0) continue;
          const double* row = w + i * n;
          for (std::size_t j = 0; j < n; ++j) gx[j] += gi * row[j];
        }
      }
    };
  }
  return node;
}

inline TensorPtr leaky_relu(const TensorPtr& x, double slope) {
  std::vector<double> y(x->size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = x->values[i] >= 0.0 ? x->values[i] : slope * x->values[i];
  auto node = detail::make_node(std::move(y), x->shape, {x});
  if (node->requires_grad) {
    Tensor* self = node.get();
    node->backprop = [self, x, slope]() {
      for (std::size_t i = 0; i < x->size(); ++i)
        x->grad[i] += self->grad[i] * (x->values[i] >= 0.0 ? 1.0 : slope);
    };
  }
  return node;
}

inline TensorPtr slice(const TensorPtr& x, std::size_t offset, std::size_t len) {
  if (offset + len > x->size()) throw std::invalid_argument("slice: out of range");
  std::vector<double> y(x->values.begin() + offset, x->values.begin() + offset + len);
  auto node = detail::make_node(std::move(y), {len}, {x});
  if (node->requires_grad) {
    Tensor* self = node.get();
    node->backprop = [self, x, offset, len]() {
      for (std::size_t i = 0; i < len; ++i) x->grad[offset + i] += self->grad[i];
    };
  }
  return node;
}

/// Scalar view of one element.
inline TensorPtr index(const TensorPtr& x, std::size_t i) {
  if (i >= x->size()) throw std::invalid_argument("index: out of range");
  auto node = detail::make_node({x->values[i]}, {1}, {x});
  if (node->requires_grad) {
    Tensor* self = node.get();
    node->backprop = [self, x, i]() { x->grad[i] += self->grad[0]; };
  }
  return node;
}

inline TensorPtr square(const TensorPtr& x) {
  std::vector<double> y(x->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x->values[i] * x->values[i];
  auto node = detail::make_node(std::move(y), x->shape, {x});
  if (node->requires_grad) {
    Tensor* self = node.get();
    node->backprop = [self, x]() {
      for (std::size_t i = 0; i < x->size(); ++i)
        x->grad[i] += self->grad[i] * 2.0 * x->values[i];
    };
  }
  return node;
}

/// bias + sum_i coeff_i * term_i over scalar terms. The workhorse for
/// assembling log-space residuals and batch means without deep op chains.
inline TensorPtr linear_combination(std::vector<std::pair<TensorPtr, double>> terms,
                                    double bias = 0.0) {
  double acc = bias;
  std::vector<TensorPtr> parents;
  parents.reserve(terms.size());
  for (const auto& [t, c] : terms) {
    if (!t->is_scalar())
      throw std::invalid_argument("linear_combination: terms must be scalars");
    acc += c * t->values[0];
    parents.push_back(t);
  }
  auto node = detail::make_node({acc}, {1}, std::move(parents));
  if (node->requires_grad) {
    Tensor* self = node.get();
    auto held = std::make_shared<std::vector<std::pair<TensorPtr, double>>>(std::move(terms));
    node->backprop = [self, held]() {
      const double g = self->grad[0];
      for (const auto& [t, c] : *held)
        if (t->requires_grad) t->grad[0] += g * c;
    };
  }
  return node;
}

inline TensorPtr mean_of(const std::vector<TensorPtr>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("mean_of: empty");
  const double w = 1.0 / static_cast<double>(scalars.size());
  std::vector<std::pair<TensorPtr, double>> terms;
  terms.reserve(scalars.size());
  for (const auto& s : scalars) terms.emplace_back(s, w);
  return linear_combination(std::move(terms));
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Log-softmax over the unmasked entries; masked entries come out as -inf and
/// carry no gradient. Throws if nothing is legal.
inline TensorPtr masked_log_softmax(const TensorPtr& logits, const std::vector<char>& mask) {
  if (mask.size() != logits->size())
    throw std::invalid_argument("masked_log_softmax: mask size mismatch");
  double mx = kNegInf;
  std::size_t legal = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      mx = std::max(mx, logits->values[i]);
      ++legal;
    }
  if (legal == 0) throw std::invalid_argument("masked_log_softmax: no legal entry");
  double sum = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) sum += std::exp(logits->values[i] - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits->size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = mask[i] ? logits->values[i] - lse : kNegInf;
  auto node = detail::make_node(std::move(out), logits->shape, {logits});
  if (node->requires_grad) {
    Tensor* self = node.get();
    auto m = std::make_shared<std::vector<char>>(mask);
    node->backprop = [self, logits, m]() {
      double gsum = 0.0;
      for (std::size_t i = 0; i < m->size(); ++i)
        if ((*m)[i]) gsum += self->grad[i];
      for (std::size_t i = 0; i < m->size(); ++i)
        if ((*m)[i])
          logits->grad[i] += self->grad[i] - std::exp(self->values[i]) * gsum;
    };
  }
  return node;
}

/// Reverse-mode sweep from a scalar loss. Gradients accumulate, so callers
/// zero parameter grads between steps.
inline void backward(const TensorPtr& loss) {
  if (!loss->is_scalar())
    throw std::invalid_argument("backward: loss must be a scalar node");
  if (!loss->requires_grad) return;  // constant graph, all gradients are zero

  // Iterative postorder over the grad-requiring subgraph.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> visited;
  std::vector<std::pair<Tensor*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Tensor* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

}  // namespace gfn
