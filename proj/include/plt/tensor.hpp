#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "plt/errors.hpp"

namespace plt {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Whether newly created op results record a backward closure.
inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables tape recording for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major fp64 array with an optional gradient buffer.
///
/// A Tensor is a cheap handle; copies alias the same storage. Values are
/// treated as immutable once an op has consumed them. Leaves (parameters) may
/// be updated in place through mutable_data() between forward passes.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape_size(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  static Tensor identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.node_->data[i * n + i] = 1.0;
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rank() const { return node_->shape.size(); }

  /// Leading extent; a rank-1 tensor is one row.
  std::size_t rows() const { return rank() <= 1 ? 1 : node_->shape.front(); }
  /// Product of trailing extents.
  std::size_t cols() const { return rank() == 0 ? 1 : size() / rows(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(node_->data).subspan(r * cols(), cols());
  }

  double item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  /// Detached copy of the values.
  Tensor clone() const { return Tensor(shape(), node_->data, false); }

  /// Reverse-mode sweep from this scalar. Gradients accumulate into every
  /// reachable tensor that requires grad.
  void backward() const {
    if (size() != 1) throw DimensionError("backward() requires a scalar output");
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        detail::Node* parent = node->parents[next++].get();
        if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* node = *it;
      if (node->backward && !node->grad.empty()) node->backward(*node);
    }
  }

  // Op construction hooks.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Builds an op output. The backward closure is attached only when some input
/// requires grad and tape recording is on.
inline Tensor make_result(Shape shape, std::vector<double> data,
                          std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (grad_mode()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

/// Gradient buffer of an input if it participates in backprop, else null.
inline std::vector<double>* grad_of(const Tensor& t) {
  return t.requires_grad() ? &t.node()->grad_buffer() : nullptr;
}

}  // namespace detail

inline bool all_finite(const Tensor& t) {
  for (double x : t.data()) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace plt
