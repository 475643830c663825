#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "igc/core/error.hpp"

namespace igc::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  concat,
  slice,
  reshape,
  transpose,
  sigmoid,
  tanh,
  relu,
  elu,
  exp,
  log,
  square,
  softmax,
  layer_norm,
  dropout,
  mse_loss,
  weighted_sse,
  mean,
  sum,
  index_select,
  rel_bias,
  bce_logits,
  gaussian_nll,
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  OpKind kind = OpKind::leaf;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into parents that require grad.
  std::function<void(Node& self)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

namespace detail {

inline std::uint64_t next_node_id() {
  static thread_local std::uint64_t counter = 0;
  return ++counter;
}

inline int& no_grad_depth() {
  static thread_local int depth = 0;
  return depth;
}

}  // namespace detail

inline bool grad_enabled() { return detail::no_grad_depth() == 0; }

/// Scope in which ops do not record graph edges (generation step, inference).
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth(); }
  ~NoGradGuard() { --detail::no_grad_depth(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Handle to a node of the reverse-mode graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values) {
    if (values.size() != numel(shape)) {
      throw DimensionError("tensor values size " + std::to_string(values.size()) + " does not match shape " +
                           to_string(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(std::move(n));
  }

  static Tensor parameter(Shape shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    t.node_->id = detail::next_node_id();
    return t;
  }

  static Tensor zeros(Shape shape) {
    auto n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor full(Shape shape, double v) {
    auto n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return constant({}, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  /// In-place access for leaves only (optimizer updates, checkpoint loading).
  std::span<double> mutable_values() {
    if (node_->kind != OpKind::leaf) throw ContractError("mutable_values() on a non-leaf tensor");
    return node_->value;
  }

  bool requires_grad() const { return node_->requires_grad; }
  /// Graph handle; empty for constants and detached tensors.
  std::optional<std::uint64_t> node_id() const {
    if (!node_->requires_grad) return std::nullopt;
    if (node_->id == 0) node_->id = detail::next_node_id();
    return node_->id;
  }
  OpKind kind() const { return node_->kind; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Graph-free copy of the values.
  Tensor detach() const { return constant(shape(), node_->value); }

  /// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
  /// reachable tensor that requires grad.
  void backward() const;

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Creates the result node of an op, wiring it into the graph when any input requires grad.
inline Tensor make_result(OpKind kind, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any && grad_enabled()) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (auto& in : inputs) n->parents.push_back(in.node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

inline void Tensor::backward() const {
  if (!node_) throw ContractError("backward() on an undefined tensor");
  if (node_->value.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + to_string(shape()));
  }
  if (!node_->requires_grad) throw ContractError("backward() on a tensor that is not attached to a graph");

  // Iterative post-order DFS gives a topological order; each node is visited once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Release intermediate gradients so repeated backward passes start clean.
  for (Node* n : order) {
    if (n->kind != OpKind::leaf) n->grad.clear();
  }
}

}  // namespace igc::ad
