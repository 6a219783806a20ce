#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nirgnn/error.hpp"

namespace nirgnn::ad {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the computation graph. Leaves (parameters, inputs) own no
/// backward rule; op results carry their parents and a rule that pushes
/// `grad` into the parents' `grad` buffers.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;
  std::string_view op = "leaf";

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Process-wide tallies for numerical clamps that are reported, not fatal.
struct NumericCounters {
  std::atomic<std::uint64_t> pdf_underflow{0};
  std::atomic<std::uint64_t> log_clamp{0};

  void reset() {
    pdf_underflow = 0;
    log_clamp = 0;
  }
};

inline NumericCounters& counters() {
  static NumericCounters c;
  return c;
}

/// Shared handle onto a graph node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape.empty()) shape = {1};
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                           std::to_string(values.size()) + " values");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw DomainError("non-finite value in tensor construction");
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, v));
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const auto n = v.size();
    return from({n}, std::move(v), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                       bool requires_grad = false) {
    return from({rows, cols}, std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  // Rank-1 tensors read as a single row.
  std::size_t rows() const { return rank() >= 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const double> data() const { return node_->value; }
  /// Direct write access; only meaningful for leaves (initialization, optimizer).
  std::span<double> mutable_data() { return node_->value; }

  double item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  void clear_grad() { node_->grad.clear(); }

  Node* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }
  std::string_view op() const { return node_->op; }

 private:
  NodePtr node_;
};

/// Ordered record of executed operations. Records are appended in
/// execution order, which is a topological order; backward walks them in
/// reverse so every node runs its rule exactly once, after all consumers.
class Tape {
 public:
  void push(NodePtr n) { records_.push_back(std::move(n)); }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  void backward(const Tensor& root, double seed = 1.0) {
    if (root.numel() != 1) {
      throw DimensionError("backward root must be a scalar, got " + shape_str(root.shape()));
    }
    if (!root.requires_grad()) return;
    root.node()->grad_buffer()[0] += seed;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      Node& n = **it;
      if (n.grad.empty() || !n.backward) continue;
      n.backward(n);
    }
  }

  static Tape*& active() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

 private:
  std::vector<NodePtr> records_;
};

/// Makes `tape` the recording target for ops on this thread while alive.
class Recording {
 public:
  explicit Recording(Tape& tape) : previous_(Tape::active()) { Tape::active() = &tape; }
  ~Recording() { Tape::active() = previous_; }
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on this thread while alive.
class NoGrad {
 public:
  NoGrad() : previous_(Tape::active()) { Tape::active() = nullptr; }
  ~NoGrad() { Tape::active() = previous_; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

using BackwardFn = std::function<void(Node&)>;

inline Tensor make_result(std::string_view op, Shape shape, std::vector<double> value,
                          std::vector<Tensor> parents, BackwardFn backward) {
  for (double v : value) {
    if (!std::isfinite(v)) throw DomainError("non-finite value produced by " + std::string(op));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  Tape* tape = Tape::active();
  const bool track =
      tape && std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backward = std::move(backward);
    tape->push(n);
  }
  return Tensor(std::move(n));
}

/// Gradient sink for a parent, or an empty span when it takes no gradient.
inline std::span<double> sink(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return {};
  return p.grad_buffer();
}

}  // namespace detail

}  // namespace nirgnn::ad
