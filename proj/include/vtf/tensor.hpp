#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vtf/error.hpp"

namespace vtf {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Resolves a possibly negative axis against `rank`.
inline std::size_t normalize_axis(long axis, std::size_t rank) {
  const long r = static_cast<long>(rank);
  const long a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ContractError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

enum class OpKind {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  SwapAxes,
  Reshape,
  Gelu,
  Sigmoid,
  Softplus,
  Softmax,
  LayerNorm,
  MeanAxis,
  SumAxis,
  SumAll,
  Concat,
  Slice,
  Gather,
};

inline constexpr std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::SwapAxes: return "swap_axes";
    case OpKind::Reshape: return "reshape";
    case OpKind::Gelu: return "gelu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softplus: return "softplus";
    case OpKind::Softmax: return "softmax";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::MeanAxis: return "mean";
    case OpKind::SumAxis: return "sum";
    case OpKind::SumAll: return "sum_all";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Gather: return "gather";
  }
  return "?";
}

template <class T>
class Tape;

/// Dense row-major array. Values are immutable once created and shared between
/// copies; a tensor produced under a Tape remembers its node for backward.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(std::make_shared<const std::vector<T>>(1, T(0))) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)) {
    for (auto d : shape_) {
      if (d == 0) throw DimensionError("tensor dims must be positive, got " + to_string(shape_));
    }
    if (vtf::numel(shape_) != data.size()) {
      throw DimensionError("shape " + to_string(shape_) + " does not match " + std::to_string(data.size()) +
                           " values");
    }
    data_ = std::make_shared<const std::vector<T>>(std::move(data));
  }

  static Tensor full(Shape shape, T value) {
    const auto n = vtf::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }
  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static Tensor scalar(T value) { return Tensor({}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_->size(); }
  std::size_t dim(long axis) const { return shape_[normalize_axis(axis, rank())]; }

  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  const std::vector<T>& values() const { return *data_; }
  T operator[](std::size_t i) const { return (*data_)[i]; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
    return (*data_)[0];
  }

  bool tracked() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  std::size_t node() const { return node_; }

  /// The same values without any tape reference.
  Tensor detach() const {
    Tensor out = *this;
    out.tape_ = nullptr;
    out.node_ = 0;
    return out;
  }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_->begin(), data_->end()));
  }

  bool all_finite() const {
    for (T v : *data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  friend class Tape<T>;

  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  std::size_t node_ = 0;
};

namespace testing {
/// When set, backward rules of this op kind are perturbed by 1%. Only the
/// gradient-check self-test uses it.
inline std::optional<OpKind>& backward_fault() {
  static std::optional<OpKind> fault;
  return fault;
}
}  // namespace testing

/// Records the forward computation so gradients can be pulled back through it.
/// Single-threaded; must outlive every tensor recorded on it.
template <class T>
class Tape {
 public:
  using GradSpans = std::vector<std::span<T>>;
  /// Accumulates into the input gradients; spans of untracked inputs are empty.
  using BackwardFn = std::function<void(std::span<const T> grad_out, GradSpans& grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a differentiable leaf.
  Tensor<T> leaf(const Tensor<T>& value) {
    Node node;
    node.kind = OpKind::Leaf;
    node.size = value.numel();
    nodes_.push_back(std::move(node));
    Tensor<T> out = value.detach();
    out.tape_ = this;
    out.node_ = nodes_.size() - 1;
    return out;
  }

  Tensor<T> record(OpKind kind, Shape shape, std::vector<T> values, const std::vector<const Tensor<T>*>& inputs,
                   BackwardFn backward) {
    Node node;
    node.kind = kind;
    node.size = values.size();
    node.backward = std::move(backward);
    for (const auto* in : inputs) {
      if (in->tracked() && in->tape() != this) throw ContractError("inputs recorded on different tapes");
      node.inputs.push_back(in->tracked() ? std::optional<std::size_t>(in->node()) : std::nullopt);
    }
    nodes_.push_back(std::move(node));
    Tensor<T> out(std::move(shape), std::move(values));
    out.tape_ = this;
    out.node_ = nodes_.size() - 1;
    return out;
  }

  /// Reverse sweep from a scalar loss. Nodes are visited once, in reverse
  /// recording order, which is a valid reverse topological order.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) throw ContractError("backward needs a scalar loss, got " + to_string(loss.shape()));
    if (loss.tape() != this) throw ContractError("loss was not recorded on this tape");
    for (auto& n : nodes_) n.grad.clear();
    nodes_[loss.node()].grad.assign(1, T(1));
    for (std::size_t i = loss.node() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || n.kind == OpKind::Leaf) continue;
      GradSpans grads;
      grads.reserve(n.inputs.size());
      for (const auto& in : n.inputs) {
        if (!in) {
          grads.emplace_back();
          continue;
        }
        Node& src = nodes_[*in];
        if (src.grad.empty()) src.grad.assign(src.size, T(0));
        grads.emplace_back(src.grad);
      }
      const auto& fault = testing::backward_fault();
      if (fault && *fault == n.kind) {
        std::vector<std::vector<T>> before;
        for (auto& g : grads) before.emplace_back(g.begin(), g.end());
        n.backward(n.grad, grads);
        for (std::size_t k = 0; k < grads.size(); ++k) {
          for (std::size_t j = 0; j < grads[k].size(); ++j) {
            grads[k][j] = before[k][j] + T(1.01) * (grads[k][j] - before[k][j]);
          }
        }
      } else {
        n.backward(n.grad, grads);
      }
    }
  }

  /// Gradient of the last backward() loss w.r.t. `t`, if `t` was reached.
  std::optional<Tensor<T>> grad(const Tensor<T>& t) const {
    if (t.tape() != this) return std::nullopt;
    const Node& n = nodes_[t.node()];
    if (n.grad.empty()) return std::nullopt;
    return Tensor<T>(t.shape(), n.grad);
  }

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::size_t node) const { return nodes_[node].kind; }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::optional<std::size_t>> inputs;
    std::size_t size = 0;
    BackwardFn backward;
    std::vector<T> grad;
  };
  std::vector<Node> nodes_;
};

}  // namespace vtf
