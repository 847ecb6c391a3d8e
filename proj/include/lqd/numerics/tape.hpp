#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lqd/numerics/tensor.hpp"

namespace lqd {

/// Gradient buffer of one parent; empty span when the parent is a constant.
using GradSlot = std::span<double>;

/// Receives the upstream gradient of a node and accumulates into its parents.
using BackwardFn = std::function<void(std::span<const double> upstream, std::span<GradSlot> parents)>;

class Gradients {
 public:
  explicit Gradients(std::vector<std::vector<double>> per_node) : per_node_(std::move(per_node)) {}

  /// Gradient of the root with respect to `t`; zeros when `t` does not reach the root.
  Tensor of(const Tensor& t) const {
    if (!t.attached()) throw std::invalid_argument("Gradients::of: tensor is not tape-attached");
    const auto& g = per_node_.at(t.node());
    if (g.empty()) return Tensor::zeros(t.shape());
    return Tensor(t.shape(), g);
  }

  bool reached(const Tensor& t) const { return t.attached() && !per_node_.at(t.node()).empty(); }

 private:
  std::vector<std::vector<double>> per_node_;
};

/// Define-by-run gradient tape.
///
/// Nodes are appended as ops execute, so parents always precede children and
/// a reverse sweep is a valid topological order. A tape belongs to a single
/// thread; run independent tapes for parallel work.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Register a leaf. The returned tensor shares storage with `value`.
  Tensor watch(const Tensor& value) {
    nodes_.push_back(Node{value.size(), {}, {}});
    Tensor t = value.detach();
    t.tape_ = this;
    t.node_ = nodes_.size() - 1;
    return t;
  }

  /// Record a derived value. Constants among `inputs` get no gradient.
  Tensor record(Tensor value, std::span<const Tensor> inputs, BackwardFn fn) {
    std::vector<std::optional<std::size_t>> parents;
    parents.reserve(inputs.size());
    for (const auto& in : inputs) {
      if (in.attached()) {
        if (in.tape() != this) throw std::invalid_argument("Tape::record: inputs from different tapes");
        parents.emplace_back(in.node());
      } else {
        parents.emplace_back(std::nullopt);
      }
    }
    nodes_.push_back(Node{value.size(), std::move(parents), std::move(fn)});
    Tensor t = value.detach();
    t.tape_ = this;
    t.node_ = nodes_.size() - 1;
    return t;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar root. Each node is visited once; fan-in sums.
  Gradients backward(const Tensor& root) const {
    if (!root.attached() || root.tape() != this) {
      throw std::invalid_argument("backward: root is not attached to this tape");
    }
    if (root.size() != 1) {
      throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root.shape()));
    }
    std::vector<std::vector<double>> grads(nodes_.size());
    grads[root.node()] = {1.0};
    std::vector<GradSlot> slots;
    for (std::size_t i = root.node() + 1; i-- > 0;) {
      const Node& node = nodes_[i];
      if (grads[i].empty() || !node.fn) continue;
      slots.clear();
      for (const auto& p : node.parents) {
        if (!p) {
          slots.emplace_back();
          continue;
        }
        auto& g = grads[*p];
        if (g.empty()) g.assign(nodes_[*p].size, 0.0);
        slots.emplace_back(g);
      }
      node.fn(grads[i], slots);
    }
    return Gradients(std::move(grads));
  }

 private:
  struct Node {
    std::size_t size;
    std::vector<std::optional<std::size_t>> parents;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
};

/// Convenience for ops: record when any input is attached, otherwise return
/// the plain value.
inline Tensor make_result(Tensor value, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (!in.attached()) continue;
    if (tape && tape != in.tape()) throw std::invalid_argument("op: inputs from different tapes");
    tape = in.tape();
  }
  if (!tape) return value;
  std::vector<Tensor> ins(inputs);
  return tape->record(std::move(value), ins, std::move(fn));
}

inline Gradients backward(const Tensor& root) {
  if (!root.attached()) throw std::invalid_argument("backward: root is not tape-attached");
  return root.tape()->backward(root);
}

}  // namespace lqd
