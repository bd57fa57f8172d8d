#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

#include "fast/nn/tensor.hpp"

namespace fast::nn {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Adjoint rule of one primitive: receives the gradient of the output and one
/// accumulator per input (nullptr when that input needs no gradient).
using Adjoint = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

/// Linear record of primitive applications. Nodes are appended in evaluation
/// order, so the reverse of insertion order is a valid reverse topological
/// order for adjoint replay.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is wanted.
  Var variable(Tensor value) { return push(std::move(value), {}, nullptr, true); }

  /// Leaf treated as a constant; no adjoint flows into it.
  Var constant(Tensor value) { return push(std::move(value), {}, nullptr, false); }

  Var record(Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint) {
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    bool needs_grad = false;
    for (const Var& in : inputs) {
      check_owned(in);
      ids.push_back(in.id());
      needs_grad = needs_grad || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), std::move(ids), needs_grad ? std::move(adjoint) : Adjoint{},
                needs_grad);
  }

  const Tensor& value(const Var& v) const {
    check_owned(v);
    return nodes_[v.id()].value;
  }

  bool requires_grad(const Var& v) const {
    check_owned(v);
    return nodes_[v.id()].requires_grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Replays adjoints from a scalar loss. Each recorded primitive is visited
  /// at most once, newest first.
  void backward(const Var& loss) {
    check_owned(loss);
    if (nodes_[loss.id()].value.size() != 1) {
      throw ShapeError("backward() needs a scalar loss, got " +
                       to_string(nodes_[loss.id()].value.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor{};
    Node& root = nodes_[loss.id()];
    root.grad = Tensor(root.value.shape(), 1.0);

    std::vector<Tensor*> grad_in;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.adjoint || n.grad.empty()) continue;
      grad_in.clear();
      for (std::size_t in : n.inputs) {
        Node& src = nodes_[in];
        if (!src.requires_grad) {
          grad_in.push_back(nullptr);
          continue;
        }
        if (src.grad.empty()) src.grad = Tensor::zeros_like(src.value);
        grad_in.push_back(&src.grad);
      }
      n.adjoint(n.grad, grad_in);
    }
    has_grads_ = true;
  }

  /// Gradient of the last backward() loss with respect to `v`. Zeros when the
  /// loss does not depend on `v`.
  Tensor grad(const Var& v) const {
    check_owned(v);
    if (!has_grads_) throw std::logic_error("grad() called before backward()");
    const Node& n = nodes_[v.id()];
    if (!n.requires_grad) {
      throw std::invalid_argument("gradient requested for a constant node");
    }
    return n.grad.empty() ? Tensor::zeros_like(n.value) : n.grad;
  }

  /// Runs backward() and collects d(loss)/d(target) for every target.
  std::vector<Tensor> gradients(const Var& loss, std::span<const Var> targets) {
    for (const Var& t : targets) check_owned(t);
    backward(loss);
    std::vector<Tensor> out;
    out.reserve(targets.size());
    for (const Var& t : targets) out.push_back(grad(t));
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    Adjoint adjoint;
    bool requires_grad = false;
  };

  Var push(Tensor value, std::vector<std::size_t> inputs, Adjoint adjoint, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(inputs), std::move(adjoint),
                          requires_grad});
    return Var(this, nodes_.size() - 1);
  }

  void check_owned(const Var& v) const {
    if (v.tape() != this || v.id() >= nodes_.size()) {
      throw std::invalid_argument("variable is not recorded on this tape");
    }
  }

  std::deque<Node> nodes_;
  bool has_grads_ = false;
};

inline const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on an unbound Var");
  return tape_->value(*this);
}

}  // namespace fast::nn
