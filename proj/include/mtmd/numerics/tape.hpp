#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mtmd/errors.hpp"
#include "mtmd/numerics/tensor.hpp"

namespace mtmd {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using Gradients = std::map<std::string, Tensor>;

/// Reverse-mode recording of one computation. Nodes are appended in
/// evaluation order, so reverse insertion order is a valid reverse
/// topological order and backward() visits every node once.
class Tape {
 public:
  /// Receives the gradient flowing into the node and pushes it to the inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, false, false});
    return Var(this, nodes_.size() - 1);
  }

  /// A learnable leaf. Its gradient is reported under `name` by backward().
  Var parameter(const std::string& name, Tensor value) {
    if (param_ids_.contains(name)) throw ContractError("parameter '" + name + "' registered twice on one tape");
    nodes_.push_back(Node{std::move(value), {}, name, {}, true, false});
    param_ids_.emplace(name, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
  }

  /// Records an op result. The backward closure is dropped when no input
  /// carries a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& v : inputs) {
      if (&v.tape() != this) throw ContractError("op mixes values from different tapes");
      needs = needs || nodes_[v.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, {}, needs ? std::move(fn) : BackwardFn{}, needs, false});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient accumulator of an input; allocated zero on first touch.
  Tensor& grad(const Var& v) {
    Node& n = nodes_.at(v.id());
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape(), 0.0);
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Gradients of a scalar `loss` with respect to every parameter leaf.
  /// Parameters the loss does not depend on get zero gradients.
  Gradients backward(const Var& loss) {
    if (&loss.tape() != this) throw ContractError("backward on a value from another tape");
    if (nodes_[loss.id()].value.size() != 1)
      throw ContractError("backward requires a scalar root, got shape " + shape_str(nodes_[loss.id()].value.shape()));
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor();
    }
    grad(loss).fill(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
    Gradients out;
    for (const auto& [name, id] : param_ids_) {
      const Node& n = nodes_[id];
      out.emplace(name, n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0));
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::string param;
    BackwardFn backward;
    bool requires_grad;
    bool has_grad;
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> param_ids_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace mtmd
