#pragma once

// Reverse-mode automatic differentiation over tensors.
//
// The tape records operations in topological order (every input id precedes
// its consumer); backward() walks the records once in reverse. A tape is
// built single-threaded per training step and discarded afterwards.

#include <functional>
#include <utility>
#include <vector>

#include "spikewarp/tensor.hpp"

namespace spikewarp {

template <class T>
class Tape {
 public:
  using Id = std::int32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // BackwardFn receives the tape and the id of the node whose output gradient
  // is already accumulated; it must scatter into the parents' gradients.
  using BackwardFn = std::function<void(Tape&, Id)>;

  Id leaf(Tensor<T> value) { return push(std::move(value), {}, nullptr, "leaf"); }

  Id push(Tensor<T> value, std::vector<Id> parents, BackwardFn backward,
          const char* op_name = "op") {
    value.require_finite(op_name);
    for (Id p : parents)
      if (p < 0 || p >= static_cast<Id>(nodes_.size()))
        throw std::logic_error("tape parent id out of order");
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, std::move(parents), std::move(backward)});
    return static_cast<Id>(nodes_.size() - 1);
  }

  const Tensor<T>& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  Tensor<T>& grad(Id id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0 && n.value.numel() > 0) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  // Seeds d(root)/d(root) = 1 and accumulates gradients into every node.
  // root must be a scalar. Each node's backward rule runs exactly once.
  void backward(Id root) {
    if (!value(root).is_scalar()) throw std::invalid_argument("backward root must be scalar");
    grad(root)[0] = T(1);
    for (Id id = root; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.backward || n.grad.numel() == 0) continue;
      n.grad.require_finite("gradient");
      n.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // lazily allocated, zero-initialized
    std::vector<Id> parents;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace spikewarp
