#pragma once

// Finite-difference verification of tape gradients.

#include <functional>

#include "spikewarp/tape.hpp"

namespace spikewarp {

// f builds a scalar loss on the given tape from the leaf ids it is handed.
// Returns max over all elements of all inputs of
//   |g_tape - g_fd| / max(1, |g_fd|)
// where g_fd is the central difference (f(x+h) - f(x-h)) / 2h.
template <class T>
double grad_check(const std::function<typename Tape<T>::Id(Tape<T>&, const std::vector<typename Tape<T>::Id>&)>& f,
                  std::vector<Tensor<T>> inputs, double h = 1e-5) {
  using Id = typename Tape<T>::Id;

  auto eval = [&](const std::vector<Tensor<T>>& xs, std::vector<Tensor<T>>* grads) {
    Tape<T> tape;
    std::vector<Id> ids;
    ids.reserve(xs.size());
    for (const auto& x : xs) ids.push_back(tape.leaf(x));
    Id root = f(tape, ids);
    if (grads) {
      tape.backward(root);
      grads->clear();
      for (Id id : ids) grads->push_back(tape.grad(id));
    }
    return static_cast<double>(tape.value(root)[0]);
  };

  std::vector<Tensor<T>> tape_grads;
  eval(inputs, &tape_grads);

  double max_rel = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    tape_grads[k].require_finite("gradient");
    for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
      const T orig = inputs[k][i];
      inputs[k][i] = static_cast<T>(orig + h);
      const double fp = eval(inputs, nullptr);
      inputs[k][i] = static_cast<T>(orig - h);
      const double fm = eval(inputs, nullptr);
      inputs[k][i] = orig;
      const double g_fd = (fp - fm) / (2.0 * h);
      const double g_tape = static_cast<double>(tape_grads[k][i]);
      const double rel = std::abs(g_tape - g_fd) / std::max(1.0, std::abs(g_fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace spikewarp
