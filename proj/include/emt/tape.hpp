#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "emt/tensor.hpp"

namespace emt {

/// Define-by-run record of differentiable operations.
///
/// Ops append a node when a tape is active on the calling thread and at least
/// one operand requires a gradient. Nodes are appended in execution order, so
/// the list is topologically sorted by construction.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and walks the nodes in reverse. Leaf gradients
  /// accumulate across calls; intermediate gradients are recomputed each time.
  void backward(const Tensor<T>& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  static Tape* current();

  /// Makes a tape the active one for this thread while in scope.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<Node> nodes_;
};

/// True when an op on these operands must be recorded.
template <typename T>
bool recording(std::initializer_list<const Tensor<T>*> operands) {
  if (Tape<T>::current() == nullptr) return false;
  for (const auto* t : operands) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Runs the backward pass on the thread's active tape.
template <typename T>
void backward(const Tensor<T>& loss);

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace emt
