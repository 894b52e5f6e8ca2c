#include "emt/tape.hpp"

namespace emt {

namespace {

template <typename T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

}  // namespace

template <typename T>
Tape<T>* Tape<T>::current() {
  return active_tape<T>();
}

template <typename T>
Tape<T>::Scope::Scope(Tape& tape) : previous_(active_tape<T>()) {
  active_tape<T>() = &tape;
}

template <typename T>
Tape<T>::Scope::~Scope() {
  active_tape<T>() = previous_;
}

template <typename T>
void Tape<T>::record(std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn fn) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward called on a loss that is not on the tape");
  }
  bool on_tape = loss.is_leaf();
  for (auto& node : nodes_) {
    node.output.zero_grad();
    if (node.output.same_storage(loss)) on_tape = true;
  }
  if (!on_tape) throw std::logic_error("backward called on a loss recorded on another tape");

  Tensor<T> seed = loss;
  seed.grad_buffer()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  auto* tape = Tape<T>::current();
  if (tape == nullptr) throw std::logic_error("backward called with no active tape");
  tape->backward(loss);
}

template class Tape<float>;
template class Tape<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace emt
