#include "emt/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace emt {

const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

std::int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string window_str(const WindowSpec& win) {
  return std::to_string(win.h) + "x" + std::to_string(win.w);
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got shape " + shape_str(shape));
  }
  for (auto e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, bool requires_grad) {
  check_shape(shape);
  auto s = std::make_shared<TensorStorage<T>>();
  s->data.assign(static_cast<std::size_t>(emt::numel(shape)), T(0));
  s->shape = std::move(shape);
  s->requires_grad = requires_grad;
  s->leaf = !requires_grad;
  return Tensor(std::move(s));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto t = make_result(std::move(shape), requires_grad);
  t.s_->leaf = true;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  std::fill(t.s_->data.begin(), t.s_->data.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != emt::numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto s = std::make_shared<TensorStorage<T>>();
  s->shape = std::move(shape);
  s->data.assign(values.begin(), values.end());
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
std::int64_t Tensor<T>::dim(int i) const {
  if (i < 0) i += rank();
  if (i < 0 || i >= rank()) {
    throw ShapeError("dim " + std::to_string(i) + " out of range for shape " + shape_str(shape()));
  }
  return s_->shape[static_cast<std::size_t>(i)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar shape " + shape_str(shape()));
  return s_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) {
    throw ShapeError("index rank mismatch for shape " + shape_str(shape()));
  }
  std::int64_t flat = 0;
  std::size_t d = 0;
  for (auto i : index) {
    const auto extent = s_->shape[d++];
    if (i < 0 || i >= extent) throw ShapeError("index out of range for " + shape_str(shape()));
    flat = flat * extent + i;
  }
  return s_->data[static_cast<std::size_t>(flat)];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!s_->leaf) throw std::logic_error("requires_grad can only be changed on leaf tensors");
  s_->requires_grad = on;
  if (!on) s_->grad.clear();
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
  if (!s_->requires_grad) {
    throw std::logic_error("grad requested for a tensor that does not require grad");
  }
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto s = std::make_shared<TensorStorage<T>>();
  s->shape = s_->shape;
  s->data = s_->data;
  return Tensor(std::move(s));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace emt
