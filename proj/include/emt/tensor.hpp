#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emt {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

const char* dtype_name(DType d);

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One striped-window geometry in pixels.
struct WindowSpec {
  int h = 1;
  int w = 1;

  WindowSpec transposed() const { return {w, h}; }
  int area() const { return h * w; }
  bool operator==(const WindowSpec&) const = default;
};

std::string window_str(const WindowSpec& win);

/// 64-byte aligned allocation. Eigen's vectorized reductions pick their
/// summation order from the runtime address, so a fixed alignment is what
/// makes results bit-reproducible across runs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <typename T>
struct TensorStorage {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;  // empty until the backward pass reaches this tensor
  bool requires_grad = false;
  bool leaf = true;
};

/// Dense row-major tensor of rank 1..4 with shared storage.
///
/// Copies alias the same storage. Values are treated as immutable once an op
/// has consumed them; the only sanctioned in-place writes are parameter
/// updates made between forward/backward passes.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }

  const Shape& shape() const { return s_->shape; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  std::int64_t dim(int i) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(s_->data.size()); }
  DType dtype() const { return dtype_of<T>(); }

  std::span<const T> data() const { return s_->data; }
  std::span<T> mutable_data() { return s_->data; }
  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return s_->leaf; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  /// Gradient buffer, allocated as zeros on first access.
  std::span<T> grad_buffer() const;
  void zero_grad() const { s_->grad.clear(); }

  /// Value copy with no tape history.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  // Used by ops to build results; not part of the everyday API.
  static Tensor make_result(Shape shape, bool requires_grad);

 private:
  explicit Tensor(std::shared_ptr<TensorStorage<T>> s) : s_(std::move(s)) {}
  std::shared_ptr<TensorStorage<T>> s_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace emt
