#pragma once

#include <string>

#include "emt/tape.hpp"
#include "emt/tensor.hpp"

namespace emt::detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  require(a == b, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline void require_rank(const char* op, const Shape& s, std::size_t rank) {
  require(s.size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + shape_str(s));
}

template <typename T, typename Fn>
void record(std::vector<Tensor<T>> inputs, const Tensor<T>& out, Fn&& fn) {
  Tape<T>::current()->record(std::move(inputs), out, std::forward<Fn>(fn));
}

}  // namespace emt::detail
