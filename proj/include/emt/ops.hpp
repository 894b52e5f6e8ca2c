#pragma once

#include <cstdint>
#include <vector>

#include "emt/tensor.hpp"

// Differentiable operators over Tensor<T>. Every op records itself on the
// thread's active Tape when an operand requires a gradient.
//
// Broadcasting is never implicit; add_channel_bias is the single broadcast
// form (a [C] vector over the spatial axes of an [N,C,H,W] tensor).

namespace emt {

// Elementwise. Shapes must match exactly.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scalar_mul(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias);

// Reductions to a scalar of shape {1}.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

/// [m,k]·[k,n] -> [m,n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Batched product over rank-3 operands with optional transposition of the
/// trailing two axes: out[i] = op(a[i])·op(b[i]).
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a, bool transpose_b);

/// 3x3 convolution, zero padding 1, stride 1. w is [Cout,Cin,3,3], b is [Cout].
template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Per-position linear map over channels. w is [Cout,Cin]; b may be undefined.
template <typename T>
Tensor<T> conv2d_1x1(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Normalizes each (n,h,w) channel vector, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

/// GELU, tanh form: 0.5·x·(1 + tanh(sqrt(2/pi)·(x + 0.044715·x³))).
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

/// Softmax along the last axis with max subtraction.
template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x);

/// Cyclic shift of the two spatial axes: out[h][w] = x[(h - dh) mod H][(w - dw) mod W].
template <typename T> Tensor<T> roll2d(const Tensor<T>& x, int shift_h, int shift_w);

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<std::int64_t>& sizes);
template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

/// [N,C,H,W] -> [N·nWin, C, win.h·win.w]; windows in row-major order, pixels
/// row-major inside each window.
template <typename T> Tensor<T> window_partition(const Tensor<T>& x, const WindowSpec& win);
/// Inverse of window_partition for an [n,C,h,w] target.
template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, const WindowSpec& win, std::int64_t n,
                       std::int64_t h, std::int64_t w);

/// Depth-to-space: out[n][c][h·r+i][w·r+j] = x[n][c·r²+i·r+j][h][w].
template <typename T> Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);
/// Space-to-depth, the exact inverse of pixel_shuffle.
template <typename T> Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);

/// Same data, new shape (element count must match).
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Mirror padding on the bottom and right edges. Pads may exceed the extent;
/// indices reflect periodically and a size-1 axis repeats its only row.
template <typename T> Tensor<T> pad_reflect(const Tensor<T>& x, int pad_bottom, int pad_right);

/// Spatial crop of [N,C,H,W] to rows [top, top+h) and cols [left, left+w).
template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::int64_t top, std::int64_t left, std::int64_t h,
               std::int64_t w);

/// Mirror index used by pad_reflect.
std::int64_t reflect_index(std::int64_t i, std::int64_t n);

}  // namespace emt
