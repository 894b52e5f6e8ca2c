#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "emt/ops.hpp"
#include "op_util.hpp"

namespace emt {

using detail::record;
using detail::require;

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  detail::require_rank("layer_norm", x.shape(), 4);
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
          "layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
              " do not match channels of " + shape_str(x.shape()));
  const bool rec = recording<T>({&x, &gamma, &beta});
  auto out = Tensor<T>::make_result(x.shape(), rec);
  auto normed = std::make_shared<Buffer<T>>(x.data().begin(), x.data().end());
  auto rstd = std::make_shared<Buffer<T>>(static_cast<std::size_t>(n * hw));
  auto& xh = *normed;
  auto o = out.mutable_data();
  auto g = gamma.data();
  auto bt = beta.data();
  Buffer<T> mu(static_cast<std::size_t>(hw)), var(static_cast<std::size_t>(hw));
  const T inv_c = T(1) / static_cast<T>(c);
  for (std::int64_t i = 0; i < n; ++i) {
    T* base = xh.data() + i * c * hw;
    std::fill(mu.begin(), mu.end(), T(0));
    std::fill(var.begin(), var.end(), T(0));
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* row = base + ch * hw;
      for (std::int64_t p = 0; p < hw; ++p) mu[p] += row[p];
    }
    for (auto& m : mu) m *= inv_c;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* row = base + ch * hw;
      for (std::int64_t p = 0; p < hw; ++p) {
        const T d = row[p] - mu[p];
        var[p] += d * d;
      }
    }
    T* rs = rstd->data() + i * hw;
    for (std::int64_t p = 0; p < hw; ++p) rs[p] = T(1) / std::sqrt(var[p] * inv_c + eps);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T* row = base + ch * hw;
      T* orow = o.data() + (i * c + ch) * hw;
      for (std::int64_t p = 0; p < hw; ++p) {
        row[p] = (row[p] - mu[p]) * rs[p];
        orow[p] = row[p] * g[ch] + bt[ch];
      }
    }
  }
  if (rec) {
    record<T>({x, gamma, beta}, out, [x, gamma, beta, out, normed, rstd, n, c, hw]() mutable {
      auto gy = out.grad();
      const auto& xh = *normed;
      auto gm = gamma.data();
      if (gamma.requires_grad() || beta.requires_grad()) {
        std::span<T> gg, gb;
        if (gamma.requires_grad()) gg = gamma.grad_buffer();
        if (beta.requires_grad()) gb = beta.grad_buffer();
        for (std::int64_t i = 0; i < n; ++i) {
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t off = (i * c + ch) * hw;
            T sg = 0, sb = 0;
            for (std::int64_t p = 0; p < hw; ++p) {
              sg += gy[off + p] * xh[off + p];
              sb += gy[off + p];
            }
            if (!gg.empty()) gg[ch] += sg;
            if (!gb.empty()) gb[ch] += sb;
          }
        }
      }
      if (!x.requires_grad()) return;
      auto gx = x.grad_buffer();
      const T inv_c = T(1) / static_cast<T>(c);
      Buffer<T> m1(static_cast<std::size_t>(hw)), m2(static_cast<std::size_t>(hw));
      for (std::int64_t i = 0; i < n; ++i) {
        std::fill(m1.begin(), m1.end(), T(0));
        std::fill(m2.begin(), m2.end(), T(0));
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const std::int64_t off = (i * c + ch) * hw;
          for (std::int64_t p = 0; p < hw; ++p) {
            const T d = gy[off + p] * gm[ch];
            m1[p] += d;
            m2[p] += d * xh[off + p];
          }
        }
        const T* rs = rstd->data() + i * hw;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const std::int64_t off = (i * c + ch) * hw;
          for (std::int64_t p = 0; p < hw; ++p) {
            const T d = gy[off + p] * gm[ch];
            gx[off + p] += rs[p] * (d - m1[p] * inv_c - xh[off + p] * m2[p] * inv_c);
          }
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T>
constexpr T kGeluSqrt2OverPi = T(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
constexpr T kGeluCubic = T(0.044715);

}  // namespace

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
  using Map = Eigen::Map<const Array>;
  const bool rec = recording<T>({&x});
  auto out = Tensor<T>::make_result(x.shape(), rec);
  const Map v(x.data().data(), x.numel());
  // Eigen's tanh is vectorized; libm's scalar tanh dominated training time.
  auto t = std::make_shared<Array>((kGeluSqrt2OverPi<T> * (v + kGeluCubic<T> * v.cube())).tanh());
  Eigen::Map<Array>(out.mutable_data().data(), x.numel()) = T(0.5) * v * (T(1) + *t);
  if (rec) {
    record<T>({x}, out, [x, out, t]() mutable {
      const Map g(out.grad().data(), out.numel());
      const Map v(x.data().data(), x.numel());
      Eigen::Map<Array> gx(x.grad_buffer().data(), x.numel());
      const Array du = kGeluSqrt2OverPi<T> * (T(1) + T(3) * kGeluCubic<T> * v.square());
      gx += g * (T(0.5) * (T(1) + *t) + T(0.5) * v * (T(1) - t->square()) * du);
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const std::int64_t len = x.dim(-1);
  const std::int64_t rows = x.numel() / len;
  const bool rec = recording<T>({&x});
  auto out = Tensor<T>::make_result(x.shape(), rec);
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* src = in.data() + r * len;
    T* dst = o.data() + r * len;
    T mx = src[0];
    for (std::int64_t j = 1; j < len; ++j) mx = std::max(mx, src[j]);
    T s = 0;
    for (std::int64_t j = 0; j < len; ++j) {
      dst[j] = std::exp(src[j] - mx);
      s += dst[j];
    }
    const T inv = T(1) / s;
    for (std::int64_t j = 0; j < len; ++j) dst[j] *= inv;
  }
  if (rec) {
    record<T>({x}, out, [x, out, rows, len]() mutable {
      auto g = out.grad();
      auto y = out.data();
      auto gx = x.grad_buffer();
      for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t off = r * len;
        T dot = 0;
        for (std::int64_t j = 0; j < len; ++j) dot += g[off + j] * y[off + j];
        for (std::int64_t j = 0; j < len; ++j) gx[off + j] += y[off + j] * (g[off + j] - dot);
      }
    });
  }
  return out;
}

#define EMT_INSTANTIATE(T)                                                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);   \
  template Tensor<T> gelu(const Tensor<T>&);                                                \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);

EMT_INSTANTIATE(float)
EMT_INSTANTIATE(double)

}  // namespace emt
