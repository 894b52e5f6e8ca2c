#include <cstddef>

#include "emt/ops.hpp"
#include "op_util.hpp"

namespace emt {

using detail::record;
using detail::require;
using detail::require_same_shape;

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  const bool rec = recording<T>({&a, &b});
  auto out = Tensor<T>::make_result(a.shape(), rec);
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (rec) {
    record<T>({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      for (const Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a.shape(), b.shape());
  const bool rec = recording<T>({&a, &b});
  auto out = Tensor<T>::make_result(a.shape(), rec);
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (rec) {
    record<T>({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a.shape(), b.shape());
  const bool rec = recording<T>({&a, &b});
  auto out = Tensor<T>::make_result(a.shape(), rec);
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (rec) {
    record<T>({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        auto y = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        auto x = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
  const bool rec = recording<T>({&a});
  auto out = Tensor<T>::make_result(a.shape(), rec);
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * s;
  if (rec) {
    record<T>({a}, out, [a, out, s]() mutable {
      auto g = out.grad();
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_rank("add_channel_bias", x.shape(), 4);
  require(bias.shape() == Shape{x.dim(1)}, "add_channel_bias: bias shape " +
                                               shape_str(bias.shape()) + " does not match channels of " +
                                               shape_str(x.shape()));
  const bool rec = recording<T>({&x, &bias});
  auto out = Tensor<T>::make_result(x.shape(), rec);
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto o = out.mutable_data();
  auto in = x.data();
  auto b = bias.data();
  for (std::int64_t i = 0; i < n * c; ++i) {
    const T bv = b[static_cast<std::size_t>(i % c)];
    for (std::int64_t p = 0; p < hw; ++p) o[i * hw + p] = in[i * hw + p] + bv;
  }
  if (rec) {
    record<T>({x, bias}, out, [x, bias, out, n, c, hw]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::int64_t i = 0; i < n * c; ++i) {
          T s = 0;
          for (std::int64_t p = 0; p < hw; ++p) s += g[i * hw + p];
          gb[static_cast<std::size_t>(i % c)] += s;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const bool rec = recording<T>({&x});
  auto out = Tensor<T>::make_result({1}, rec);
  T s = 0;
  for (T v : x.data()) s += v;
  out.mutable_data()[0] = s;
  if (rec) {
    record<T>({x}, out, [x, out]() mutable {
      const T g = out.grad()[0];
      for (auto& v : x.grad_buffer()) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scalar_mul(sum(x), T(1) / static_cast<T>(x.numel()));
}

#define EMT_INSTANTIATE(T)                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> scalar_mul(const Tensor<T>&, T);                         \
  template Tensor<T> add_channel_bias(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> sum(const Tensor<T>&);                                   \
  template Tensor<T> mean(const Tensor<T>&);

EMT_INSTANTIATE(float)
EMT_INSTANTIATE(double)

}  // namespace emt
