// Matrix products and convolutions. The GEMM kernels are Eigen maps over
// the row-major tensor buffers; everything else is plain loops.

#include <Eigen/Core>

#include "emt/ops.hpp"
#include "op_util.hpp"

namespace emt {

using detail::record;
using detail::require;
using detail::require_rank;

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const Mat<T>>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;

template <typename T>
MapC<T> cmap(std::span<const T> s, std::int64_t offset, std::int64_t rows, std::int64_t cols) {
  return MapC<T>(s.data() + offset, rows, cols);
}

template <typename T>
MapM<T> mmap(std::span<T> s, std::int64_t offset, std::int64_t rows, std::int64_t cols) {
  return MapM<T>(s.data() + offset, rows, cols);
}

// cols[(ci*9 + ky*3 + kx), y*W + x] = x[ci, y+ky-1, x+kx-1], zero outside.
template <typename T>
void im2col3x3(const T* x, std::int64_t c, std::int64_t h, std::int64_t w, T* cols) {
  const std::int64_t hw = h * w;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const T* plane = x + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + (ci * 9 + ky * 3 + kx) * hw;
        for (std::int64_t y = 0; y < h; ++y) {
          const std::int64_t sy = y + ky - 1;
          T* dst = row + y * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + sy * w;
          for (std::int64_t xx = 0; xx < w; ++xx) {
            const std::int64_t sx = xx + kx - 1;
            dst[xx] = (sx < 0 || sx >= w) ? T(0) : src[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* cols, std::int64_t c, std::int64_t h, std::int64_t w, T* gx) {
  const std::int64_t hw = h * w;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    T* plane = gx + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + (ci * 9 + ky * 3 + kx) * hw;
        for (std::int64_t y = 0; y < h; ++y) {
          const std::int64_t sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + y * w;
          T* dst = plane + sy * w;
          for (std::int64_t xx = 0; xx < w; ++xx) {
            const std::int64_t sx = xx + kx - 1;
            if (sx >= 0 && sx < w) dst[sx] += src[xx];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  const bool rec = recording<T>({&a, &b});
  auto out = Tensor<T>::make_result({m, n}, rec);
  mmap<T>(out.mutable_data(), 0, m, n).noalias() =
      cmap<T>(a.data(), 0, m, k) * cmap<T>(b.data(), 0, k, n);
  if (rec) {
    record<T>({a, b}, out, [a, b, out, m, k, n]() mutable {
      auto g = cmap<T>(out.grad(), 0, m, n);
      if (a.requires_grad()) {
        mmap<T>(a.grad_buffer(), 0, m, k).noalias() += g * cmap<T>(b.data(), 0, k, n).transpose();
      }
      if (b.requires_grad()) {
        mmap<T>(b.grad_buffer(), 0, k, n).noalias() += cmap<T>(a.data(), 0, m, k).transpose() * g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb) {
  require_rank("bmm", a.shape(), 3);
  require_rank("bmm", b.shape(), 3);
  const std::int64_t batch = a.dim(0);
  require(b.dim(0) == batch, "bmm: batch mismatch " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
  const std::int64_t ar = a.dim(1), ac = a.dim(2), br = b.dim(1), bc = b.dim(2);
  const std::int64_t m = ta ? ac : ar, k = ta ? ar : ac;
  const std::int64_t n = tb ? br : bc, kb = tb ? bc : br;
  require(k == kb, "bmm: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
  const bool rec = recording<T>({&a, &b});
  auto out = Tensor<T>::make_result({batch, m, n}, rec);
  auto o = out.mutable_data();
  for (std::int64_t i = 0; i < batch; ++i) {
    auto am = cmap<T>(a.data(), i * ar * ac, ar, ac);
    auto bm = cmap<T>(b.data(), i * br * bc, br, bc);
    auto om = mmap<T>(o, i * m * n, m, n);
    if (ta && tb) om.noalias() = am.transpose() * bm.transpose();
    else if (ta) om.noalias() = am.transpose() * bm;
    else if (tb) om.noalias() = am * bm.transpose();
    else om.noalias() = am * bm;
  }
  if (rec) {
    record<T>({a, b}, out, [a, b, out, ta, tb, batch, ar, ac, br, bc, m, n]() mutable {
      auto g = out.grad();
      std::span<T> ga, gb;
      if (a.requires_grad()) ga = a.grad_buffer();
      if (b.requires_grad()) gb = b.grad_buffer();
      for (std::int64_t i = 0; i < batch; ++i) {
        auto gm = cmap<T>(g, i * m * n, m, n);
        auto am = cmap<T>(a.data(), i * ar * ac, ar, ac);
        auto bm = cmap<T>(b.data(), i * br * bc, br, bc);
        if (!ga.empty()) {
          auto gam = mmap<T>(ga, i * ar * ac, ar, ac);
          // d op(a) = g · op(b)^T
          if (ta) {
            if (tb) gam.noalias() += bm.transpose() * gm.transpose();
            else gam.noalias() += bm * gm.transpose();
          } else {
            if (tb) gam.noalias() += gm * bm;
            else gam.noalias() += gm * bm.transpose();
          }
        }
        if (!gb.empty()) {
          auto gbm = mmap<T>(gb, i * br * bc, br, bc);
          // d op(b) = op(a)^T · g
          if (tb) {
            if (ta) gbm.noalias() += gm.transpose() * am.transpose();
            else gbm.noalias() += gm.transpose() * am;
          } else {
            if (ta) gbm.noalias() += am * gm;
            else gbm.noalias() += am.transpose() * gm;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank("conv2d_3x3", x.shape(), 4);
  require_rank("conv2d_3x3", w.shape(), 4);
  const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t cout = w.dim(0);
  require(w.dim(1) == cin && w.dim(2) == 3 && w.dim(3) == 3,
          "conv2d_3x3: weight " + shape_str(w.shape()) + " does not fit input " +
              shape_str(x.shape()));
  require(b.shape() == Shape{cout}, "conv2d_3x3: bias " + shape_str(b.shape()) +
                                        " does not match " + std::to_string(cout) + " outputs");
  const bool rec = recording<T>({&x, &w, &b});
  const std::int64_t hw = h * wd, kk = cin * 9;
  auto out = Tensor<T>::make_result({n, cout, h, wd}, rec);
  auto o = out.mutable_data();
  // The column buffers are kept for the backward pass when recording.
  auto cols = std::make_shared<Buffer<T>>(static_cast<std::size_t>((rec ? n : 1) * kk * hw));
  auto wm = cmap<T>(w.data(), 0, cout, kk);
  auto bias = b.data();
  for (std::int64_t i = 0; i < n; ++i) {
    T* cbuf = cols->data() + (rec ? i * kk * hw : 0);
    im2col3x3(x.data().data() + i * cin * hw, cin, h, wd, cbuf);
    auto om = mmap<T>(o, i * cout * hw, cout, hw);
    om.noalias() = wm * MapC<T>(cbuf, kk, hw);
    for (std::int64_t co = 0; co < cout; ++co) om.row(co).array() += bias[co];
  }
  if (rec) {
    record<T>({x, w, b}, out, [x, w, b, out, cols, n, cin, cout, h, wd, hw, kk]() mutable {
      auto g = out.grad();
      Buffer<T> dcols;
      for (std::int64_t i = 0; i < n; ++i) {
        auto gm = cmap<T>(g, i * cout * hw, cout, hw);
        MapC<T> cm(cols->data() + i * kk * hw, kk, hw);
        if (w.requires_grad()) mmap<T>(w.grad_buffer(), 0, cout, kk).noalias() += gm * cm.transpose();
        if (b.requires_grad()) {
          auto gb = b.grad_buffer();
          for (std::int64_t co = 0; co < cout; ++co) gb[co] += gm.row(co).sum();
        }
        if (x.requires_grad()) {
          dcols.resize(static_cast<std::size_t>(kk * hw));
          MapM<T>(dcols.data(), kk, hw).noalias() = cmap<T>(w.data(), 0, cout, kk).transpose() * gm;
          col2im3x3(dcols.data(), cin, h, wd, x.grad_buffer().data() + i * cin * hw);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_1x1(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank("conv2d_1x1", x.shape(), 4);
  require_rank("conv2d_1x1", w.shape(), 2);
  const std::int64_t n = x.dim(0), cin = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::int64_t cout = w.dim(0);
  require(w.dim(1) == cin, "conv2d_1x1: weight " + shape_str(w.shape()) + " does not fit input " +
                               shape_str(x.shape()));
  const bool has_bias = b.defined();
  if (has_bias) {
    require(b.shape() == Shape{cout}, "conv2d_1x1: bias " + shape_str(b.shape()) +
                                          " does not match " + std::to_string(cout) + " outputs");
  }
  const bool rec = recording<T>({&x, &w, has_bias ? &b : nullptr});
  auto out = Tensor<T>::make_result({n, cout, x.dim(2), x.dim(3)}, rec);
  auto o = out.mutable_data();
  auto wm = cmap<T>(w.data(), 0, cout, cin);
  for (std::int64_t i = 0; i < n; ++i) {
    auto om = mmap<T>(o, i * cout * hw, cout, hw);
    om.noalias() = wm * cmap<T>(x.data(), i * cin * hw, cin, hw);
    if (has_bias) {
      auto bias = b.data();
      for (std::int64_t co = 0; co < cout; ++co) om.row(co).array() += bias[co];
    }
  }
  if (rec) {
    std::vector<Tensor<T>> inputs{x, w};
    if (has_bias) inputs.push_back(b);
    record<T>(std::move(inputs), out, [x, w, b, out, has_bias, n, cin, cout, hw]() mutable {
      auto g = out.grad();
      for (std::int64_t i = 0; i < n; ++i) {
        auto gm = cmap<T>(g, i * cout * hw, cout, hw);
        if (w.requires_grad()) {
          mmap<T>(w.grad_buffer(), 0, cout, cin).noalias() +=
              gm * cmap<T>(x.data(), i * cin * hw, cin, hw).transpose();
        }
        if (has_bias && b.requires_grad()) {
          auto gb = b.grad_buffer();
          for (std::int64_t co = 0; co < cout; ++co) gb[co] += gm.row(co).sum();
        }
        if (x.requires_grad()) {
          mmap<T>(x.grad_buffer(), i * cin * hw, cin, hw).noalias() +=
              cmap<T>(w.data(), 0, cout, cin).transpose() * gm;
        }
      }
    });
  }
  return out;
}

#define EMT_INSTANTIATE(T)                                                                    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool, bool);                     \
  template Tensor<T> conv2d_3x3(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> conv2d_1x1(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

EMT_INSTANTIATE(float)
EMT_INSTANTIATE(double)

}  // namespace emt
