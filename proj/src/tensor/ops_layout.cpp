// Pure data-movement ops. Each is expressed as a gather through an index
// table; the backward pass scatters gradients through the same table.

#include <memory>
#include <numeric>

#include "emt/ops.hpp"
#include "op_util.hpp"

namespace emt {

using detail::record;
using detail::require;
using detail::require_rank;

namespace {

using Index = std::vector<std::int64_t>;

std::int64_t wrap(std::int64_t i, std::int64_t n) {
  const std::int64_t r = i % n;
  return r < 0 ? r + n : r;
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape out_shape, std::shared_ptr<const Index> idx) {
  const bool rec = recording<T>({&x});
  auto out = Tensor<T>::make_result(std::move(out_shape), rec);
  auto o = out.mutable_data();
  auto in = x.data();
  const auto& ix = *idx;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[static_cast<std::size_t>(ix[i])];
  if (rec) {
    record<T>({x}, out, [x, out, idx]() mutable {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      const auto& ix = *idx;
      for (std::size_t i = 0; i < g.size(); ++i) gx[static_cast<std::size_t>(ix[i])] += g[i];
    });
  }
  return out;
}

// Builds an index for a rank-4 spatial remap: out[n][c][y][x] = in[n][c][fy(y)][fx(x)].
template <typename FY, typename FX>
std::shared_ptr<const Index> spatial_index(const Shape& in, std::int64_t oh, std::int64_t ow,
                                           FY fy, FX fx) {
  const std::int64_t planes = in[0] * in[1], ih = in[2], iw = in[3];
  auto idx = std::make_shared<Index>(static_cast<std::size_t>(planes * oh * ow));
  std::vector<std::int64_t> cols(static_cast<std::size_t>(ow));
  for (std::int64_t x = 0; x < ow; ++x) cols[x] = fx(x);
  std::size_t k = 0;
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t y = 0; y < oh; ++y) {
      const std::int64_t row = (p * ih + fy(y)) * iw;
      for (std::int64_t x = 0; x < ow; ++x) (*idx)[k++] = row + cols[x];
    }
  }
  return idx;
}

}  // namespace

std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  const std::int64_t m = wrap(i, period);
  return m < n ? m : period - m;
}

template <typename T>
Tensor<T> roll2d(const Tensor<T>& x, int shift_h, int shift_w) {
  require_rank("roll2d", x.shape(), 4);
  const std::int64_t h = x.dim(2), w = x.dim(3);
  auto idx = spatial_index(
      x.shape(), h, w, [&](std::int64_t y) { return wrap(y - shift_h, h); },
      [&](std::int64_t c) { return wrap(c - shift_w, w); });
  return gather(x, x.shape(), idx);
}

template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& x, int pad_bottom, int pad_right) {
  require_rank("pad_reflect", x.shape(), 4);
  require(pad_bottom >= 0 && pad_right >= 0, "pad_reflect: negative padding");
  const std::int64_t h = x.dim(2), w = x.dim(3);
  if (pad_bottom == 0 && pad_right == 0) return x;
  auto idx = spatial_index(
      x.shape(), h + pad_bottom, w + pad_right,
      [&](std::int64_t y) { return reflect_index(y, h); },
      [&](std::int64_t c) { return reflect_index(c, w); });
  return gather(x, {x.dim(0), x.dim(1), h + pad_bottom, w + pad_right}, idx);
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::int64_t top, std::int64_t left, std::int64_t h,
               std::int64_t w) {
  require_rank("crop", x.shape(), 4);
  require(top >= 0 && left >= 0 && h >= 1 && w >= 1 && top + h <= x.dim(2) &&
              left + w <= x.dim(3),
          "crop: window out of range for " + shape_str(x.shape()));
  if (top == 0 && left == 0 && h == x.dim(2) && w == x.dim(3)) return x;
  auto idx = spatial_index(
      x.shape(), h, w, [&](std::int64_t y) { return top + y; },
      [&](std::int64_t c) { return left + c; });
  return gather(x, {x.dim(0), x.dim(1), h, w}, idx);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(numel(shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) + " as " +
                                         shape_str(shape));
  const bool rec = recording<T>({&x});
  auto out = Tensor<T>::make_result(std::move(shape), rec);
  std::copy(x.data().begin(), x.data().end(), out.mutable_data().begin());
  if (rec) {
    record<T>({x}, out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<std::int64_t>& sizes) {
  require_rank("split_channels", x.shape(), 4);
  const std::int64_t total = std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0});
  require(total == x.dim(1), "split_channels: sizes sum to " + std::to_string(total) +
                                 " but input has " + std::to_string(x.dim(1)) + " channels");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<Tensor<T>> parts;
  std::int64_t start = 0;
  for (auto sz : sizes) {
    require(sz > 0, "split_channels: group sizes must be positive");
    auto idx = std::make_shared<Index>(static_cast<std::size_t>(n * sz * hw));
    std::size_t k = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t ch = 0; ch < sz; ++ch) {
        const std::int64_t base = (i * c + start + ch) * hw;
        for (std::int64_t p = 0; p < hw; ++p) (*idx)[k++] = base + p;
      }
    }
    parts.push_back(gather(x, {n, sz, x.dim(2), x.dim(3)}, idx));
    start += sz;
  }
  return parts;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const auto& first = parts.front();
  require_rank("concat_channels", first.shape(), 4);
  std::int64_t c = 0;
  bool rec = false;
  for (const auto& p : parts) {
    require_rank("concat_channels", p.shape(), 4);
    require(p.dim(0) == first.dim(0) && p.dim(2) == first.dim(2) && p.dim(3) == first.dim(3),
            "concat_channels: shape mismatch " + shape_str(first.shape()) + " vs " +
                shape_str(p.shape()));
    c += p.dim(1);
    rec = rec || recording<T>({&p});
  }
  const std::int64_t n = first.dim(0), hw = first.dim(2) * first.dim(3);
  auto out = Tensor<T>::make_result({n, c, first.dim(2), first.dim(3)}, rec);
  auto o = out.mutable_data();
  std::int64_t start = 0;
  for (const auto& p : parts) {
    const std::int64_t pc = p.dim(1);
    auto in = p.data();
    for (std::int64_t i = 0; i < n; ++i) {
      std::copy_n(in.begin() + i * pc * hw, pc * hw, o.begin() + (i * c + start) * hw);
    }
    start += pc;
  }
  if (rec) {
    record<T>(parts, out, [parts, out, n, c, hw]() mutable {
      auto g = out.grad();
      std::int64_t start = 0;
      for (auto& p : parts) {
        const std::int64_t pc = p.dim(1);
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t src = (i * c + start) * hw, dst = i * pc * hw;
            for (std::int64_t e = 0; e < pc * hw; ++e) gp[dst + e] += g[src + e];
          }
        }
        start += pc;
      }
    });
  }
  return out;
}

namespace {

void check_window(const char* op, std::int64_t h, std::int64_t w, const WindowSpec& win) {
  require(win.h >= 1 && win.w >= 1 && h % win.h == 0 && w % win.w == 0,
          std::string(op) + ": H=" + std::to_string(h) + ", W=" + std::to_string(w) +
              " not divisible by window " + window_str(win));
}

// For each element of the partitioned layout, its flat offset in [N,C,H,W].
std::shared_ptr<Index> window_index(std::int64_t n, std::int64_t c, std::int64_t h,
                                    std::int64_t w, const WindowSpec& win) {
  const std::int64_t nwy = h / win.h, nwx = w / win.w, area = win.area();
  auto idx = std::make_shared<Index>(static_cast<std::size_t>(n * c * h * w));
  std::size_t k = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t wy = 0; wy < nwy; ++wy) {
      for (std::int64_t wx = 0; wx < nwx; ++wx) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const std::int64_t plane = (i * c + ch) * h * w;
          for (std::int64_t p = 0; p < area; ++p) {
            const std::int64_t y = wy * win.h + p / win.w, x = wx * win.w + p % win.w;
            (*idx)[k++] = plane + y * w + x;
          }
        }
      }
    }
  }
  return idx;
}

}  // namespace

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, const WindowSpec& win) {
  require_rank("window_partition", x.shape(), 4);
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check_window("window_partition", h, w, win);
  const std::int64_t nwin = (h / win.h) * (w / win.w);
  return gather(x, {n * nwin, c, win.area()}, window_index(n, c, h, w, win));
}

template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, const WindowSpec& win, std::int64_t n,
                       std::int64_t h, std::int64_t w) {
  require_rank("window_merge", windows.shape(), 3);
  check_window("window_merge", h, w, win);
  const std::int64_t c = windows.dim(1);
  const std::int64_t nwin = (h / win.h) * (w / win.w);
  require(windows.dim(0) == n * nwin && windows.dim(2) == win.area(),
          "window_merge: " + shape_str(windows.shape()) + " is not a partition of [" +
              std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
              std::to_string(w) + "] by " + window_str(win));
  auto forward = window_index(n, c, h, w, win);
  auto inverse = std::make_shared<Index>(forward->size());
  for (std::size_t k = 0; k < forward->size(); ++k) {
    (*inverse)[static_cast<std::size_t>((*forward)[k])] = static_cast<std::int64_t>(k);
  }
  return gather(windows, {n, c, h, w}, inverse);
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  require_rank("pixel_shuffle", x.shape(), 4);
  const std::int64_t n = x.dim(0), cr = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(r >= 1 && cr % (r * r) == 0, "pixel_shuffle: " + std::to_string(cr) +
                                           " channels not divisible by r^2 for r=" +
                                           std::to_string(r));
  const std::int64_t c = cr / (r * r), oh = h * r, ow = w * r;
  auto idx = std::make_shared<Index>(static_cast<std::size_t>(x.numel()));
  std::size_t k = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          const std::int64_t src_c = ch * r * r + (y % r) * r + (xx % r);
          (*idx)[k++] = ((i * cr + src_c) * h + y / r) * w + xx / r;
        }
      }
    }
  }
  return gather(x, {n, c, oh, ow}, idx);
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  require_rank("pixel_unshuffle", x.shape(), 4);
  const std::int64_t n = x.dim(0), c = x.dim(1), oh = x.dim(2), ow = x.dim(3);
  require(r >= 1 && oh % r == 0 && ow % r == 0,
          "pixel_unshuffle: spatial size not divisible by r=" + std::to_string(r));
  const std::int64_t h = oh / r, w = ow / r, cr = c * r * r;
  auto idx = std::make_shared<Index>(static_cast<std::size_t>(x.numel()));
  std::size_t k = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t src_c = 0; src_c < cr; ++src_c) {
      const std::int64_t ch = src_c / (r * r), dy = (src_c % (r * r)) / r, dx = src_c % r;
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t xx = 0; xx < w; ++xx) {
          (*idx)[k++] = ((i * c + ch) * oh + y * r + dy) * ow + xx * r + dx;
        }
      }
    }
  }
  return gather(x, {n, cr, h, w}, idx);
}

#define EMT_INSTANTIATE(T)                                                                      \
  template Tensor<T> roll2d(const Tensor<T>&, int, int);                                        \
  template Tensor<T> pad_reflect(const Tensor<T>&, int, int);                                   \
  template Tensor<T> crop(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t,           \
                          std::int64_t);                                                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&,                              \
                                                 const std::vector<std::int64_t>&);             \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                            \
  template Tensor<T> window_partition(const Tensor<T>&, const WindowSpec&);                     \
  template Tensor<T> window_merge(const Tensor<T>&, const WindowSpec&, std::int64_t,            \
                                  std::int64_t, std::int64_t);                                  \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int);                                      \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int);

EMT_INSTANTIATE(float)
EMT_INSTANTIATE(double)

}  // namespace emt
