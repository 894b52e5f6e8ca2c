#include <algorithm>
#include <cmath>

#include "emt/data.hpp"

namespace emt {

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Tap {
  int index;
  double weight;
};

/// Normalized taps for every output position of one axis.
std::vector<std::vector<Tap>> resize_taps(int in, int out) {
  const double scale = static_cast<double>(out) / in;
  const double stretch = scale < 1.0 ? scale : 1.0;  // antialias when shrinking
  const double support = 2.0 / stretch;
  std::vector<std::vector<Tap>> taps(out);
  for (int u = 0; u < out; ++u) {
    const double centre = (u + 0.5) / scale - 0.5;
    const int lo = static_cast<int>(std::floor(centre - support));
    const int hi = static_cast<int>(std::ceil(centre + support));
    double total = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double w = cubic_kernel((centre - j) * stretch);
      if (w == 0.0) continue;
      taps[u].push_back({std::clamp(j, 0, in - 1), w});
      total += w;
    }
    for (auto& t : taps[u]) t.weight /= total;
  }
  return taps;
}

}  // namespace

ImageRGB bicubic_resize(const ImageRGB& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ImageError("bicubic_resize: output dimensions must be >= 1");
  const auto rows = resize_taps(img.height, out_h);
  const auto cols = resize_taps(img.width, out_w);
  auto out = ImageRGB::zeros(out_h, out_w);
  std::vector<double> tmp(static_cast<std::size_t>(img.height) * out_w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < out_w; ++x) {
        double s = 0.0;
        for (const auto& t : cols[x]) s += t.weight * img.at(c, y, t.index);
        tmp[static_cast<std::size_t>(y) * out_w + x] = s;
      }
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        double s = 0.0;
        for (const auto& t : rows[y]) s += t.weight * tmp[static_cast<std::size_t>(t.index) * out_w + x];
        out.at(c, y, x) = static_cast<float>(std::clamp(s, 0.0, 1.0));
      }
  }
  return out;
}

std::vector<double> rgb_to_y(const ImageRGB& img) {
  std::vector<double> y(static_cast<std::size_t>(img.height) * img.width);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j) {
      y[static_cast<std::size_t>(i) * img.width + j] =
          16.0 + 65.481 * img.at(0, i, j) + 128.553 * img.at(1, i, j) + 24.966 * img.at(2, i, j);
    }
  return y;
}

namespace {

ImageRGB crop_image(const ImageRGB& img, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || top + h > img.height || left + w > img.width) {
    throw ImageError("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                     std::to_string(top) + "," + std::to_string(left) + ") exceeds " +
                     std::to_string(img.height) + "x" + std::to_string(img.width) + " image");
  }
  auto out = ImageRGB::zeros(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
  return out;
}

}  // namespace

SamplePair degrade(const ImageRGB& hr, int scale) {
  if (scale < 1) throw ImageError("scale must be >= 1");
  const int h = hr.height / scale, w = hr.width / scale;
  if (h < 1 || w < 1) {
    throw ImageError("image " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                     " is smaller than the scale factor " + std::to_string(scale));
  }
  SamplePair p;
  p.scale = scale;
  p.hr = crop_image(hr, 0, 0, h * scale, w * scale);
  p.lr = bicubic_resize(p.hr, h, w);
  return p;
}

SamplePair crop_pair(const SamplePair& pair, int top, int left, int h, int w) {
  const int r = pair.scale;
  return {crop_image(pair.lr, top, left, h, w), crop_image(pair.hr, top * r, left * r, h * r, w * r), r};
}

SamplePair sample_patch(const SamplePair& pair, int patch_lr, Rng& rng) {
  if (patch_lr < 1 || pair.lr.height < patch_lr || pair.lr.width < patch_lr) {
    throw ImageError("LR image " + std::to_string(pair.lr.height) + "x" +
                     std::to_string(pair.lr.width) + " is smaller than patch " +
                     std::to_string(patch_lr));
  }
  const int top = static_cast<int>(rng.uniform_int(pair.lr.height - patch_lr + 1));
  const int left = static_cast<int>(rng.uniform_int(pair.lr.width - patch_lr + 1));
  return crop_pair(pair, top, left, patch_lr, patch_lr);
}

ImageRGB rotate90(const ImageRGB& img, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return img;
  const int h = img.height, w = img.width;
  auto out = k == 2 ? ImageRGB::zeros(h, w) : ImageRGB::zeros(w, h);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        float v;
        if (k == 1) v = img.at(c, x, w - 1 - y);
        else if (k == 2) v = img.at(c, h - 1 - y, w - 1 - x);
        else v = img.at(c, h - 1 - x, y);
        out.at(c, y, x) = v;
      }
  return out;
}

ImageRGB flip_horizontal(const ImageRGB& img) {
  auto out = img;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Augmentation draw_augmentation(Rng& rng) {
  Augmentation a;
  a.quarter_turns = static_cast<int>(rng.uniform_int(4));
  a.flip = rng.uniform_int(2) == 1;
  return a;
}

SamplePair apply_augmentation(const SamplePair& pair, const Augmentation& aug) {
  if (aug.quarter_turns % 2 != 0 && pair.lr.height != pair.lr.width) {
    throw ImageError("90/270 degree rotation needs a square patch, got " +
                     std::to_string(pair.lr.height) + "x" + std::to_string(pair.lr.width));
  }
  SamplePair out{rotate90(pair.lr, aug.quarter_turns), rotate90(pair.hr, aug.quarter_turns), pair.scale};
  if (aug.flip) {
    out.lr = flip_horizontal(out.lr);
    out.hr = flip_horizontal(out.hr);
  }
  return out;
}

SamplePair augment(const SamplePair& pair, Rng& rng) {
  return apply_augmentation(pair, draw_augmentation(rng));
}

template <typename T>
Tensor<T> to_tensor(const ImageRGB& img) {
  std::vector<T> v(img.data.begin(), img.data.end());
  return Tensor<T>::from({1, 3, img.height, img.width}, std::move(v));
}

template <typename T>
ImageRGB to_image(const Tensor<T>& t, std::int64_t index) {
  if (t.rank() != 4 || t.dim(1) != 3 || index < 0 || index >= t.dim(0)) {
    throw ShapeError("to_image: expected [N,3,H,W] with image " + std::to_string(index) +
                     ", got " + shape_str(t.shape()));
  }
  auto img = ImageRGB::zeros(static_cast<int>(t.dim(2)), static_cast<int>(t.dim(3)));
  const auto src = t.data().subspan(static_cast<std::size_t>(index) * img.data.size(), img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = static_cast<float>(std::clamp(static_cast<double>(src[i]), 0.0, 1.0));
  }
  return img;
}

template Tensor<float> to_tensor<float>(const ImageRGB&);
template Tensor<double> to_tensor<double>(const ImageRGB&);
template ImageRGB to_image<float>(const Tensor<float>&, std::int64_t);
template ImageRGB to_image<double>(const Tensor<double>&, std::int64_t);

}  // namespace emt
