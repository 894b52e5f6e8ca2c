#include <cmath>
#include <limits>
#include <string>

#include "emt/metrics.hpp"

namespace emt {

namespace {

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

std::string dims(const ImageRGB& img) {
  return std::to_string(img.height) + "x" + std::to_string(img.width);
}

// Y planes of both images with `border` pixels removed on every side.
std::pair<Plane, Plane> cropped_luma(const char* what, const ImageRGB& a, const ImageRGB& b,
                                     int border) {
  if (a.height != b.height || a.width != b.width) {
    throw MetricError(std::string(what) + ": image sizes differ (" + dims(a) + " vs " + dims(b) + ")");
  }
  if (border < 0) throw MetricError(std::string(what) + ": negative border");
  const int h = a.height - 2 * border, w = a.width - 2 * border;
  if (h <= 0 || w <= 0) {
    throw MetricError(std::string(what) + ": border " + std::to_string(border) +
                      " leaves nothing of a " + dims(a) + " image");
  }
  auto crop = [&](const ImageRGB& img) {
    const auto y = rgb_to_y(img);
    Plane p{h, w, {}};
    p.v.reserve(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) p.v.push_back(y[static_cast<std::size_t>(i + border) * img.width + j + border]);
    return p;
  };
  return {crop(a), crop(b)};
}

constexpr int kWin = 11;

// Valid-mode separable filtering with the SSIM Gaussian.
Plane filter_valid(const Plane& in, const std::vector<double>& g) {
  const int oh = in.h - kWin + 1, ow = in.w - kWin + 1;
  Plane rows{in.h, ow, std::vector<double>(static_cast<std::size_t>(in.h) * ow)};
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * in.at(y, x + k);
      rows.v[static_cast<std::size_t>(y) * ow + x] = s;
    }
  Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow)};
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * rows.at(y + k, x);
      out.v[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane p{a.h, a.w, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) p.v[i] = a.v[i] * b.v[i];
  return p;
}

}  // namespace

double psnr_y(const ImageRGB& sr, const ImageRGB& hr, int border) {
  const auto [a, b] = cropped_luma("psnr_y", sr, hr, border);
  double se = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    se += d * d;
  }
  if (se == 0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.v.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

std::vector<double> ssim_gaussian() {
  std::vector<double> g(kWin);
  double s = 0;
  for (int k = 0; k < kWin; ++k) {
    const double d = k - kWin / 2;
    s += g[k] = std::exp(-d * d / (2 * 1.5 * 1.5));
  }
  for (auto& e : g) e /= s;
  return g;
}

double ssim_y(const ImageRGB& sr, const ImageRGB& hr, int border) {
  const auto [a, b] = cropped_luma("ssim_y", sr, hr, border);
  if (a.h < kWin || a.w < kWin) {
    throw MetricError("ssim_y: " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                      " after cropping is smaller than the 11x11 window");
  }
  constexpr double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  const auto g = ssim_gaussian();
  const auto mu1 = filter_valid(a, g), mu2 = filter_valid(b, g);
  const auto e11 = filter_valid(product(a, a), g), e22 = filter_valid(product(b, b), g),
             e12 = filter_valid(product(a, b), g);
  double total = 0;
  for (std::size_t i = 0; i < mu1.v.size(); ++i) {
    const double m1 = mu1.v[i], m2 = mu2.v[i];
    const double s11 = e11.v[i] - m1 * m1, s22 = e22.v[i] - m2 * m2, s12 = e12.v[i] - m1 * m2;
    total += ((2 * m1 * m2 + c1) * (2 * s12 + c2)) / ((m1 * m1 + m2 * m2 + c1) * (s11 + s22 + c2));
  }
  return total / static_cast<double>(mu1.v.size());
}

}  // namespace emt
