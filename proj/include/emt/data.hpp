#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "emt/random.hpp"
#include "emt/tensor.hpp"

namespace emt {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// RGB image with float samples in [0,1], stored planar: data[(c·H + y)·W + x].
struct ImageRGB {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  static ImageRGB zeros(int height, int width);
  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const ImageRGB&) const = default;
};

/// Reads 8- or 16-bit RGB/RGBA PNG; alpha is dropped. Other color types throw.
ImageRGB load_png(const std::filesystem::path& path);
/// Writes 8-bit RGB; samples are clamped and rounded half-up.
void save_png(const ImageRGB& img, const std::filesystem::path& path);
/// The 8-bit code save_png writes for a sample.
std::uint8_t quantize8(float v);
/// Rounds every sample to the nearest 8-bit level (what a save/load cycle does).
ImageRGB quantized(const ImageRGB& img);

/// Separable bicubic (a = -0.5) with clamp-to-edge sampling. When shrinking
/// an axis the kernel is stretched by the inverse scale (antialiasing), as in
/// the usual bicubic degradation for SR datasets.
ImageRGB bicubic_resize(const ImageRGB& img, int out_h, int out_w);

/// Bicubic kernel with a = -0.5.
double cubic_kernel(double x);

/// Studio-swing BT.601 luma from [0,1] RGB:
///   Y = 16 + 65.481·R + 128.553·G + 24.966·B, range [16, 235].
/// Row-major H·W plane.
std::vector<double> rgb_to_y(const ImageRGB& img);

struct SamplePair {
  ImageRGB lr;
  ImageRGB hr;
  int scale = 1;
  bool operator==(const SamplePair&) const = default;
};

/// Crops hr to a multiple of `scale` (top-left anchored) and derives lr by
/// bicubic downscaling.
SamplePair degrade(const ImageRGB& hr, int scale);

/// Uniform random patch_lr×patch_lr crop of lr with the aligned r-scaled hr crop.
SamplePair sample_patch(const SamplePair& pair, int patch_lr, Rng& rng);
/// Fixed crop; the lr offset is (top, left).
SamplePair crop_pair(const SamplePair& pair, int top, int left, int h, int w);

/// Counter-clockwise quarter turns (k mod 4); out is W×H for odd k.
ImageRGB rotate90(const ImageRGB& img, int k);
ImageRGB flip_horizontal(const ImageRGB& img);

struct Augmentation {
  int quarter_turns = 0;  // 0..3
  bool flip = false;      // applied after the rotation
};

Augmentation draw_augmentation(Rng& rng);
/// Applies the same transform to lr and hr. Odd turns require square images.
SamplePair apply_augmentation(const SamplePair& pair, const Augmentation& aug);
/// Random rotation in {0,90,180,270} and independent horizontal flip.
SamplePair augment(const SamplePair& pair, Rng& rng);

/// HR images from `<root>/HR/*.png` (sorted by file name) with lr from
/// `<root>/LR/X{r}/<same name>` when that file exists, else bicubic.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& root, int scale);
  static Dataset from_images(std::vector<ImageRGB> hr, int scale);

  std::size_t size() const { return pairs_.size(); }
  int scale() const { return scale_; }
  const SamplePair& pair(std::size_t i) const { return pairs_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

 private:
  int scale_ = 1;
  std::vector<SamplePair> pairs_;
  std::vector<std::string> names_;
};

template <typename T>
struct Batch {
  Tensor<T> lr;  // [B,3,p,p]
  Tensor<T> hr;  // [B,3,p·r,p·r]
};

/// Training batch for one iteration. Sample b draws from the stream
/// Rng::stream(seed, iteration, b): image index, crop, then augmentation, so
/// the batch depends only on (seed, iteration) and never on `threads`.
template <typename T>
Batch<T> sample_batch(const Dataset& ds, int batch_size, int patch_lr, std::uint64_t seed,
                      std::uint64_t iteration, bool augment = true, int threads = 1);

/// Worker count from EMT_THREADS (default 1, clamped to [1, 64]).
int data_threads();

/// [1,3,H,W] tensor of the image.
template <typename T>
Tensor<T> to_tensor(const ImageRGB& img);
/// Image `index` of an [N,3,H,W] tensor, clamped to [0,1].
template <typename T>
ImageRGB to_image(const Tensor<T>& t, std::int64_t index = 0);

}  // namespace emt
