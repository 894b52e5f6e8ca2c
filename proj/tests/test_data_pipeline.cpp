#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "emt/data.hpp"
#include "test_util.hpp"

using namespace emt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("emt_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

ImageRGB random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto img = ImageRGB::zeros(h, w);
  for (auto& v : img.data) v = static_cast<float>(emt::testing::uniform01(rng));
  return img;
}

// Minimal libpng writer for formats save_png never produces.
void write_raw_png(const fs::path& path, int w, int h, int color, int depth,
                   const std::vector<unsigned char>& bytes) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = bytes.size() / h;
  for (int y = 0; y < h; ++y) png_write_row(png, bytes.data() + y * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

double max_diff(const ImageRGB& a, const ImageRGB& b) {
  REQUIRE(a.height == b.height);
  REQUIRE(a.width == b.width);
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, double(std::abs(a.data[i] - b.data[i])));
  return m;
}

}  // namespace

TEST_CASE("png round trip and formats") {
  TempDir dir;
  auto img = random_image(7, 5, 1);
  save_png(img, dir.path / "a.png");
  auto back = load_png(dir.path / "a.png");
  CHECK(max_diff(img, back) <= 1.0 / 510 + 1e-7);
  CHECK(back == quantized(img));

  auto white = ImageRGB::zeros(1, 1);
  std::fill(white.data.begin(), white.data.end(), 1.0f);
  save_png(white, dir.path / "w.png");
  CHECK(load_png(dir.path / "w.png").data == std::vector<float>{1, 1, 1});

  // RGBA: alpha dropped.
  write_raw_png(dir.path / "rgba.png", 2, 1, PNG_COLOR_TYPE_RGB_ALPHA, 8, {255, 0, 51, 7, 0, 102, 255, 200});
  auto rgba = load_png(dir.path / "rgba.png");
  CHECK(rgba.at(0, 0, 0) == 1.0f);
  CHECK(rgba.at(2, 0, 0) == doctest::Approx(0.2));
  CHECK(rgba.at(1, 0, 1) == doctest::Approx(0.4));
  CHECK(rgba.at(2, 0, 1) == 1.0f);

  // 16-bit big-endian samples.
  write_raw_png(dir.path / "d16.png", 1, 1, PNG_COLOR_TYPE_RGB, 16, {0xff, 0xff, 0x80, 0x00, 0x00, 0x00});
  auto d16 = load_png(dir.path / "d16.png");
  CHECK(d16.at(0, 0, 0) == 1.0f);
  CHECK(d16.at(1, 0, 0) == doctest::Approx(32768.0 / 65535.0));
  CHECK(d16.at(2, 0, 0) == 0.0f);

  write_raw_png(dir.path / "gray.png", 1, 1, PNG_COLOR_TYPE_GRAY, 8, {9});
  CHECK_THROWS_WITH_AS(load_png(dir.path / "gray.png"), doctest::Contains("unsupported PNG"), ImageError);
  std::ofstream(dir.path / "junk.png") << "not a png";
  CHECK_THROWS_AS(load_png(dir.path / "junk.png"), ImageError);
  CHECK_THROWS_AS(load_png(dir.path / "missing.png"), ImageError);
}

TEST_CASE("quantization rounds half up") {
  CHECK(quantize8(0.0f) == 0);
  CHECK(quantize8(1.0f) == 255);
  CHECK(quantize8(static_cast<float>(0.5 / 255)) == 1);
  CHECK(quantize8(-3.0f) == 0);
  CHECK(quantize8(7.0f) == 255);
}

TEST_CASE("bicubic identity and constants") {
  auto img = random_image(6, 9, 2);
  CHECK(max_diff(bicubic_resize(img, 6, 9), img) <= 1e-6);
  auto flat = ImageRGB::zeros(7, 11);
  std::fill(flat.data.begin(), flat.data.end(), 0.3141f);
  for (auto [h, w] : std::vector<std::pair<int, int>>{{3, 5}, {14, 22}, {1, 1}, {7, 4}, {20, 3}}) {
    auto out = bicubic_resize(flat, h, w);
    for (float v : out.data) CHECK(v == 0.3141f);
  }
  CHECK_THROWS_AS(bicubic_resize(img, 0, 3), ImageError);
}

TEST_CASE("bicubic 2x reduction of a ramp") {
  // Kernel values at the stretched tap distances 1.75, 1.25, 0.75, 0.25 for
  // a = -0.5, evaluated by hand; the eight taps sum to 2.
  const double k[8] = {-0.0234375, -0.0703125, 0.2265625, 0.8671875,
                       0.8671875, 0.2265625, -0.0703125, -0.0234375};
  auto img = ImageRGB::zeros(4, 4);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) img.at(c, y, x) = static_cast<float>((y * 4 + x + c) / 20.0);
  auto out = bicubic_resize(img, 2, 2);
  for (int c = 0; c < 3; ++c)
    for (int u = 0; u < 2; ++u)
      for (int v = 0; v < 2; ++v) {
        double s = 0;
        for (int a = 0; a < 8; ++a)
          for (int b = 0; b < 8; ++b) {
            const int y = std::clamp(2 * u - 3 + a, 0, 3), x = std::clamp(2 * v - 3 + b, 0, 3);
            s += k[a] / 2 * k[b] / 2 * img.at(c, y, x);
          }
        CHECK(out.at(c, u, v) == doctest::Approx(s).epsilon(1e-6));
      }
}

TEST_CASE("luma") {
  auto img = ImageRGB::zeros(1, 3);
  for (int c = 0; c < 3; ++c) img.at(c, 0, 1) = 1.0f;
  img.at(0, 0, 2) = 0.25f;
  img.at(1, 0, 2) = 0.5f;
  img.at(2, 0, 2) = 0.75f;
  const auto y = rgb_to_y(img);
  CHECK(y[0] == 16.0);
  CHECK(y[1] == doctest::Approx(235.0).epsilon(1e-4 / 235));
  CHECK(y[2] == doctest::Approx(16 + 65.481 * 0.25 + 128.553 * 0.5 + 24.966 * 0.75).epsilon(1e-14));

  auto r = random_image(4, 4, 3);
  const auto yr = rgb_to_y(r);
  for (int i = 0; i < 16; ++i) {
    const double ref = 65.481 * r.data[i] + 128.553 * r.data[16 + i] + 24.966 * r.data[32 + i] + 16.0;
    CHECK(std::abs(yr[i] - ref) < 1e-12);
  }
}

TEST_CASE("patch sampling") {
  // Each LR pixel encodes its own coordinates.
  auto hr = ImageRGB::zeros(40, 48);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 48; ++x) {
      hr.at(0, y, x) = static_cast<float>(y / 64.0);
      hr.at(1, y, x) = static_cast<float>(x / 64.0);
    }
  SamplePair pair = degrade(hr, 2);
  pair.lr = ImageRGB::zeros(20, 24);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 24; ++x) {
      pair.lr.at(0, y, x) = static_cast<float>(y / 64.0);
      pair.lr.at(1, y, x) = static_cast<float>(x / 64.0);
    }

  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    auto p = sample_patch(pair, 6, a);
    const int top = static_cast<int>(std::lround(p.lr.at(0, 0, 0) * 64));
    const int left = static_cast<int>(std::lround(p.lr.at(1, 0, 0) * 64));
    REQUIRE(p.hr.height == 12);
    CHECK(std::lround(p.hr.at(0, 0, 0) * 64) == 2 * top);
    CHECK(std::lround(p.hr.at(1, 0, 0) * 64) == 2 * left);
    CHECK((p == sample_patch(pair, 6, b)));
  }

  Rng r(1);
  const auto square = crop_pair(pair, 0, 2, 20, 20);
  CHECK((sample_patch(square, 20, r) == square));
  CHECK_THROWS_AS(sample_patch(pair, 21, r), ImageError);
}

TEST_CASE("augmentation identities") {
  auto img = random_image(5, 5, 4);
  CHECK(rotate90(rotate90(rotate90(rotate90(img, 1), 1), 1), 1) == img);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  CHECK(rotate90(img, 3) == rotate90(rotate90(img, 2), 1));

  auto tall = random_image(2, 3, 5);
  auto t1 = rotate90(tall, 1);
  CHECK(t1.height == 3);
  CHECK(t1.at(0, 0, 0) == tall.at(0, 0, 2));  // counter-clockwise
  CHECK(t1.at(0, 0, 1) == tall.at(0, 1, 2));

  SamplePair pair = degrade(random_image(8, 8, 6), 2);
  auto same = apply_augmentation(pair, {0, false});
  CHECK(same.lr == pair.lr);
  CHECK(same.hr == pair.hr);

  SamplePair wide = degrade(random_image(4, 8, 7), 2);
  CHECK_THROWS_AS(apply_augmentation(wide, {1, false}), ImageError);
  CHECK_NOTHROW(apply_augmentation(wide, {2, true}));

  // Draws cover all eight transforms.
  std::set<int> seen;
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto a = draw_augmentation(rng);
    seen.insert(a.quarter_turns * 2 + a.flip);
  }
  CHECK(seen.size() == 8);
}

TEST_CASE("augmentation keeps lr and hr aligned") {
  // A bright r×r marker off-centre in HR; after any transform the degraded
  // HR must match the transformed LR and the LR peak must move with it.
  auto hr = ImageRGB::zeros(16, 16);
  for (int c = 0; c < 3; ++c)
    for (int y = 4; y < 6; ++y)
      for (int x = 10; x < 12; ++x) hr.at(c, y, x) = 1.0f;
  SamplePair pair = degrade(hr, 2);
  for (int k = 0; k < 4; ++k)
    for (bool flip : {false, true}) {
      auto aug = apply_augmentation(pair, {k, flip});
      auto redegraded = degrade(aug.hr, 2);
      CHECK(max_diff(redegraded.lr, aug.lr) < 1e-6);
      int peak = 0;
      for (int i = 1; i < 64; ++i) {
        if (aug.lr.data[i] > aug.lr.data[peak]) peak = i;
      }
      // Where (2, 5) lands under the same transform.
      auto probe = ImageRGB::zeros(8, 8);
      probe.at(0, 2, 5) = 1.0f;
      auto moved = apply_augmentation(SamplePair{probe, ImageRGB::zeros(16, 16), 2}, {k, flip}).lr;
      const auto want = std::max_element(moved.data.begin(), moved.data.begin() + 64) - moved.data.begin();
      CHECK(peak == want);
    }
}

TEST_CASE("dataset directory") {
  TempDir dir;
  fs::create_directories(dir.path / "HR");
  auto a = random_image(9, 10, 8), b = random_image(12, 12, 9);
  save_png(a, dir.path / "HR" / "b.png");
  save_png(b, dir.path / "HR" / "a.png");
  std::ofstream(dir.path / "HR" / "notes.txt") << "ignored";

  auto ds = Dataset::open(dir.path, 2);
  REQUIRE(ds.size() == 2);
  CHECK(ds.name(0) == "a.png");
  CHECK(ds.pair(1).hr.height == 8);  // mod-crop 9 -> 8
  CHECK(ds.pair(1).lr.width == 5);
  CHECK(ds.pair(0).lr == bicubic_resize(quantized(b), 6, 6));

  fs::create_directories(dir.path / "LR" / "X2");
  auto lr = random_image(6, 6, 10);
  save_png(lr, dir.path / "LR" / "X2" / "a.png");
  CHECK(Dataset::open(dir.path, 2).pair(0).lr == quantized(lr));
  save_png(random_image(5, 6, 11), dir.path / "LR" / "X2" / "b.png");
  CHECK_THROWS_WITH_AS(Dataset::open(dir.path, 2), doctest::Contains("expected 4x5"), ImageError);

  TempDir empty;
  fs::create_directories(empty.path / "HR");
  CHECK_THROWS_WITH_AS(Dataset::open(empty.path, 2), doctest::Contains("empty"), ImageError);
  CHECK_THROWS_AS(Dataset::open(empty.path / "nowhere", 2), ImageError);
}

TEST_CASE("batches are deterministic and independent of worker count") {
  auto ds = Dataset::from_images({random_image(32, 32, 12), random_image(24, 40, 13)}, 2);
  auto b1 = sample_batch<double>(ds, 5, 8, 77, 3, true, 1);
  auto b2 = sample_batch<double>(ds, 5, 8, 77, 3, true, 3);
  auto b3 = sample_batch<double>(ds, 5, 8, 77, 3, true, 1);
  auto other = sample_batch<double>(ds, 5, 8, 77, 4, true, 1);
  CHECK(b1.lr.shape() == Shape{5, 3, 8, 8});
  CHECK(b1.hr.shape() == Shape{5, 3, 16, 16});
  CHECK(emt::testing::values(b1.lr) == emt::testing::values(b2.lr));
  CHECK(emt::testing::values(b1.hr) == emt::testing::values(b3.hr));
  CHECK(emt::testing::values(b1.lr) != emt::testing::values(other.lr));
  CHECK_THROWS_AS(sample_batch<float>(ds, 2, 13, 1, 0), ImageError);
}

TEST_CASE("tensor conversion") {
  auto img = random_image(3, 4, 14);
  auto t = to_tensor<float>(img);
  CHECK(t.shape() == Shape{1, 3, 3, 4});
  CHECK(to_image(t) == img);
  auto over = Tensor<double>::full({2, 3, 1, 1}, 1.5);
  CHECK(to_image(over, 1).data == std::vector<float>{1, 1, 1});
  CHECK_THROWS_AS(to_image(over, 2), ShapeError);
}
