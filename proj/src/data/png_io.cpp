#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "emt/data.hpp"

namespace emt {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageError("cannot open '" + path.string() + "'");
  return f;
}

[[noreturn]] void on_png_error(png_structp png, png_const_charp msg) {
  auto* out = static_cast<std::string*>(png_get_error_ptr(png));
  if (out) *out = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

ImageRGB ImageRGB::zeros(int height, int width) {
  if (height < 1 || width < 1) {
    throw ImageError("image dimensions must be >= 1, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  ImageRGB img;
  img.height = height;
  img.width = width;
  img.data.assign(static_cast<std::size_t>(3) * height * width, 0.0f);
  return img;
}

std::uint8_t quantize8(float v) {
  const double q = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

ImageRGB quantized(const ImageRGB& img) {
  ImageRGB out = img;
  for (auto& v : out.data) v = static_cast<float>(quantize8(v) / 255.0);
  return out;
}

ImageRGB load_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageError("'" + path.string() + "' is not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageError("libpng initialization failed");
  }
  // libpng reports errors by longjmp back here; only C frames are skipped.
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  png_uint_32 width = 0, height = 0;
  int depth = 0, color = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError("cannot decode '" + path.string() + "': " + err);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &depth, &color, nullptr, nullptr, nullptr);
  const bool supported = (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA) &&
                         (depth == 8 || depth == 16);
  if (!supported) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError("unsupported PNG format in '" + path.string() + "' (color type " +
                     std::to_string(color) + ", bit depth " + std::to_string(depth) +
                     "); expected 8/16-bit RGB or RGBA");
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const int channels = color == PNG_COLOR_TYPE_RGB_ALPHA ? 4 : 3;
  const int bytes = depth / 8;
  const double maxv = depth == 16 ? 65535.0 : 255.0;
  auto img = ImageRGB::zeros(static_cast<int>(height), static_cast<int>(width));
  for (int y = 0; y < img.height; ++y) {
    const png_byte* row = rows[y];
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const png_byte* p = row + (static_cast<std::size_t>(x) * channels + c) * bytes;
        const unsigned v = bytes == 2 ? (unsigned{p[0]} << 8) | p[1] : p[0];
        img.at(c, y, x) = static_cast<float>(v / maxv);
      }
    }
  }
  return img;
}

void save_png(const ImageRGB& img, const std::filesystem::path& path) {
  if (img.height < 1 || img.width < 1) throw ImageError("cannot save an empty image");
  std::vector<png_byte> buffer(static_cast<std::size_t>(img.height) * img.width * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        buffer[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] = quantize8(img.at(c, y, x));
      }
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * img.width * 3;

  auto file = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError("cannot write '" + path.string() + "': " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw ImageError("cannot write '" + path.string() + "'");
}

}  // namespace emt
