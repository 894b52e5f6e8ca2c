#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "emt/data.hpp"

namespace emt::cli {

struct EvalRow {
  std::string image;
  double psnr = 0;
  double ssim = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::int64_t params = 0;
};

/// "bicubic" or a checkpoint path.
struct ModelSource {
  std::string spec;
  bool bicubic() const { return spec == "bicubic"; }
};

/// Y-channel PSNR/SSIM of each image's super-resolved LR against its HR,
/// border-cropped by the scale. Model output is rounded to 8 bits first, as a
/// saved PNG would be.
EvalReport evaluate(const ModelSource& model, const Dataset& data);

/// Upscales one image by the model's factor (bicubic needs `scale`).
ImageRGB super_resolve(const ModelSource& model, const ImageRGB& lr, int scale);

/// Parses argv and runs one subcommand. Returns the process exit code; any
/// failure is reported to `err` as one line: "error: <category>: <message>".
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace emt::cli
