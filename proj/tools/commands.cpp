#include "commands.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>

#include "emt/kv.hpp"
#include "emt/metrics.hpp"
#include "emt/model.hpp"
#include "emt/train.hpp"
#include "run_config.hpp"

namespace emt::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Calls fn(params) with the checkpoint loaded in its training precision.
template <typename Fn>
void with_checkpoint(const fs::path& path, Fn&& fn) {
  const auto [model, train] = read_checkpoint_configs(path);
  if (train.dtype == DType::f64) {
    fn(load_checkpoint<double>(path).params);
  } else {
    fn(load_checkpoint<float>(path).params);
  }
}

void require_scale(const ModelConfig& model, int scale) {
  if (model.scale != scale) {
    throw UsageError("--scale " + std::to_string(scale) + " does not match the checkpoint's x" +
                     std::to_string(model.scale) + " model");
  }
}

template <typename T>
ImageRGB upscale(const EmtParameters<T>& params, const ImageRGB& lr) {
  return quantized(to_image(emt_forward(to_tensor<T>(lr), params)));
}

std::string fmt(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string resume;
  std::optional<std::uint64_t> seed;
};

template <typename T>
fs::path train_run(const RunConfig& rc, const TrainArgs& a, const Dataset& data, std::ostream& out) {
  auto trainer = a.resume.empty() ? Trainer<T>(rc.model, rc.train, data)
                                  : Trainer<T>::resume(a.resume, data);
  if (!a.resume.empty()) {
    if (!(trainer.model_config() == rc.model)) {
      throw ConfigFileError(a.config + ": [model] differs from the checkpoint being resumed");
    }
    if (!(trainer.train_config() == rc.train)) {
      throw ConfigFileError(a.config + ": [train] differs from the checkpoint being resumed");
    }
    out << "resuming at iteration " << trainer.iteration() << '\n';
  }
  const auto total = rc.train.total_iters;
  return train(trainer, rc.out_dir, [&](const StepLog& s) {
    if (s.iteration % 100 == 0 || s.iteration == total) {
      out << "iter " << s.iteration << " lr " << kv::format_double(s.lr) << " loss "
          << kv::format_double(s.loss) << '\n'
          << std::flush;
    }
  });
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto rc = parse_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  if (rc.dataset.empty()) throw ConfigFileError(a.config + ": [data] dataset is not set");
  if (!a.resume.empty() && !fs::exists(a.resume)) {
    throw CheckpointError("cannot open checkpoint " + a.resume);
  }
  const auto data = Dataset::open(rc.dataset, rc.model.scale);
  const auto dtype = a.resume.empty() ? rc.train.dtype : read_checkpoint_configs(a.resume).second.dtype;
  const auto final = dtype == DType::f64 ? train_run<double>(rc, a, data, out)
                                         : train_run<float>(rc, a, data, out);
  out << "checkpoint " << final.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_eval(const std::string& model, const std::string& dataset, int scale, std::ostream& out) {
  const ModelSource src{model};
  if (!src.bicubic()) require_scale(read_checkpoint_configs(model).first, scale);
  const auto report = evaluate(src, Dataset::open(dataset, scale));
  out << "image\tpsnr_y\tssim_y\n";
  for (const auto& r : report.rows) out << r.image << '\t' << fmt(r.psnr, 6) << '\t' << fmt(r.ssim, 8) << '\n';
  out << "mean\t" << fmt(report.mean_psnr, 6) << '\t' << fmt(report.mean_ssim, 8) << '\n';
  out << "params\t" << report.params << '\n';
  return 0;
}

int cmd_sr(const std::string& model, const std::string& input, const std::string& output, int scale,
           std::ostream& out) {
  const ModelSource src{model};
  if (!src.bicubic()) require_scale(read_checkpoint_configs(model).first, scale);
  const auto lr = load_png(input);
  const auto sr = super_resolve(src, lr, scale);
  save_png(sr, output);
  out << output << ' ' << sr.height << 'x' << sr.width << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string kind;
  std::string model;
  std::string dataset;
  std::string out;
  std::string config;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const CkaOptions opt = a.config.empty() ? CkaOptions{} : parse_run_config(a.config).analysis;
  const auto ckpt = load_checkpoint<double>(a.model);
  const auto& cfg = ckpt.params.config();
  const auto data = Dataset::open(a.dataset, cfg.scale);
  const auto patches = sample_lr_patches(data, opt.patches, opt.patch, opt.seed);
  fs::create_directories(a.out);

  std::vector<std::pair<std::string, std::string>> meta{
      {"analysis", a.kind},
      {"model", a.model},
      {"dataset", fs::absolute(a.dataset).string()},
      {"images", std::to_string(data.size())},
      {"patches", std::to_string(opt.patches)},
      {"patch_lr", std::to_string(opt.patch)},
      {"seed", std::to_string(opt.seed)},
      {"sampling", "uniform image, then uniform crop of its LR image; no augmentation"},
      {"forward_batch", std::to_string(opt.batch)},
      {"precision", "f64"},
  };
  for (const auto& [k, v] : cfg.entries()) meta.emplace_back("model." + k, v);

  if (a.kind == "cka") {
    const auto m = cka_heatmap(ckpt.params, patches, opt);
    write_cka_csv(m, fs::path(a.out) / "cka.csv");
    meta.emplace_back("minibatch", std::to_string(opt.minibatch));
    meta.emplace_back("estimator", "linear CKA, biased HSIC summed over minibatches");
    meta.emplace_back("layers", std::to_string(m.layers.size()));
    write_metadata(meta, fs::path(a.out) / "metadata.txt");
    out << "wrote " << (fs::path(a.out) / "cka.csv").string() << " (" << m.layers.size() << " layers)\n";
  } else {
    const auto rows = mad(ckpt.params, patches, opt.batch);
    write_mad_csv(rows, fs::path(a.out) / "mad.csv");
    write_mad_summary(rows, fs::path(a.out) / "summary.txt");
    meta.emplace_back("distance", "euclidean, pixel coordinates inside the window");
    write_metadata(meta, fs::path(a.out) / "metadata.txt");
    out << "wrote " << (fs::path(a.out) / "mad.csv").string() << " (" << rows.size() << " rows)\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_info(const std::string& config, const std::string& flops, std::ostream& out) {
  const auto rc = parse_run_config(config);
  const auto& cfg = rc.model;
  out << "params\t" << count_params(cfg) << '\n';
  if (flops.empty()) {
    const int m = cfg.pad_multiple();
    const auto rep = count_flops(cfg, m, m);
    out << "component\tinstances\tparams\n";
    for (const auto& l : rep.lines) out << l.component << '\t' << l.instances << '\t' << l.params << '\n';
    return 0;
  }
  WindowSpec hw;
  try {
    hw = kv::parse_window("--flops", flops);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--flops expects HxW: ") + e.what());
  }
  const auto rep = count_flops(cfg, hw.h, hw.w);
  out << "resolution\t" << hw.h << 'x' << hw.w << " (padded " << rep.padded_h << 'x' << rep.padded_w
      << ")\n";
  out << "component\tinstances\tparams\tmacs\n";
  for (const auto& l : rep.lines) {
    out << l.component << '\t' << l.instances << '\t' << l.params << '\t' << l.macs << '\n';
  }
  out << "macs\t" << rep.macs() << '\n';
  out << "flops\t" << rep.flops() << '\n';
  return 0;
}

std::string category(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const ConfigFileError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint";
  if (dynamic_cast<const ImageError*>(&e)) return "data";
  if (dynamic_cast<const TrainError*>(&e)) return "train";
  if (dynamic_cast<const MetricError*>(&e)) return "metric";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  return "runtime";
}

void report(std::ostream& err, const std::string& cat, std::string msg) {
  for (auto& c : msg) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  err << "error: " << cat << ": " << msg << '\n';
}

}  // namespace

EvalReport evaluate(const ModelSource& model, const Dataset& data) {
  EvalReport rep;
  auto score = [&](auto&& upscale_fn) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& p = data.pair(i);
      const auto sr = upscale_fn(p.lr);
      rep.rows.push_back({data.name(i), psnr_y(sr, p.hr, data.scale()), ssim_y(sr, p.hr, data.scale())});
    }
  };
  if (model.bicubic()) {
    score([&](const ImageRGB& lr) {
      return quantized(bicubic_resize(lr, lr.height * data.scale(), lr.width * data.scale()));
    });
  } else {
    with_checkpoint(model.spec, [&](const auto& params) {
      require_scale(params.config(), data.scale());
      rep.params = params.scalar_count();
      score([&](const ImageRGB& lr) { return upscale(params, lr); });
    });
  }
  for (const auto& r : rep.rows) {
    rep.mean_psnr += r.psnr;
    rep.mean_ssim += r.ssim;
  }
  rep.mean_psnr /= static_cast<double>(rep.rows.size());
  rep.mean_ssim /= static_cast<double>(rep.rows.size());
  return rep;
}

ImageRGB super_resolve(const ModelSource& model, const ImageRGB& lr, int scale) {
  if (model.bicubic()) return quantized(bicubic_resize(lr, lr.height * scale, lr.width * scale));
  ImageRGB out;
  with_checkpoint(model.spec, [&](const auto& params) { out = upscale(params, lr); });
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"EMT super-resolution: train, evaluate, upscale, analyze"};
  app.name("emt");
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
  train_cmd->add_option("--config", train_args.config, "run config file")->required();
  train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue from");
  train_cmd->add_option("--seed", train_args.seed, "override [train] seed");

  std::string model, dataset, input, output;
  int scale = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Y-channel PSNR/SSIM over a dataset");
  eval_cmd->add_option("--model", model, "checkpoint path or 'bicubic'")->required();
  eval_cmd->add_option("--dataset", dataset, "directory with HR/ (and optional LR/X<r>/)")->required();
  eval_cmd->add_option("--scale", scale, "upscaling factor")->required()->check(CLI::PositiveNumber);

  auto* sr_cmd = app.add_subcommand("sr", "upscale one PNG");
  sr_cmd->add_option("--model", model, "checkpoint path or 'bicubic'")->required();
  sr_cmd->add_option("--input", input, "input PNG")->required();
  sr_cmd->add_option("--output", output, "output PNG")->required();
  sr_cmd->add_option("--scale", scale, "upscaling factor")->required()->check(CLI::PositiveNumber);

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "CKA heatmap or mean attention distance");
  analyze_cmd->add_option("kind", an.kind, "cka or mad")->required()->check(CLI::IsMember({"cka", "mad"}));
  analyze_cmd->add_option("--model", an.model, "checkpoint")->required();
  analyze_cmd->add_option("--dataset", an.dataset, "directory with HR/ images")->required();
  analyze_cmd->add_option("--out", an.out, "output directory")->required();
  analyze_cmd->add_option("--config", an.config, "run config whose [analysis] section is used");

  std::string info_config, flops;
  auto* info_cmd = app.add_subcommand("info", "parameter and FLOP accounting");
  info_cmd->add_option("--config", info_config, "run config file")->required();
  info_cmd->add_option("--flops", flops, "LR resolution HxW for the multiply-accumulate count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report(err, "usage", e.what());
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(model, dataset, scale, out);
    if (*sr_cmd) return cmd_sr(model, input, output, scale, out);
    if (*analyze_cmd) return cmd_analyze(an, out);
    return cmd_info(info_config, flops, out);
  } catch (const UsageError& e) {
    report(err, "usage", e.what());
    return 2;
  } catch (const std::exception& e) {
    report(err, category(e), e.what());
    return 1;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"emt"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace emt::cli
