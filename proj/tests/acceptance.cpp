// Acceptance runner: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <malloc.h>

#include <Eigen/QR>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "emt/metrics.hpp"
#include "emt/model.hpp"
#include "emt/ops.hpp"
#include "emt/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace emt;
using namespace emt::testing;
namespace fs = std::filesystem;
using TD = Tensor<double>;

namespace {

struct Check {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string num(double v, int prec = 3) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

void randomize(const EmtParameters<double>& p, std::uint64_t seed, double scale) {
  for (const auto& e : p.entries()) {
    auto r = random_tensor<double>(e.tensor.shape(), seed++, -scale, scale);
    auto t = e.tensor;
    std::copy(r.data().begin(), r.data().end(), t.mutable_data().begin());
    if (e.name.ends_with(".gamma")) {
      for (auto& v : t.mutable_data()) v += 1.0;
    }
  }
}

void zero(const TD& t) {
  auto m = t;
  std::fill(m.mutable_data().begin(), m.mutable_data().end(), 0.0);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = a.size() == b.size() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> batch_slice(const TD& x, std::int64_t n) {
  const auto per = x.numel() / x.dim(0);
  return {x.data().begin() + n * per, x.data().begin() + (n + 1) * per};
}

TD batch_item(const TD& x, std::int64_t n) {
  return TD::from({1, x.dim(1), x.dim(2), x.dim(3)}, batch_slice(x, n));
}

ImageRGB textured(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  auto img = ImageRGB::zeros(h, w);
  for (int c = 0; c < 3; ++c) {
    const double fx = 0.1 + 0.5 * rng.uniform01(), fy = 0.1 + 0.5 * rng.uniform01();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(c, y, x) = static_cast<float>(0.5 + 0.3 * std::sin(fx * x + fy * y) + 0.15 * (rng.uniform01() - 0.5));
  }
  return img;
}

// Piecewise-constant shapes over a smooth background plus two gratings: hard
// edges and fine periodic texture that bicubic upscaling blurs.
ImageRGB synthetic_hr(int size, std::uint64_t seed) {
  Rng rng(seed);
  auto img = ImageRGB::zeros(size, size);
  double corner[4][3];
  for (auto& c : corner)
    for (auto& v : c) v = 0.2 + 0.6 * rng.uniform01();
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = x / (size - 1.0), v = y / (size - 1.0);
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<float>((1 - u) * (1 - v) * corner[0][c] + u * (1 - v) * corner[1][c] +
                                             (1 - u) * v * corner[2][c] + u * v * corner[3][c]);
      }
    }
  for (int s = 0; s < 14; ++s) {
    const int kind = static_cast<int>(rng.uniform_int(3));
    const double cy = rng.uniform01() * size, cx = rng.uniform01() * size;
    const double ry = 3 + rng.uniform01() * size / 6, rx = 3 + rng.uniform01() * size / 6;
    double col[3];
    for (auto& v : col) v = rng.uniform01();
    const double period = 3 + 4 * rng.uniform01(), angle = 3.14159265 * rng.uniform01();
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        bool inside = kind == 0 ? std::abs(dy) <= 1 && std::abs(dx) <= 1 : dy * dy + dx * dx <= 1;
        if (!inside) continue;
        double a = 1.0;
        if (kind == 2) {
          const double t = (x * std::cos(angle) + y * std::sin(angle)) * 6.2831853 / period;
          a = 0.5 + 0.5 * std::sin(t);
        }
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(a * col[c] + (1 - a) * img.at(c, y, x));
      }
  }
  return quantized(img);
}

// ---------------------------------------------------------------------------

Check pixel_mixer_suite() {
  Check c;
  Rng rng(1);
  for (auto shape : std::vector<Shape>{{2, 10, 12, 12}, {1, 15, 7, 9}}) {
    const auto x = random_tensor<double>(shape, 11);
    const auto y = pixel_mixer(x);
    auto a = values(x), b = values(y);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    c.expect(a == b, "multiset preserved for " + shape_str(shape));

    const auto g = shape[1] / 5;
    auto groups = split_channels(y, std::vector<std::int64_t>(5, g));
    const auto rules = shift_rules(1);
    for (int k = 0; k < 5; ++k) groups[k] = roll2d(groups[k], -rules[k].dh, -rules[k].dw);
    c.expect(values(concat_channels(groups)) == values(x), "inverse rules restore " + shape_str(shape));

    for (int t = 0; t < 20; ++t) {
      const int dh = static_cast<int>(rng.uniform_int(41)) - 20, dw = static_cast<int>(rng.uniform_int(41)) - 20;
      c.expect(values(pixel_mixer(roll2d(x, dh, dw))) == values(roll2d(y, dh, dw)),
               "commutes with shift (" + std::to_string(dh) + "," + std::to_string(dw) + ")");
    }
  }
  auto cfg = ModelConfig::paper(4);
  const auto rep = count_flops(cfg, 64, 64);
  bool found = false;
  for (const auto& l : rep.lines) {
    if (l.component == "ltl.token_mixer") {
      found = true;
      c.expect(l.params == 0 && l.macs == 0, "token mixer reports 0 params / 0 macs");
    }
  }
  c.expect(found, "token mixer line present");
  auto ident = cfg;
  ident.ltl_mixer = TokenMixer::identity;
  c.expect(count_params(ident) == count_params(cfg), "identity mixer has the same parameter count");
  c.expect(count_flops(ident, 64, 64).macs() == rep.macs(), "identity mixer has the same macs");
  c.note("2 shapes, 20 random shifts each, exact equality");
  return c;
}

Check swsa_oracle() {
  Check c;
  double worst = 0;
  for (auto [wins, heads] : std::vector<std::pair<std::array<WindowSpec, 2>, int>>{
           {{{{8, 4}, {4, 8}}}, 1}, {{{{16, 2}, {2, 16}}}, 5}, {{{{2, 4}, {4, 2}}}, 5}}) {
    ModelConfig cfg;
    cfg.channels = 10;
    cfg.heads = heads;
    cfg.windows = wins;
    cfg.num_mtb = 1;
    cfg.out_proj = false;
    EmtParameters<double> params(cfg);
    randomize(params, 100 + heads, 0.5);
    const auto& attn = params.blocks[0].layers[1].attn;
    const auto x = random_tensor<double>({2, 10, 16, 16}, 7);
    const auto halves = split_channels(x, {5, 5});
    for (int k = 0; k < 2; ++k) {
      const auto got = swsa_half(halves[k], attn, cfg, k);
      for (std::int64_t n = 0; n < 2; ++n) {
        const auto want = masked_dense_half(batch_item(halves[k], n), attn.q[k], attn.v[k], wins[k], heads);
        worst = std::max(worst, max_abs_diff(batch_slice(got, n), want));
      }
    }

    // Locality: a pixel perturbed in one half moves only its own window of that half.
    const auto base = swsa(x, attn, cfg);
    Rng rng(9);
    for (int t = 0; t < 12; ++t) {
      const int half = t % 2;
      const auto py = static_cast<std::int64_t>(rng.uniform_int(16)), px = static_cast<std::int64_t>(rng.uniform_int(16));
      const auto ch = static_cast<std::int64_t>(half * 5 + rng.uniform_int(5));
      auto xp = x.detach();
      xp.mutable_data()[((1 * 10 + ch) * 16 + py) * 16 + px] += 0.7;
      const auto out = swsa(xp, attn, cfg);
      const auto win = wins[half];
      bool changed_inside = false, leaked = false;
      for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t o = 0; o < 10; ++o)
          for (std::int64_t i = 0; i < 16; ++i)
            for (std::int64_t j = 0; j < 16; ++j) {
              const bool same = out.at({n, o, i, j}) == base.at({n, o, i, j});
              const bool allowed = n == 1 && o / 5 == half && i / win.h == py / win.h && j / win.w == px / win.w;
              if (!same && !allowed) leaked = true;
              if (!same && allowed) changed_inside = true;
            }
      c.expect(!leaked, "perturbation stays inside its window and half");
      c.expect(changed_inside, "perturbation reaches its window");
    }
  }
  c.expect(worst < 1e-6, "windowed vs masked dense max abs diff " + num(worst) + " < 1e-6");
  c.note("max abs diff " + num(worst) + " (tol 1e-6) on 2x10x16x16, 3 geometries; locality exact");
  return c;
}

Check gradient_audit() {
  Check c;
  double worst = 0;
  std::string worst_name;
  auto audit = [&](const std::string& name, std::vector<TD> inputs, const std::function<TD()>& f,
                   double floor = 1e-6) {
    const auto r = grad_check(std::move(inputs), f, floor);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name + " " + r.worst;
    }
    c.expect(r.max_rel_error < 1e-4, name + " relative error " + num(r.max_rel_error));
  };
  auto rt = [](Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
    return random_tensor<double>(std::move(s), seed, lo, hi, true);
  };

  auto a = rt({2, 5, 3, 4}, 1), b = rt({2, 5, 3, 4}, 2), bias = rt({5}, 3);
  audit("add", {a, b}, [&] { return weighted_sum(add(a, b)); });
  audit("sub", {a, b}, [&] { return weighted_sum(sub(a, b)); });
  audit("mul", {a, b}, [&] { return weighted_sum(mul(a, b)); });
  audit("scalar_mul", {a}, [&] { return weighted_sum(scalar_mul(a, 1.7)); });
  audit("add_channel_bias", {a, bias}, [&] { return weighted_sum(add_channel_bias(a, bias)); });
  audit("sum", {a}, [&] { return scalar_mul(sum(mul(a, a)), 0.5); });
  audit("mean", {a}, [&] { return mean(mul(a, b)); });

  auto m1 = rt({4, 6}, 4), m2 = rt({6, 3}, 5);
  audit("matmul", {m1, m2}, [&] { return weighted_sum(matmul(m1, m2)); });
  auto b1 = rt({3, 4, 5}, 6), b2 = rt({3, 5, 2}, 7), b1t = rt({3, 5, 4}, 8), b2t = rt({3, 2, 5}, 9);
  audit("bmm", {b1, b2}, [&] { return weighted_sum(bmm(b1, b2, false, false)); });
  audit("bmm_ta", {b1t, b2}, [&] { return weighted_sum(bmm(b1t, b2, true, false)); });
  audit("bmm_tb", {b1, b2t}, [&] { return weighted_sum(bmm(b1, b2t, false, true)); });
  audit("bmm_tab", {b1t, b2t}, [&] { return weighted_sum(bmm(b1t, b2t, true, true)); });

  auto x = rt({2, 3, 5, 6}, 10), w3 = rt({4, 3, 3, 3}, 11), cb = rt({4}, 12), w1 = rt({4, 3}, 13);
  audit("conv2d_3x3", {x, w3, cb}, [&] { return weighted_sum(conv2d_3x3(x, w3, cb)); });
  audit("conv2d_1x1", {x, w1, cb}, [&] { return weighted_sum(conv2d_1x1(x, w1, cb)); });
  auto gamma = rt({3}, 14, 0.5, 1.5), beta = rt({3}, 15);
  audit("layer_norm", {x, gamma, beta}, [&] { return weighted_sum(layer_norm(x, gamma, beta)); });
  audit("gelu", {x}, [&] { return weighted_sum(gelu(scalar_mul(x, 3.0))); });
  audit("softmax_lastdim", {b1}, [&] { return weighted_sum(softmax_lastdim(scalar_mul(b1, 2.0))); });
  audit("roll2d", {x}, [&] { return weighted_sum(roll2d(x, 2, -3)); });
  audit("split/concat", {x}, [&] {
    auto parts = split_channels(x, {1, 2});
    return weighted_sum(concat_channels(std::vector<TD>{mul(parts[1], parts[1]), parts[0]}));
  });
  auto xw = rt({2, 3, 4, 6}, 16);
  audit("window_partition", {xw}, [&] { return weighted_sum(window_partition(xw, {2, 3})); });
  auto ww = rt({8, 3, 6}, 17);
  audit("window_merge", {ww}, [&] { return weighted_sum(window_merge(ww, {2, 3}, 2, 4, 6)); });
  auto ps = rt({1, 8, 3, 2}, 18);
  audit("pixel_shuffle", {ps}, [&] { return weighted_sum(pixel_shuffle(ps, 2)); });
  audit("pixel_unshuffle", {xw}, [&] { return weighted_sum(pixel_unshuffle(xw, 2)); });
  audit("reshape", {x}, [&] { return weighted_sum(reshape(x, {6, 30})); });
  audit("pad_reflect", {x}, [&] { return weighted_sum(pad_reflect(x, 4, 7)); });
  audit("crop", {x}, [&] { return weighted_sum(crop(x, 1, 2, 3, 3)); });
  // Target offset by at least 0.1 everywhere, away from the kink at zero.
  auto pred = rt({2, 3, 4, 4}, 19);
  auto target = pred.detach();
  {
    Rng r(20);
    for (auto& v : target.mutable_data()) v += (r.uniform01() < 0.5 ? -1 : 1) * (0.1 + r.uniform01());
  }
  audit("l1_loss", {pred}, [&] { return l1_loss(pred, target); });
  auto pm = rt({1, 10, 4, 5}, 21);
  audit("pixel_mixer", {pm}, [&] { return weighted_sum(mul(pixel_mixer(pm), pm)); });

  // Whole tiny model, every parameter.
  const auto cfg = ModelConfig::tiny();
  EmtParameters<double> params(cfg);
  randomize(params, 900, 0.1);
  const auto img = random_tensor<double>({1, 3, 4, 4}, 95, 0, 1);
  std::vector<TD> all;
  for (const auto& e : params.entries()) all.push_back(e.tensor);
  // Gradients under 1e-4 are held to 1e-8 absolute (FD roundoff floor at h = 1e-5).
  audit("tiny EMT (" + std::to_string(count_params(cfg)) + " params)", all,
        [&] { return weighted_sum(emt_forward(img, params)); }, 1e-4);

  c.note("worst relative error " + num(worst) + " (tol 1e-4) at " + worst_name);
  return c;
}

Check parameter_counts() {
  Check c;
  const auto x4 = count_params(ModelConfig::paper(4)), x3 = count_params(ModelConfig::paper(3));
  c.expect(std::abs(x4 - 690000.0) <= 0.15 * 690000, "x4 within 690K +-15%");
  c.expect(std::abs(x3 - 678000.0) <= 0.15 * 678000, "x3 within 678K +-15%");
  c.expect(EmtParameters<double>(ModelConfig::paper(4)).scalar_count() == x4, "built x4 model matches count");

  auto zero_gtl = ModelConfig::paper(4);
  zero_gtl.gtl_count = 0;
  zero_gtl.validate();
  auto params = EmtParameters<double>::initialized(zero_gtl, 3);
  c.expect(params.scalar_count() == count_params(zero_gtl), "MTB-0GTL count matches");
  const auto y = emt_forward(random_tensor<double>({1, 3, 5, 7}, 1, 0, 1), params);
  c.expect(y.shape() == Shape{1, 3, 20, 28}, "MTB-0GTL forward shape");
  c.note("x4 " + std::to_string(x4) + " (" + num(100.0 * (x4 - 690000) / 690000) + "% vs 690K), x3 " +
         std::to_string(x3) + " (" + num(100.0 * (x3 - 678000) / 678000) + "% vs 678K), MTB-0GTL " +
         std::to_string(count_params(zero_gtl)));
  return c;
}

// Trailing mean of losses over iterations (k-9..k).
double trailing_mean(const std::vector<double>& loss, std::size_t k) {
  double s = 0;
  for (std::size_t i = k - 9; i <= k; ++i) s += loss[i - 1];
  return s / 10;
}

Check desk_overfit() {
  Check c;
  const auto root = fs::temp_directory_path() / "emt_acceptance_overfit";
  fs::remove_all(root);
  fs::create_directories(root / "data" / "HR");
  save_png(synthetic_hr(96, 11), root / "data" / "HR" / "img1.png");
  save_png(synthetic_hr(96, 12), root / "data" / "HR" / "img2.png");
  std::ofstream(root / "desk.cfg") << "[model]\nprofile = desk\nscale = 2\n\n"
                                   << "[train]\nprofile = desk\nseed = 1\nout_dir = run\n\n"
                                   << "[data]\ndataset = data\n";
  std::ostringstream out, err;
  const int code = cli::run({"train", "--config", (root / "desk.cfg").string()}, out, err);
  c.expect(code == 0, "train exit code (" + err.str() + ")");
  if (code != 0) return c;
  c.expect(fs::exists(root / "run" / "ckpt_2000"), "ckpt_2000 written");

  std::vector<double> loss;
  std::ifstream log(root / "run" / "loss.tsv");
  std::string line;
  std::getline(log, line);
  while (std::getline(log, line)) {
    std::istringstream ls(line);
    std::string it, lr, l;
    std::getline(ls, it, '\t');
    std::getline(ls, lr, '\t');
    std::getline(ls, l, '\t');
    loss.push_back(std::stod(l));
  }
  c.expect(loss.size() == 2000, "2000 logged steps");
  if (loss.size() != 2000) return c;
  const double early = trailing_mean(loss, 10), late = trailing_mean(loss, 2000);

  const auto ds = Dataset::open(root / "data", 2);
  const auto model = cli::evaluate({(root / "run" / "ckpt_2000").string()}, ds);
  const auto bicubic = cli::evaluate({"bicubic"}, ds);
  const double gain = model.mean_psnr - bicubic.mean_psnr;
  c.expect(late < 0.5 * early, "final loss below half of iteration-10 loss");
  c.expect(gain >= 0.5, "PSNR gain over bicubic >= 0.5 dB");
  c.note("loss@10 " + num(early, 4) + " -> loss@2000 " + num(late, 4) + " (ratio " + num(late / early) +
         ", need < 0.5); Y-PSNR " + num(model.mean_psnr, 5) + " vs bicubic " + num(bicubic.mean_psnr, 5) +
         " dB (gain " + num(gain) + ", need >= 0.5)");
  fs::remove_all(root);
  return c;
}

Check metric_oracles() {
  Check c;
  double worst_psnr = 0, worst_ssim = 0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto a = textured(32, 32, 40 + s);
    auto b = a;
    Rng rng(50 + s);
    for (auto& v : b.data) v = static_cast<float>(std::clamp(v + 0.08 * (rng.uniform01() - 0.5), 0.0, 1.0));
    for (int border : {0, 2}) {
      worst_psnr = std::max(worst_psnr, std::abs(psnr_y(a, b, border) - psnr_oracle(a, b, border)));
      worst_ssim = std::max(worst_ssim, std::abs(ssim_y(a, b, border) - ssim_oracle(a, b, border)));
    }
    c.expect(psnr_y(a, a, 2) == std::numeric_limits<double>::infinity(), "identical PSNR is inf");
    c.expect(ssim_y(a, a, 2) == 1.0, "identical SSIM is exactly 1");
  }
  c.expect(worst_psnr < 1e-8, "PSNR oracle diff " + num(worst_psnr));
  c.expect(worst_ssim < 1e-8, "SSIM oracle diff " + num(worst_ssim));
  c.note("PSNR max diff " + num(worst_psnr) + ", SSIM max diff " + num(worst_ssim) +
         " (tol 1e-8) on 32x32 pairs; identical -> inf / 1");
  return c;
}

Eigen::MatrixXd rand_matrix(int r, int k, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(r, k);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < k; ++j) m(i, j) = 2 * rng.uniform01() - 1;
  return m;
}

Check cka_suite() {
  Check c;
  double worst_inv = 0, worst_hsic = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const int p1 = 2 + static_cast<int>(s % 9), p2 = 1 + static_cast<int>((3 * s) % 13);
    const auto x = rand_matrix(12, p1, 100 + s), y = rand_matrix(12, p2, 200 + s);
    const double xy = cka(x, y);
    worst_hsic = std::max(worst_hsic, std::abs(xy - cka_oracle(x, y)));
    c.expect(std::abs(cka(x, x) - 1.0) < 1e-12, "self-similarity is 1");
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(rand_matrix(p1, p1, 300 + s)).householderQ();
    worst_inv = std::max(worst_inv, std::abs(cka(x * q, y) - xy));
    worst_inv = std::max(worst_inv, std::abs(cka(x, x * q) - 1.0));
    worst_inv = std::max(worst_inv, std::abs(cka(-3.5 * x, y) - xy));
    worst_inv = std::max(worst_inv, std::abs(cka(x, 0.01 * y) - xy));
    c.expect(xy >= 0 && xy <= 1, "value in [0, 1]");
  }
  c.expect(worst_inv < 1e-8, "invariance error " + num(worst_inv));
  c.expect(worst_hsic < 1e-10, "HSIC oracle diff " + num(worst_hsic));

  const auto cfg = ModelConfig::tiny();
  EmtParameters<double> params(cfg);
  randomize(params, 50, 0.3);
  zero(params.blocks[0].layers[1].attn.proj_w);
  zero(params.blocks[0].layers[1].attn.proj_b);
  zero(params.blocks[0].layers[1].mlp.fc2_w);
  zero(params.blocks[0].layers[1].mlp.fc2_b);
  std::vector<ImageRGB> patches;
  for (int i = 0; i < 8; ++i) patches.push_back(textured(8, 8, 60 + i));
  CkaOptions opt;
  opt.minibatch = 8;
  const auto m = cka_heatmap(params, patches, opt);
  double asym = 0, diag = 0;
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    diag = std::max(diag, std::abs(m.values(i, i) - 1.0));
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) asym = std::max(asym, std::abs(m.values(i, j) - m.values(j, i)));
  }
  c.expect(asym <= 1e-10 && diag == 0, "heatmap symmetric with unit diagonal");
  c.expect(std::abs(m.values(1, 2) - 1.0) < 1e-6, "duplicated layer scores 1");
  c.note("invariance " + num(worst_inv) + " (tol 1e-8), HSIC oracle " + num(worst_hsic) +
         " (tol 1e-10), heatmap " + std::to_string(m.layers.size()) + " layers, asymmetry " + num(asym));
  return c;
}

Check mad_suite() {
  Check c;
  const double one = 1.0;
  c.expect(attention_distance(&one, {1, 1}) == 0.0, "1x1 window MAD is 0");
  const std::vector<double> u(16, 0.25);
  const double uniform = attention_distance(u.data(), {1, 4});
  c.expect(std::abs(uniform - 1.25) < 1e-12, "uniform 1x4 MAD is 1.25");

  const auto cfg = ModelConfig::paper(4);
  const auto params = EmtParameters<double>::initialized(cfg, 8);
  std::vector<ImageRGB> patches{textured(32, 32, 1), textured(32, 32, 2)};
  const auto rows = mad(params, patches, 2);
  double lo = 1e9, hi = 0, row_err = 0;
  bool in_bounds = true;
  for (const auto& r : rows) {
    lo = std::min(lo, r.mad);
    hi = std::max(hi, r.mad / window_diagonal(r.window));
    row_err = std::max(row_err, r.max_row_error);
    in_bounds = in_bounds && r.mad >= 0 && r.mad <= window_diagonal(r.window);
  }
  const auto expected_rows = static_cast<std::size_t>(cfg.num_mtb * cfg.gtl_count * 2 * cfg.heads);
  c.expect(rows.size() == expected_rows, "one row per block, GTL, half and head");
  c.expect(in_bounds, "all MAD within [0, window diagonal]");
  c.expect(row_err < 1e-5, "attention rows sum to 1 +- 1e-5");
  c.note("1x1 -> 0, uniform 1x4 -> " + num(uniform, 15) + "; paper model " + std::to_string(rows.size()) +
         " rows, min " + num(lo) + " px, max " + num(hi) + " of diagonal, row-sum error " + num(row_err));
  return c;
}

template <typename T>
bool same_state(const Trainer<T>& a, const Trainer<T>& b) {
  const auto& pa = a.params().entries();
  const auto& pb = b.params().entries();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin())) {
      return false;
    }
  }
  return a.optimizer().first_moments() == b.optimizer().first_moments() &&
         a.optimizer().second_moments() == b.optimizer().second_moments() &&
         a.optimizer().step_count() == b.optimizer().step_count();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Check determinism() {
  Check c;
  const auto data = Dataset::from_images({synthetic_hr(48, 1), synthetic_hr(40, 2)}, 2);
  auto model = ModelConfig::desk();
  auto train = TrainConfig::desk();
  train.batch_size = 3;
  train.patch_lr = 12;
  train.total_iters = 12;
  train.dtype = DType::f64;
  train.seed = 5;

  Trainer<double> a(model, train, data), b(model, train, data);
  a.set_threads(1);
  b.set_threads(3);
  std::vector<double> la, lb;
  while (!a.done()) la.push_back(a.step().loss);
  while (!b.done()) lb.push_back(b.step().loss);
  c.expect(la == lb && same_state(a, b), "two fixed-seed f64 runs are bit-identical");

  const auto dir = fs::temp_directory_path() / "emt_acceptance_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Trainer<double> first(model, train, data);
  for (int i = 0; i < 5; ++i) first.step();
  first.save(dir / "mid");
  auto resumed = Trainer<double>::resume(dir / "mid", data);
  resumed.save(dir / "mid_again");
  c.expect(read_bytes(dir / "mid") == read_bytes(dir / "mid_again"), "save/load/save is byte-identical");
  std::vector<double> lr_tail;
  while (!resumed.done()) lr_tail.push_back(resumed.step().loss);
  c.expect(same_state(a, resumed), "resumed run matches the uninterrupted run bit-for-bit");
  c.expect(std::equal(lr_tail.begin(), lr_tail.end(), la.begin() + 5), "resumed losses match");
  a.save(dir / "full");
  resumed.save(dir / "full_resumed");
  c.expect(read_bytes(dir / "full") == read_bytes(dir / "full_resumed"), "final checkpoints byte-identical");

  auto bytes = read_bytes(dir / "full");
  int rejected = 0, trials = 0;
  for (std::size_t pos : {std::size_t{5}, bytes.size() / 3, bytes.size() / 2, bytes.size() - 20, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
    std::ofstream(dir / "bad", std::ios::binary) << bad;
    ++trials;
    try {
      load_checkpoint<double>(dir / "bad");
    } catch (const CheckpointError&) {
      ++rejected;
    }
  }
  c.expect(rejected == trials, "every corrupted checkpoint is rejected");
  fs::remove_all(dir);
  c.note("12 f64 steps x2 identical (1 vs 3 data threads); resume at 5 matches; " + std::to_string(rejected) +
         "/" + std::to_string(trials) + " corruptions rejected");
  return c;
}

struct Criterion {
  int id;
  std::string name;
  double limit_s;  // 0: no runtime bound
  std::function<Check()> run;
};

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);

  const std::vector<Criterion> all{
      {1, "pixel mixer suite", 1, pixel_mixer_suite},
      {2, "SWSA oracle equivalence", 10, swsa_oracle},
      {3, "gradient audit", 120, gradient_audit},
      {4, "parameter counts", 1, parameter_counts},
      {5, "desk-scale overfit", 900, desk_overfit},
      {6, "metric oracles", 0, metric_oracles},
      {7, "CKA suite", 5, cka_suite},
      {8, "MAD suite", 30, mad_suite},
      {9, "determinism and persistence", 0, determinism},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& cr : all) {
    if (!pick.empty() && !pick.count(cr.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Check res;
    try {
      res = cr.run();
    } catch (const std::exception& e) {
      res.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.limit_s > 0) res.expect(secs < cr.limit_s, "runtime " + num(secs) + " s over " + num(cr.limit_s) + " s");
    std::string detail;
    for (const auto& n : res.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("%s %d %s | %s | %.2f s%s\n", res.ok ? "PASS" : "FAIL", cr.id, cr.name.c_str(), detail.c_str(),
                secs, cr.limit_s > 0 ? (" (limit " + num(cr.limit_s) + " s)").c_str() : "");
    std::fflush(stdout);
    failed += !res.ok;
  }
  return failed == 0 ? 0 : 1;
}
