#include <cmath>
#include <numeric>

#include "emt/kv.hpp"
#include "emt/model.hpp"

namespace emt {

ModelConfig ModelConfig::paper(int scale) {
  ModelConfig c;
  c.scale = scale;
  c.mtb_conv = false;
  return c;
}

ModelConfig ModelConfig::desk(int scale) {
  ModelConfig c;
  c.channels = 20;
  c.num_mtb = 2;
  c.heads = 2;
  c.windows = {{{8, 2}, {2, 8}}};
  c.scale = scale;
  return c;
}

ModelConfig ModelConfig::tiny(int scale) {
  ModelConfig c = desk(scale);
  c.num_mtb = 1;
  c.windows = {{{4, 2}, {2, 4}}};
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid model config: " + m); };
  if (channels <= 0 || channels % 5 != 0) {
    fail("channels=" + std::to_string(channels) + " must be a positive multiple of 5 (pixel mixer groups)");
  }
  if (channels % 2 != 0) fail("channels=" + std::to_string(channels) + " must be even (SWSA halves)");
  if (heads <= 0 || (channels / 2) % heads != 0) {
    fail("channels/2=" + std::to_string(channels / 2) + " not divisible by heads=" + std::to_string(heads));
  }
  if (num_mtb < 0) fail("num_mtb must be >= 0");
  if (layers_per_mtb < 1) fail("layers_per_mtb must be >= 1");
  if (gtl_count < 0 || gtl_count > layers_per_mtb) {
    fail("gtl_count=" + std::to_string(gtl_count) + " must be in [0, layers_per_mtb]");
  }
  if (windows[0].h < 1 || windows[0].w < 1) fail("window extents must be >= 1");
  if (!(windows[1] == windows[0].transposed())) {
    fail("windows " + window_str(windows[0]) + "," + window_str(windows[1]) +
         " are not mutually perpendicular");
  }
  if (scale < 1) fail("scale must be >= 1");
  if (!(mlp_ratio > 0)) fail("mlp_ratio must be positive");
  if (mlp_hidden() < 1) fail("mlp hidden width rounds to zero");
  if (shift_step < 0) fail("shift_step must be >= 0");
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (!(norm_eps > 0)) fail("norm_eps must be positive");
}

int ModelConfig::mlp_hidden() const {
  return static_cast<int>(std::lround(mlp_ratio * channels));
}

std::vector<int> ModelConfig::gtl_positions() const {
  std::vector<int> pos;
  for (int i = 0; i < gtl_count; ++i) pos.push_back((2 * i + 1) * layers_per_mtb / (2 * gtl_count));
  return pos;
}

bool ModelConfig::is_global(int layer) const {
  for (int p : gtl_positions()) {
    if (p == layer) return true;
  }
  return false;
}

int ModelConfig::pad_multiple() const {
  if (gtl_count == 0 || num_mtb == 0) return 1;
  return std::lcm(windows[0].h, windows[0].w);
}

void ModelConfig::set(std::string_view key, std::string_view value) {
  using namespace kv;
  if (key == "channels") channels = parse_int(key, value);
  else if (key == "num_mtb") num_mtb = parse_int(key, value);
  else if (key == "layers_per_mtb") layers_per_mtb = parse_int(key, value);
  else if (key == "gtl_count") gtl_count = parse_int(key, value);
  else if (key == "heads") heads = parse_int(key, value);
  else if (key == "windows") {
    const auto comma = value.find(',');
    const auto first = parse_window(key, value.substr(0, comma));
    windows = {first, comma == std::string_view::npos ? first.transposed()
                                                      : parse_window(key, value.substr(comma + 1))};
  } else if (key == "scale") scale = parse_int(key, value);
  else if (key == "mlp_ratio") mlp_ratio = parse_double(key, value);
  else if (key == "shift_step") shift_step = parse_int(key, value);
  else if (key == "in_channels") in_channels = parse_int(key, value);
  else if (key == "mtb_conv") mtb_conv = parse_bool(key, value);
  else if (key == "out_proj") out_proj = parse_bool(key, value);
  else if (key == "norm_eps") norm_eps = parse_double(key, value);
  else if (key == "ltl_mixer") {
    const auto v = trim(value);
    if (v == "pixel_mixer") ltl_mixer = TokenMixer::pixel_mixer;
    else if (v == "identity") ltl_mixer = TokenMixer::identity;
    else throw ConfigError("invalid value '" + std::string(v) + "' for key 'ltl_mixer': expected pixel_mixer|identity");
  } else {
    throw ConfigError("unknown model key '" + std::string(key) + "'");
  }
}

std::vector<std::pair<std::string, std::string>> ModelConfig::entries() const {
  auto onoff = [](bool b) { return std::string(b ? "on" : "off"); };
  return {
      {"channels", std::to_string(channels)},
      {"num_mtb", std::to_string(num_mtb)},
      {"layers_per_mtb", std::to_string(layers_per_mtb)},
      {"gtl_count", std::to_string(gtl_count)},
      {"heads", std::to_string(heads)},
      {"windows", window_str(windows[0]) + "," + window_str(windows[1])},
      {"scale", std::to_string(scale)},
      {"mlp_ratio", kv::format_double(mlp_ratio)},
      {"shift_step", std::to_string(shift_step)},
      {"in_channels", std::to_string(in_channels)},
      {"mtb_conv", onoff(mtb_conv)},
      {"out_proj", onoff(out_proj)},
      {"ltl_mixer", ltl_mixer == TokenMixer::pixel_mixer ? "pixel_mixer" : "identity"},
      {"norm_eps", kv::format_double(norm_eps)},
  };
}

std::array<ShiftRule, 5> shift_rules(int step) {
  return {{{-step, 0}, {0, step}, {0, -step}, {step, 0}, {0, 0}}};
}

// ---------------------------------------------------------------------------

std::int64_t ComplexityReport::params() const {
  std::int64_t s = 0;
  for (const auto& l : lines) s += l.params;
  return s;
}

std::int64_t ComplexityReport::macs() const {
  std::int64_t s = 0;
  for (const auto& l : lines) s += l.macs;
  return s;
}

namespace {

std::int64_t round_up(std::int64_t v, std::int64_t m) { return (v + m - 1) / m * m; }

}  // namespace

std::int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t c = cfg.channels, half = c / 2, hid = cfg.mlp_hidden(), cin = cfg.in_channels;
  const std::int64_t r2 = static_cast<std::int64_t>(cfg.scale) * cfg.scale;
  const std::int64_t norm = 2 * c;
  const std::int64_t mlp = c * hid + hid + hid * c + c;
  const std::int64_t ltl = norm + mlp;
  const std::int64_t attn = 2 * (half * half) * 2 + (cfg.out_proj ? c * c + c : 0);
  const std::int64_t gtl = norm + attn + norm + mlp;
  const std::int64_t block = (cfg.layers_per_mtb - cfg.gtl_count) * ltl + cfg.gtl_count * gtl +
                             (cfg.mtb_conv ? c * c * 9 + c : 0);
  const std::int64_t sfeu = c * cin * 9 + c;
  const std::int64_t recu = cin * r2 * c * 9 + cin * r2;
  return sfeu + cfg.num_mtb * block + recu;
}

ComplexityReport count_flops(const ModelConfig& cfg, std::int64_t h, std::int64_t w) {
  cfg.validate();
  if (h < 1 || w < 1) throw ConfigError("flop count needs a positive resolution");
  ComplexityReport rep;
  const std::int64_t m = cfg.pad_multiple();
  rep.padded_h = round_up(h, m);
  rep.padded_w = round_up(w, m);
  const std::int64_t hw = h * w, phw = rep.padded_h * rep.padded_w;
  const std::int64_t c = cfg.channels, half = c / 2, hid = cfg.mlp_hidden(), cin = cfg.in_channels;
  const std::int64_t r2 = static_cast<std::int64_t>(cfg.scale) * cfg.scale;
  const std::int64_t n_gtl = static_cast<std::int64_t>(cfg.num_mtb) * cfg.gtl_count;
  const std::int64_t n_ltl = static_cast<std::int64_t>(cfg.num_mtb) * (cfg.layers_per_mtb - cfg.gtl_count);
  const std::int64_t mlp_p = c * hid + hid + hid * c + c, mlp_m = phw * 2 * c * hid;

  auto line = [&](std::string name, std::int64_t n, std::int64_t p, std::int64_t macs) {
    rep.lines.push_back({std::move(name), n, n * p, n * macs});
  };
  line("sfeu.conv3x3", 1, c * cin * 9 + c, hw * c * cin * 9);
  line("ltl.token_mixer", n_ltl, 0, 0);
  line("ltl.norm", n_ltl, 2 * c, 0);
  line("ltl.mlp", n_ltl, mlp_p, mlp_m);
  line("gtl.norm1", n_gtl, 2 * c, 0);
  line("gtl.swsa.qv", n_gtl, 4 * half * half, phw * 4 * half * half);
  // Q·Qᵀ and A·V: each phw·L·(C/2) per half.
  std::int64_t attn = 0;
  for (const auto& win : cfg.windows) attn += 2 * phw * win.area() * half;
  line("gtl.swsa.attention", n_gtl, 0, attn);
  if (cfg.out_proj) line("gtl.swsa.proj", n_gtl, c * c + c, phw * c * c);
  line("gtl.norm2", n_gtl, 2 * c, 0);
  line("gtl.mlp", n_gtl, mlp_p, mlp_m);
  if (cfg.mtb_conv) line("mtb.conv3x3", cfg.num_mtb, c * c * 9 + c, phw * c * c * 9);
  line("recu.conv3x3", 1, cin * r2 * c * 9 + cin * r2, phw * cin * r2 * c * 9);
  line("recu.pixel_shuffle", 1, 0, 0);
  return rep;
}

}  // namespace emt
