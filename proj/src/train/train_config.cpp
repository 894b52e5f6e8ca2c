#include <cmath>
#include <numbers>

#include "emt/kv.hpp"
#include "emt/train.hpp"

namespace emt {

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 8;
  c.patch_lr = 32;
  c.total_iters = 2000;
  c.lr_init = 1e-3;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid train config: " + m); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (patch_lr < 1) fail("patch_lr must be >= 1");
  if (total_iters < 1) fail("total_iters must be >= 1");
  if (!(lr_init >= 0) || !(lr_min >= 0)) fail("learning rates must be non-negative");
  if (lr_min > lr_init) fail("lr_min exceeds lr_init");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("Adam betas must be in [0,1)");
  if (!(eps_adam > 0)) fail("eps_adam must be positive");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

void TrainConfig::set(std::string_view key, std::string_view value) {
  using namespace kv;
  if (key == "batch_size") batch_size = parse_int(key, value);
  else if (key == "patch_lr") patch_lr = parse_int(key, value);
  else if (key == "total_iters") total_iters = parse_i64(key, value);
  else if (key == "lr_init") lr_init = parse_double(key, value);
  else if (key == "lr_min") lr_min = parse_double(key, value);
  else if (key == "beta1") beta1 = parse_double(key, value);
  else if (key == "beta2") beta2 = parse_double(key, value);
  else if (key == "eps_adam") eps_adam = parse_double(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "checkpoint_every") checkpoint_every = parse_i64(key, value);
  else if (key == "augment") augment = parse_bool(key, value);
  else if (key == "dtype") {
    const auto v = trim(value);
    if (v == "f32") dtype = DType::f32;
    else if (v == "f64") dtype = DType::f64;
    else throw ConfigError("invalid value '" + std::string(v) + "' for key 'dtype': expected f32|f64");
  } else {
    throw ConfigError("unknown train key '" + std::string(key) + "'");
  }
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  return {
      {"batch_size", std::to_string(batch_size)},
      {"patch_lr", std::to_string(patch_lr)},
      {"total_iters", std::to_string(total_iters)},
      {"lr_init", kv::format_double(lr_init)},
      {"lr_min", kv::format_double(lr_min)},
      {"beta1", kv::format_double(beta1)},
      {"beta2", kv::format_double(beta2)},
      {"eps_adam", kv::format_double(eps_adam)},
      {"seed", std::to_string(seed)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"dtype", dtype_name(dtype)},
      {"augment", augment ? "on" : "off"},
  };
}

double cosine_lr(std::int64_t t, const TrainConfig& cfg) {
  if (t < 0 || t > cfg.total_iters) {
    throw TrainError("cosine_lr: t=" + std::to_string(t) + " outside [0, " +
                     std::to_string(cfg.total_iters) + "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(cfg.total_iters);
  return cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 + std::cos(phase));
}

}  // namespace emt
