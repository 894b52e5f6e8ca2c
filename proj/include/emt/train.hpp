#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emt/data.hpp"
#include "emt/model.hpp"

namespace emt {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int batch_size = 64;
  int patch_lr = 64;
  std::int64_t total_iters = 1'000'000;
  double lr_init = 5e-4;
  double lr_min = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  DType dtype = DType::f32;
  bool augment = true;

  /// Desk profile: patch 32, batch 8, 2000 iterations, lr 1e-3.
  static TrainConfig desk();

  void validate() const;
  void set(std::string_view key, std::string_view value);
  std::vector<std::pair<std::string, std::string>> entries() const;
  bool operator==(const TrainConfig&) const = default;
};

/// lr_min + (lr_init - lr_min)·(1 + cos(pi·t/total))/2 for t in [0, total].
double cosine_lr(std::int64_t t, const TrainConfig& cfg);

/// mean(|pred - target|); the subgradient uses sign(0) = 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
using NamedTensor = typename EmtParameters<T>::Entry;

/// Bias-corrected Adam. Moments are kept per tensor in the order given to
/// the constructor; step() must be called with the same list.
template <typename T>
class Adam {
 public:
  Adam(const std::vector<NamedTensor<T>>& params, double beta1, double beta2, double eps);

  /// Updates every tensor in place from its gradient. A tensor without a
  /// gradient is an error naming it.
  void step(const std::vector<NamedTensor<T>>& params, double lr);

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (little-endian): "EMTC", u32 version = 1, u32 tensor count, then per
// tensor: u16 name length, name bytes, u8 dtype (0 f32, 1 f64, 2 u8), u8 rank,
// rank × u32 extents, payload; finally u64 CRC-64/XZ of every preceding byte.
//
// Tensors: "__config__" (u8 text, one key=value per line: model.*, train.*,
// iteration, adam_step), then "param/<name>", "adam_m/<name>", "adam_v/<name>"
// for every parameter in EmtParameters order.

/// CRC-64/XZ (ECMA-182 polynomial, reflected, init and xorout all ones).
std::uint64_t crc64(const void* data, std::size_t size, std::uint64_t crc = 0);

template <typename T>
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::int64_t iteration = 0;
  EmtParameters<T> params;
  std::int64_t adam_step = 0;
  std::vector<std::vector<T>> adam_m, adam_v;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& model,
                     const TrainConfig& train, std::int64_t iteration,
                     const EmtParameters<T>& params, const Adam<T>& opt);

/// Reads a checkpoint, building parameters from the embedded model config.
/// Payloads stored in the other float width are converted.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);
/// As above, but parameters are shaped by `expected`; a tensor whose stored
/// shape disagrees raises ShapeError naming it.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

/// Model and training configs only (no tensors materialized).
std::pair<ModelConfig, TrainConfig> read_checkpoint_configs(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training loop

struct StepLog {
  std::int64_t iteration;  // 1-based index of the finished step
  double lr;
  double loss;
};

/// Owns parameters and optimizer state. Step t (0-based) trains on the batch
/// keyed by (seed, t) with learning rate cosine_lr(t).
template <typename T>
class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& train, const Dataset& data);
  static Trainer resume(const std::filesystem::path& checkpoint, const Dataset& data);

  /// Runs one step and returns its log line. Throws TrainError on a
  /// non-finite loss, naming the iteration.
  StepLog step();
  bool done() const { return iteration_ >= train_.total_iters; }

  std::int64_t iteration() const { return iteration_; }
  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return train_; }
  const EmtParameters<T>& params() const { return params_; }
  const Adam<T>& optimizer() const { return adam_; }
  void save(const std::filesystem::path& path) const;

  /// Worker threads for batch assembly (default: data_threads()).
  void set_threads(int n) { threads_ = n; }

 private:
  Trainer(ModelConfig model, TrainConfig train, const Dataset& data, EmtParameters<T> params);

  ModelConfig model_;
  TrainConfig train_;
  const Dataset* data_;
  EmtParameters<T> params_;
  Adam<T> adam_;
  std::int64_t iteration_ = 0;
  int threads_;
};

/// Checkpoint file name for a completed iteration count: "ckpt_<iter>".
std::string checkpoint_name(std::int64_t iteration);

/// Full run: trains until total_iters, appending "iteration\tlr\tloss" rows to
/// <out_dir>/loss.tsv and writing <out_dir>/ckpt_<iter> every
/// checkpoint_every steps and at the end. Returns the final checkpoint path.
template <typename T>
std::filesystem::path train(Trainer<T>& trainer, const std::filesystem::path& out_dir,
                            const std::function<void(const StepLog&)>& on_step = {});

}  // namespace emt
