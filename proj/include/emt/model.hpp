#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emt/tensor.hpp"

namespace emt {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// What occupies the token-mixer slot of a local layer.
enum class TokenMixer { pixel_mixer, identity };

/// Every architectural hyperparameter of the network.
///
/// Defaults are the reference ×4 configuration except `mtb_conv`, which is on
/// by default (block-level 3x3 conv + residual); `paper(scale)` turns it off
/// to match the reference parameter budget.
struct ModelConfig {
  int channels = 60;
  int num_mtb = 6;
  int layers_per_mtb = 6;
  int gtl_count = 2;
  int heads = 3;
  std::array<WindowSpec, 2> windows{{{32, 8}, {8, 32}}};
  int scale = 4;
  double mlp_ratio = 2.0;
  int shift_step = 1;
  int in_channels = 3;
  bool mtb_conv = true;
  bool out_proj = true;
  TokenMixer ltl_mixer = TokenMixer::pixel_mixer;
  double norm_eps = 1e-5;

  static ModelConfig paper(int scale);
  /// Desk-scale training profile: C=20, 2 MTBs, 2 heads, windows 8x2/2x8.
  static ModelConfig desk(int scale = 2);
  /// Smallest useful model for gradient audits.
  static ModelConfig tiny(int scale = 2);

  /// Throws ConfigError naming the violated constraint.
  void validate() const;

  int head_dim() const { return channels / 2 / heads; }
  int mlp_hidden() const;
  /// GTL slots inside one MTB: the centre of each of gtl_count equal segments,
  /// i.e. floor((2i+1)·layers / (2·gtl_count)). 2 of 6 gives {1, 4}.
  std::vector<int> gtl_positions() const;
  bool is_global(int layer) const;
  /// Spatial multiple the feature maps are padded to before the deep unit.
  int pad_multiple() const;

  /// Sets one field from its textual key; unknown keys throw ConfigError.
  void set(std::string_view key, std::string_view value);
  /// Ordered key/value form; set() accepts every pair it emits.
  std::vector<std::pair<std::string, std::string>> entries() const;

  bool operator==(const ModelConfig&) const = default;
};

struct ShiftRule {
  int dh;
  int dw;
};

/// Cyclic shift per channel group: up, right, left, down, none (scaled by step).
std::array<ShiftRule, 5> shift_rules(int step = 1);

template <typename T>
struct NormParams {
  Tensor<T> gamma, beta;
};

template <typename T>
struct MlpParams {
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
struct SwsaParams {
  std::array<Tensor<T>, 2> q;  // per-half [C/2, C/2]
  std::array<Tensor<T>, 2> v;
  Tensor<T> proj_w, proj_b;    // undefined when out_proj is off
};

template <typename T>
struct LayerParams {
  bool global = false;
  NormParams<T> norm1;  // GTL only
  SwsaParams<T> attn;   // GTL only
  NormParams<T> norm2;  // the MLP pre-norm, present in both kinds
  MlpParams<T> mlp;
};

template <typename T>
struct MtbParams {
  std::vector<LayerParams<T>> layers;
  Tensor<T> conv_w, conv_b;  // undefined when mtb_conv is off
};

/// Learnable tensors of one model, with a stable named iteration order:
///
///   sfeu.{weight,bias}
///   mtb{i}.layer{j}.norm1.{gamma,beta}             (GTL)
///   mtb{i}.layer{j}.attn.q{0,1}.weight
///   mtb{i}.layer{j}.attn.v{0,1}.weight
///   mtb{i}.layer{j}.attn.proj.{weight,bias}        (out_proj on)
///   mtb{i}.layer{j}.norm2.{gamma,beta}             (GTL)  | .norm.{gamma,beta} (LTL)
///   mtb{i}.layer{j}.mlp.fc{1,2}.{weight,bias}
///   mtb{i}.conv.{weight,bias}                      (mtb_conv on)
///   recu.{weight,bias}
///
/// The structured members alias the same storage as entries().
template <typename T>
class EmtParameters {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  /// Allocates every tensor; weights zero, norm gammas one.
  explicit EmtParameters(const ModelConfig& cfg);
  /// Truncated-normal(0.02) weights, zero biases, unit gammas.
  static EmtParameters initialized(const ModelConfig& cfg, std::uint64_t seed);

  EmtParameters(EmtParameters&&) noexcept = default;
  EmtParameters& operator=(EmtParameters&&) noexcept = default;
  EmtParameters(const EmtParameters&) = delete;
  EmtParameters& operator=(const EmtParameters&) = delete;

  EmtParameters clone() const;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Entry>& entries() const { return entries_; }
  /// Throws std::out_of_range naming the missing tensor.
  const Tensor<T>& find(std::string_view name) const;
  std::int64_t scalar_count() const;
  void zero_grad() const;

  Tensor<T> sfeu_w, sfeu_b;
  std::vector<MtbParams<T>> blocks;
  Tensor<T> recu_w, recu_b;

 private:
  Tensor<T> add(std::string name, Shape shape, T fill = T(0));

  ModelConfig cfg_;
  std::vector<Entry> entries_;
};

extern template class EmtParameters<float>;
extern template class EmtParameters<double>;

// ---------------------------------------------------------------------------
// Forward instrumentation

enum class LayerKind { local, global };

template <typename T>
struct AttentionEvent {
  std::string_view layer;  // e.g. "mtb0.layer1"
  int half;                // 0 or 1; selects the window geometry
  WindowSpec window;
  int heads;
  /// Softmax weights, [windows·heads, L, L] with L = window area; rows sum to 1.
  const Tensor<T>& weights;
};

/// Optional hooks into a forward pass. All callbacks run on the forward thread.
template <typename T>
class ForwardObserver {
 public:
  virtual ~ForwardObserver() = default;
  virtual void on_layer(LayerKind) {}
  virtual void on_activation(std::string_view, const Tensor<T>&) {}
  virtual void on_attention(const AttentionEvent<T>&) {}
};

// ---------------------------------------------------------------------------
// Building blocks

/// Parameter-free token mixer: five equal channel groups, group g rolled by
/// shift_rules(step)[g].
template <typename T>
Tensor<T> pixel_mixer(const Tensor<T>& x, int shift_step = 1);

/// Multi-head attention inside each window, the query doubling as key:
/// softmax(Q·Qᵀ / sqrt(head_dim))·V.
/// q and v are [N, C', H, W]; returns [N, C', H, W].
template <typename T>
Tensor<T> window_attention(const Tensor<T>& q, const Tensor<T>& v, const WindowSpec& win,
                           int heads, ForwardObserver<T>* observer = nullptr,
                           std::string_view layer = {}, int half = 0);

/// Attention output of one channel half before concatenation/projection.
template <typename T>
Tensor<T> swsa_half(const Tensor<T>& x_half, const SwsaParams<T>& p, const ModelConfig& cfg,
                    int half, ForwardObserver<T>* observer = nullptr, std::string_view layer = {});

template <typename T>
Tensor<T> swsa(const Tensor<T>& x, const SwsaParams<T>& p, const ModelConfig& cfg,
               ForwardObserver<T>* observer = nullptr, std::string_view layer = {});

template <typename T>
Tensor<T> mlp_forward(const Tensor<T>& x, const MlpParams<T>& p);

template <typename T>
Tensor<T> ltl_forward(const Tensor<T>& x, const LayerParams<T>& p, const ModelConfig& cfg);

template <typename T>
Tensor<T> gtl_forward(const Tensor<T>& x, const LayerParams<T>& p, const ModelConfig& cfg,
                      ForwardObserver<T>* observer = nullptr, std::string_view layer = {});

template <typename T>
Tensor<T> mtb_forward(const Tensor<T>& x, const MtbParams<T>& p, const ModelConfig& cfg,
                      int block_index = 0, ForwardObserver<T>* observer = nullptr);

/// [N, C_in, H, W] low-resolution input -> [N, C_in, H·r, W·r].
template <typename T>
Tensor<T> emt_forward(const Tensor<T>& lr, const EmtParameters<T>& params,
                      ForwardObserver<T>* observer = nullptr);

// ---------------------------------------------------------------------------
// Complexity accounting

struct ComplexityLine {
  std::string component;
  std::int64_t instances = 0;
  std::int64_t params = 0;  // total over instances
  std::int64_t macs = 0;    // total over instances
};

struct ComplexityReport {
  std::vector<ComplexityLine> lines;
  std::int64_t padded_h = 0, padded_w = 0;
  std::int64_t params() const;
  std::int64_t macs() const;
  std::int64_t flops() const { return 2 * macs(); }
};

/// Closed-form parameter total.
std::int64_t count_params(const ModelConfig& cfg);
/// Multiply-accumulates of conv/linear/attention products at LR size h×w
/// (after the padding the forward pass applies). flops = 2·macs.
ComplexityReport count_flops(const ModelConfig& cfg, std::int64_t h, std::int64_t w);

}  // namespace emt
