#include <cmath>
#include <numeric>
#include <string>

#include "emt/model.hpp"
#include "emt/ops.hpp"

namespace emt {

template <typename T>
Tensor<T> pixel_mixer(const Tensor<T>& x, int shift_step) {
  if (x.rank() != 4) throw ShapeError("pixel_mixer: expected [N,C,H,W], got " + shape_str(x.shape()));
  const std::int64_t c = x.dim(1);
  if (c % 5 != 0) {
    throw ShapeError("pixel_mixer: channels=" + std::to_string(c) + " not divisible by 5");
  }
  auto groups = split_channels(x, std::vector<std::int64_t>(5, c / 5));
  const auto rules = shift_rules(shift_step);
  for (int g = 0; g < 5; ++g) groups[g] = roll2d(groups[g], rules[g].dh, rules[g].dw);
  return concat_channels(groups);
}

template <typename T>
Tensor<T> window_attention(const Tensor<T>& q, const Tensor<T>& v, const WindowSpec& win,
                           int heads, ForwardObserver<T>* observer, std::string_view layer,
                           int half) {
  const std::int64_t n = q.dim(0), c = q.dim(1), h = q.dim(2), w = q.dim(3);
  if (heads <= 0 || c % heads != 0) {
    throw ShapeError("window_attention: channels=" + std::to_string(c) +
                     " not divisible by heads=" + std::to_string(heads));
  }
  const std::int64_t hd = c / heads, area = win.area();
  auto qw = window_partition(q, win);
  const std::int64_t groups = qw.dim(0) * heads;
  qw = reshape(qw, {groups, hd, area});
  auto vw = reshape(window_partition(v, win), {groups, hd, area});

  auto logits = scalar_mul(bmm(qw, qw, true, false), static_cast<T>(1.0 / std::sqrt(double(hd))));
  auto attn = softmax_lastdim(logits);
  if (observer) observer->on_attention({layer, half, win, heads, attn});
  auto out = bmm(vw, attn, false, true);  // out[d,i] = sum_j V[d,j]·A[i,j]
  return window_merge(reshape(out, {groups / heads, c, area}), win, n, h, w);
}

template <typename T>
Tensor<T> swsa_half(const Tensor<T>& x_half, const SwsaParams<T>& p, const ModelConfig& cfg,
                    int half, ForwardObserver<T>* observer, std::string_view layer) {
  const Tensor<T> none;
  auto q = conv2d_1x1(x_half, p.q[half], none);
  auto v = conv2d_1x1(x_half, p.v[half], none);
  return window_attention(q, v, cfg.windows[half], cfg.heads, observer, layer, half);
}

template <typename T>
Tensor<T> swsa(const Tensor<T>& x, const SwsaParams<T>& p, const ModelConfig& cfg,
               ForwardObserver<T>* observer, std::string_view layer) {
  const std::int64_t c = x.dim(1);
  if (c % 2 != 0) throw ShapeError("swsa: channels=" + std::to_string(c) + " must be even");
  auto halves = split_channels(x, {c / 2, c / 2});
  for (int k = 0; k < 2; ++k) halves[k] = swsa_half(halves[k], p, cfg, k, observer, layer);
  auto y = concat_channels(halves);
  if (cfg.out_proj) y = conv2d_1x1(y, p.proj_w, p.proj_b);
  return y;
}

template <typename T>
Tensor<T> mlp_forward(const Tensor<T>& x, const MlpParams<T>& p) {
  return conv2d_1x1(gelu(conv2d_1x1(x, p.fc1_w, p.fc1_b)), p.fc2_w, p.fc2_b);
}

template <typename T>
Tensor<T> ltl_forward(const Tensor<T>& x, const LayerParams<T>& p, const ModelConfig& cfg) {
  const auto mixed = cfg.ltl_mixer == TokenMixer::pixel_mixer ? pixel_mixer(x, cfg.shift_step) : x;
  auto y1 = add(x, mixed);
  const auto eps = static_cast<T>(cfg.norm_eps);
  return add(y1, mlp_forward(layer_norm(y1, p.norm2.gamma, p.norm2.beta, eps), p.mlp));
}

template <typename T>
Tensor<T> gtl_forward(const Tensor<T>& x, const LayerParams<T>& p, const ModelConfig& cfg,
                      ForwardObserver<T>* observer, std::string_view layer) {
  const auto eps = static_cast<T>(cfg.norm_eps);
  auto y1 = add(x, swsa(layer_norm(x, p.norm1.gamma, p.norm1.beta, eps), p.attn, cfg, observer, layer));
  return add(y1, mlp_forward(layer_norm(y1, p.norm2.gamma, p.norm2.beta, eps), p.mlp));
}

template <typename T>
Tensor<T> mtb_forward(const Tensor<T>& x, const MtbParams<T>& p, const ModelConfig& cfg,
                      int block_index, ForwardObserver<T>* observer) {
  Tensor<T> y = x;
  const std::string prefix = "mtb" + std::to_string(block_index) + ".layer";
  for (std::size_t j = 0; j < p.layers.size(); ++j) {
    const auto& lp = p.layers[j];
    const std::string id = prefix + std::to_string(j);
    if (observer) observer->on_layer(lp.global ? LayerKind::global : LayerKind::local);
    y = lp.global ? gtl_forward(y, lp, cfg, observer, id) : ltl_forward(y, lp, cfg);
    if (observer) observer->on_activation(id, y);
  }
  if (!cfg.mtb_conv) return y;
  return add(x, conv2d_3x3(y, p.conv_w, p.conv_b));
}

template <typename T>
Tensor<T> emt_forward(const Tensor<T>& lr, const EmtParameters<T>& params,
                      ForwardObserver<T>* observer) {
  const auto& cfg = params.config();
  if (lr.rank() != 4 || lr.dim(1) != cfg.in_channels) {
    throw ShapeError("emt_forward: expected [N," + std::to_string(cfg.in_channels) +
                     ",H,W] input, got " + shape_str(lr.shape()));
  }
  const std::int64_t h = lr.dim(2), w = lr.dim(3);
  auto f0 = conv2d_3x3(lr, params.sfeu_w, params.sfeu_b);
  if (observer) observer->on_activation("sfeu", f0);

  const int m = cfg.pad_multiple();
  const auto pad_h = static_cast<int>((m - h % m) % m), pad_w = static_cast<int>((m - w % m) % m);
  auto f0p = pad_reflect(f0, pad_h, pad_w);

  Tensor<T> fd = f0p;
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    fd = mtb_forward(fd, params.blocks[i], cfg, static_cast<int>(i), observer);
  }
  auto fused = add(f0p, fd);
  if (observer) observer->on_activation("recu_in", fused);
  auto sr = pixel_shuffle(conv2d_3x3(fused, params.recu_w, params.recu_b), cfg.scale);
  return crop(sr, 0, 0, h * cfg.scale, w * cfg.scale);
}

#define EMT_INSTANTIATE(T)                                                                        \
  template Tensor<T> pixel_mixer(const Tensor<T>&, int);                                          \
  template Tensor<T> window_attention(const Tensor<T>&, const Tensor<T>&, const WindowSpec&, int, \
                                      ForwardObserver<T>*, std::string_view, int);                \
  template Tensor<T> swsa_half(const Tensor<T>&, const SwsaParams<T>&, const ModelConfig&, int,   \
                               ForwardObserver<T>*, std::string_view);                            \
  template Tensor<T> swsa(const Tensor<T>&, const SwsaParams<T>&, const ModelConfig&,             \
                          ForwardObserver<T>*, std::string_view);                                 \
  template Tensor<T> mlp_forward(const Tensor<T>&, const MlpParams<T>&);                          \
  template Tensor<T> ltl_forward(const Tensor<T>&, const LayerParams<T>&, const ModelConfig&);    \
  template Tensor<T> gtl_forward(const Tensor<T>&, const LayerParams<T>&, const ModelConfig&,     \
                                 ForwardObserver<T>*, std::string_view);                          \
  template Tensor<T> mtb_forward(const Tensor<T>&, const MtbParams<T>&, const ModelConfig&, int,  \
                                 ForwardObserver<T>*);                                            \
  template Tensor<T> emt_forward(const Tensor<T>&, const EmtParameters<T>&, ForwardObserver<T>*);

EMT_INSTANTIATE(float)
EMT_INSTANTIATE(double)

}  // namespace emt
