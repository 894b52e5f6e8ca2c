#include <algorithm>
#include <stdexcept>

#include "emt/model.hpp"
#include "emt/random.hpp"

namespace emt {

template <typename T>
Tensor<T> EmtParameters<T>::add(std::string name, Shape shape, T fill) {
  auto t = Tensor<T>::full(std::move(shape), fill, true);
  entries_.push_back({std::move(name), t});
  return t;
}

template <typename T>
EmtParameters<T>::EmtParameters(const ModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const std::int64_t c = cfg.channels, half = c / 2, hid = cfg.mlp_hidden();
  const std::int64_t cin = cfg.in_channels, out = cin * cfg.scale * cfg.scale;

  auto norm = [&](const std::string& prefix) {
    NormParams<T> n;
    n.gamma = add(prefix + ".gamma", {c}, T(1));
    n.beta = add(prefix + ".beta", {c});
    return n;
  };

  sfeu_w = add("sfeu.weight", {c, cin, 3, 3});
  sfeu_b = add("sfeu.bias", {c});
  for (int i = 0; i < cfg.num_mtb; ++i) {
    MtbParams<T> block;
    const std::string bp = "mtb" + std::to_string(i);
    for (int j = 0; j < cfg.layers_per_mtb; ++j) {
      LayerParams<T> layer;
      layer.global = cfg.is_global(j);
      const std::string lp = bp + ".layer" + std::to_string(j);
      if (layer.global) {
        layer.norm1 = norm(lp + ".norm1");
        for (int k = 0; k < 2; ++k) {
          layer.attn.q[k] = add(lp + ".attn.q" + std::to_string(k) + ".weight", {half, half});
        }
        for (int k = 0; k < 2; ++k) {
          layer.attn.v[k] = add(lp + ".attn.v" + std::to_string(k) + ".weight", {half, half});
        }
        if (cfg.out_proj) {
          layer.attn.proj_w = add(lp + ".attn.proj.weight", {c, c});
          layer.attn.proj_b = add(lp + ".attn.proj.bias", {c});
        }
        layer.norm2 = norm(lp + ".norm2");
      } else {
        layer.norm2 = norm(lp + ".norm");
      }
      layer.mlp.fc1_w = add(lp + ".mlp.fc1.weight", {hid, c});
      layer.mlp.fc1_b = add(lp + ".mlp.fc1.bias", {hid});
      layer.mlp.fc2_w = add(lp + ".mlp.fc2.weight", {c, hid});
      layer.mlp.fc2_b = add(lp + ".mlp.fc2.bias", {c});
      block.layers.push_back(std::move(layer));
    }
    if (cfg.mtb_conv) {
      block.conv_w = add(bp + ".conv.weight", {c, c, 3, 3});
      block.conv_b = add(bp + ".conv.bias", {c});
    }
    blocks.push_back(std::move(block));
  }
  recu_w = add("recu.weight", {out, c, 3, 3});
  recu_b = add("recu.bias", {out});
}

template <typename T>
EmtParameters<T> EmtParameters<T>::initialized(const ModelConfig& cfg, std::uint64_t seed) {
  EmtParameters p(cfg);
  Rng rng(seed);
  for (auto& e : p.entries_) {
    if (!e.name.ends_with(".weight")) continue;
    for (auto& v : e.tensor.mutable_data()) v = static_cast<T>(rng.truncated_normal(0.02));
  }
  return p;
}

template <typename T>
EmtParameters<T> EmtParameters<T>::clone() const {
  EmtParameters p(cfg_);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto src = entries_[i].tensor.data();
    std::copy(src.begin(), src.end(), p.entries_[i].tensor.mutable_data().begin());
  }
  return p;
}

template <typename T>
const Tensor<T>& EmtParameters<T>::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::int64_t EmtParameters<T>::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void EmtParameters<T>::zero_grad() const {
  for (const auto& e : entries_) e.tensor.zero_grad();
}

template class EmtParameters<float>;
template class EmtParameters<double>;

}  // namespace emt
