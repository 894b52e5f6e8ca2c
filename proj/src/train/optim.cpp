#include <cmath>

#include "../tensor/op_util.hpp"
#include "emt/train.hpp"

namespace emt {

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape("l1_loss", pred.shape(), target.shape());
  const bool rec = recording<T>({&pred, &target});
  auto out = Tensor<T>::make_result({1}, rec);
  const auto p = pred.data(), t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(static_cast<double>(p[i]) - t[i]);
  const std::size_t n = p.size();
  out.mutable_data()[0] = static_cast<T>(acc / static_cast<double>(n));
  if (rec) {
    detail::record<T>({pred, target}, out, [pred, target, out, n]() {
      const T g = out.grad()[0] / static_cast<T>(n);
      const auto p = pred.data(), t = target.data();
      auto sign = [](T d) { return d > 0 ? T(1) : (d < 0 ? T(-1) : T(0)); };
      if (pred.requires_grad()) {
        auto gp = pred.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g * sign(p[i] - t[i]);
      }
      if (target.requires_grad()) {
        auto gt = target.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gt[i] -= g * sign(p[i] - t[i]);
      }
    });
  }
  return out;
}

template <typename T>
Adam<T>::Adam(const std::vector<NamedTensor<T>>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
  }
}

template <typename T>
void Adam<T>::step(const std::vector<NamedTensor<T>>& params, double lr) {
  if (params.size() != m_.size()) throw TrainError("Adam: parameter list changed size");
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw TrainError("Adam: parameter '" + p.name + "' has no gradient");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto tensor = params[k].tensor;
    auto w = tensor.mutable_data();
    const auto g = tensor.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.size() != w.size()) throw TrainError("Adam: shape of '" + params[k].name + "' changed");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
      const double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + eps_);
      w[i] = static_cast<T>(w[i] - update);
    }
  }
}

template Tensor<float> l1_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> l1_loss(const Tensor<double>&, const Tensor<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace emt
