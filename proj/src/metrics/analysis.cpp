#include <cmath>
#include <fstream>
#include <map>
#include <string>

#include "emt/kv.hpp"
#include "emt/metrics.hpp"

namespace emt {

namespace {

template <typename T>
Tensor<T> stack(const std::vector<ImageRGB>& patches, std::size_t begin, std::size_t end) {
  const auto& first = patches.at(begin);
  const std::size_t plane = first.data.size();
  std::vector<T> v;
  v.reserve((end - begin) * plane);
  for (std::size_t i = begin; i < end; ++i) {
    if (patches[i].height != first.height || patches[i].width != first.width) {
      throw MetricError("analysis patches must share one size");
    }
    v.insert(v.end(), patches[i].data.begin(), patches[i].data.end());
  }
  return Tensor<T>::from({static_cast<std::int64_t>(end - begin), 3, first.height, first.width},
                         std::move(v));
}

// Copies each boundary activation into row `row0 + n` of its layer's matrix.
template <typename T>
class ActivationSink : public ForwardObserver<T> {
 public:
  ActivationSink(const std::vector<std::string>& ids, std::vector<Eigen::MatrixXf>& rows)
      : ids_(ids), rows_(rows) {}
  void set_row(Eigen::Index row0) {
    row0_ = row0;
    next_ = 0;
  }
  void on_activation(std::string_view id, const Tensor<T>& act) override {
    if (next_ >= ids_.size() || ids_[next_] != id) {
      throw MetricError("cka_heatmap: unexpected activation '" + std::string(id) + "'");
    }
    auto& m = rows_[next_++];
    const std::int64_t per = act.numel() / act.dim(0);
    if (m.cols() != per) m.resize(m.rows(), per);
    const auto d = act.data();
    for (std::int64_t n = 0; n < act.dim(0); ++n)
      for (std::int64_t k = 0; k < per; ++k) m(row0_ + n, k) = static_cast<float>(d[n * per + k]);
  }

 private:
  const std::vector<std::string>& ids_;
  std::vector<Eigen::MatrixXf>& rows_;
  Eigen::Index row0_ = 0;
  std::size_t next_ = 0;
};

}  // namespace

std::vector<ImageRGB> sample_lr_patches(const Dataset& ds, int count, int patch, std::uint64_t seed) {
  if (ds.size() == 0) throw MetricError("analysis dataset is empty");
  if (count < 1 || patch < 1) throw MetricError("analysis needs a positive patch count and size");
  std::vector<ImageRGB> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto rng = Rng::stream(seed, 0, static_cast<std::uint64_t>(i));
    const auto idx = static_cast<std::size_t>(rng.uniform_int(ds.size()));
    const auto& lr = ds.pair(idx).lr;
    if (lr.height < patch || lr.width < patch) {
      throw MetricError("image '" + ds.name(idx) + "' is smaller than the " + std::to_string(patch) +
                        "px analysis patch");
    }
    const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(lr.height - patch + 1)));
    const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(lr.width - patch + 1)));
    out.push_back(crop_pair(ds.pair(idx), top, left, patch, patch).lr);
  }
  return out;
}

std::vector<std::string> activation_ids(const ModelConfig& cfg) {
  std::vector<std::string> ids{"sfeu"};
  for (int i = 0; i < cfg.num_mtb; ++i)
    for (int j = 0; j < cfg.layers_per_mtb; ++j)
      ids.push_back("mtb" + std::to_string(i) + ".layer" + std::to_string(j));
  ids.push_back("recu_in");
  return ids;
}

template <typename T>
CkaMatrix cka_heatmap(const EmtParameters<T>& params, const std::vector<ImageRGB>& patches,
                      const CkaOptions& opt) {
  if (patches.size() < 2) throw MetricError("cka_heatmap: need at least 2 patches");
  if (opt.minibatch < 2 || opt.batch < 1) {
    throw MetricError("cka_heatmap: minibatch must be >= 2 and batch >= 1");
  }
  const auto ids = activation_ids(params.config());
  const auto n = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd hsic = Eigen::MatrixXd::Zero(n, n);

  const std::size_t total = patches.size(), mb = static_cast<std::size_t>(opt.minibatch);
  for (std::size_t m0 = 0, m1 = 0; m0 < total; m0 = m1) {
    m1 = std::min(total, m0 + mb);
    if (total - m1 == 1) m1 = total;  // never leave a single-point minibatch
    const auto rows = static_cast<Eigen::Index>(m1 - m0);
    std::vector<Eigen::MatrixXf> feats(ids.size(), Eigen::MatrixXf(rows, 0));
    ActivationSink<T> sink(ids, feats);
    for (std::size_t b0 = m0; b0 < m1; b0 += static_cast<std::size_t>(opt.batch)) {
      const std::size_t b1 = std::min(m1, b0 + static_cast<std::size_t>(opt.batch));
      sink.set_row(static_cast<Eigen::Index>(b0 - m0));
      emt_forward(stack<T>(patches, b0, b1), params, &sink);
    }
    std::vector<Eigen::MatrixXd> grams;
    grams.reserve(ids.size());
    for (auto& f : feats) {
      Eigen::MatrixXd x = f.cast<double>();
      f.resize(0, 0);
      x.rowwise() -= x.colwise().mean();
      grams.push_back(x * x.transpose());
    }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) hsic(i, j) += grams[i].cwiseProduct(grams[j]).sum();
  }

  CkaMatrix out{ids, Eigen::MatrixXd::Identity(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(hsic(i, i) > 0)) throw MetricError("cka_heatmap: layer '" + ids[i] + "' has zero variance");
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      out.values(i, j) = out.values(j, i) = hsic(i, j) / std::sqrt(hsic(i, i) * hsic(j, j));
  return out;
}

double window_diagonal(const WindowSpec& win) {
  return std::hypot(win.h - 1.0, win.w - 1.0);
}

double attention_distance(const double* weights, const WindowSpec& win) {
  const std::int64_t area = win.area();
  double total = 0;
  for (std::int64_t i = 0; i < area; ++i) {
    const double yi = static_cast<double>(i / win.w), xi = static_cast<double>(i % win.w);
    double row = 0;
    for (std::int64_t j = 0; j < area; ++j) {
      row += weights[i * area + j] * std::hypot(yi - static_cast<double>(j / win.w),
                                                xi - static_cast<double>(j % win.w));
    }
    total += row;
  }
  return total / static_cast<double>(area);
}

template <typename T>
void MadRecorder<T>::on_attention(const AttentionEvent<T>& e) {
  const std::int64_t area = e.window.area();
  const std::int64_t groups = e.weights.dim(0);
  const auto d = e.weights.data();
  std::vector<double> buf(static_cast<std::size_t>(area * area));
  for (std::int64_t g = 0; g < groups; ++g) {
    const int head = static_cast<int>(g % e.heads);  // groups are window-major
    Acc* acc = nullptr;
    for (auto& a : acc_) {
      if (a.layer == e.layer && a.half == e.half && a.head == head) acc = &a;
    }
    if (!acc) {
      acc_.push_back({std::string(e.layer), e.half, e.window, head});
      acc = &acc_.back();
    }
    const T* src = d.data() + g * area * area;
    for (std::int64_t i = 0; i < area; ++i) {
      double s = 0;
      for (std::int64_t j = 0; j < area; ++j) s += buf[i * area + j] = static_cast<double>(src[i * area + j]);
      acc->max_row_error = std::max(acc->max_row_error, std::abs(s - 1.0));
    }
    acc->sum += attention_distance(buf.data(), e.window);
    ++acc->count;
  }
}

template <typename T>
std::vector<MadRow> MadRecorder<T>::rows() const {
  std::vector<MadRow> out;
  for (const auto& a : acc_) {
    out.push_back({a.layer, a.half, a.window, a.head, a.sum / static_cast<double>(a.count), a.count,
                   a.max_row_error});
  }
  return out;
}

template <typename T>
std::vector<MadRow> mad(const EmtParameters<T>& params, const std::vector<ImageRGB>& patches,
                        int batch) {
  if (patches.empty()) throw MetricError("mad: no patches");
  if (batch < 1) throw MetricError("mad: batch must be >= 1");
  MadRecorder<T> rec;
  for (std::size_t b0 = 0; b0 < patches.size(); b0 += static_cast<std::size_t>(batch)) {
    const std::size_t b1 = std::min(patches.size(), b0 + static_cast<std::size_t>(batch));
    emt_forward(stack<T>(patches, b0, b1), params, &rec);
  }
  return rec.rows();
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

}  // namespace

void write_cka_csv(const CkaMatrix& m, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "layer";
  for (const auto& l : m.layers) f << ',' << l;
  f << '\n';
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    f << m.layers[i];
    for (std::size_t j = 0; j < m.layers.size(); ++j) {
      f << ',' << kv::format_double(m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    f << '\n';
  }
}

void write_mad_csv(const std::vector<MadRow>& rows, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "layer,half,window,head,mad,windows\n";
  for (const auto& r : rows) {
    f << r.layer << ',' << r.half << ',' << window_str(r.window) << ',' << r.head << ','
      << kv::format_double(r.mad) << ',' << r.windows << '\n';
  }
}

void write_mad_summary(const std::vector<MadRow>& rows, const std::filesystem::path& path) {
  auto f = open_out(path);
  std::vector<std::string> order;
  std::map<std::string, std::pair<double, int>> per_layer;
  double all = 0, worst_row = 0;
  for (const auto& r : rows) {
    if (!per_layer.count(r.layer)) order.push_back(r.layer);
    auto& [s, c] = per_layer[r.layer];
    s += r.mad;
    ++c;
    all += r.mad;
    worst_row = std::max(worst_row, r.max_row_error);
  }
  f << "# mean attention distance in pixels, averaged over halves and heads\n";
  for (const auto& l : order) {
    const auto& [s, c] = per_layer[l];
    f << l << " = " << kv::format_double(s / c) << '\n';
  }
  f << "overall = " << kv::format_double(rows.empty() ? 0.0 : all / static_cast<double>(rows.size()))
    << '\n';
  f << "max_row_sum_error = " << kv::format_double(worst_row) << '\n';
}

void write_metadata(const std::vector<std::pair<std::string, std::string>>& entries,
                    const std::filesystem::path& path) {
  auto f = open_out(path);
  for (const auto& [k, v] : entries) f << k << " = " << v << '\n';
}

#define EMT_INSTANTIATE(T)                                                                       \
  template CkaMatrix cka_heatmap(const EmtParameters<T>&, const std::vector<ImageRGB>&,          \
                                 const CkaOptions&);                                             \
  template class MadRecorder<T>;                                                                 \
  template std::vector<MadRow> mad(const EmtParameters<T>&, const std::vector<ImageRGB>&, int);
EMT_INSTANTIATE(float)
EMT_INSTANTIATE(double)
#undef EMT_INSTANTIATE

}  // namespace emt
