#include <algorithm>
#include <cstdlib>
#include <thread>

#include "emt/data.hpp"

namespace emt {

Dataset Dataset::open(const std::filesystem::path& root, int scale) {
  namespace fs = std::filesystem;
  const fs::path hr_dir = root / "HR";
  if (!fs::is_directory(hr_dir)) throw ImageError("dataset has no HR directory: " + hr_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(hr_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ImageError("dataset is empty: no PNG files in " + hr_dir.string());

  const fs::path lr_dir = root / "LR" / ("X" + std::to_string(scale));
  Dataset ds;
  ds.scale_ = scale;
  for (const auto& f : files) {
    SamplePair p = degrade(load_png(f), scale);
    const fs::path lr_file = lr_dir / f.filename();
    if (fs::exists(lr_file)) {
      p.lr = load_png(lr_file);
      if (p.lr.height != p.hr.height / scale || p.lr.width != p.hr.width / scale) {
        throw ImageError("LR file " + lr_file.string() + " is " + std::to_string(p.lr.height) + "x" +
                         std::to_string(p.lr.width) + ", expected " +
                         std::to_string(p.hr.height / scale) + "x" + std::to_string(p.hr.width / scale));
      }
    }
    ds.pairs_.push_back(std::move(p));
    ds.names_.push_back(f.filename().string());
  }
  return ds;
}

Dataset Dataset::from_images(std::vector<ImageRGB> hr, int scale) {
  if (hr.empty()) throw ImageError("dataset is empty");
  Dataset ds;
  ds.scale_ = scale;
  for (std::size_t i = 0; i < hr.size(); ++i) {
    ds.pairs_.push_back(degrade(hr[i], scale));
    ds.names_.push_back("image" + std::to_string(i));
  }
  return ds;
}

int data_threads() {
  const char* env = std::getenv("EMT_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return std::clamp(n, 1, 64);
}

template <typename T>
Batch<T> sample_batch(const Dataset& ds, int batch_size, int patch_lr, std::uint64_t seed,
                      std::uint64_t iteration, bool augment_patches, int threads) {
  if (ds.size() == 0) throw ImageError("dataset is empty");
  if (batch_size < 1) throw ImageError("batch size must be >= 1");
  const int r = ds.scale(), ph = patch_lr * r;
  Batch<T> b{Tensor<T>::zeros({batch_size, 3, patch_lr, patch_lr}),
             Tensor<T>::zeros({batch_size, 3, ph, ph})};
  const std::size_t lr_n = static_cast<std::size_t>(3) * patch_lr * patch_lr;
  const std::size_t hr_n = static_cast<std::size_t>(3) * ph * ph;
  auto lr_out = b.lr.mutable_data();
  auto hr_out = b.hr.mutable_data();

  auto fill_one = [&](int i) {
    Rng rng = Rng::stream(seed, iteration, static_cast<std::uint64_t>(i));
    const auto& src = ds.pair(rng.uniform_int(ds.size()));
    SamplePair p = sample_patch(src, patch_lr, rng);
    if (augment_patches) p = augment(p, rng);
    std::copy(p.lr.data.begin(), p.lr.data.end(), lr_out.begin() + i * lr_n);
    std::copy(p.hr.data.begin(), p.hr.data.end(), hr_out.begin() + i * hr_n);
  };

  threads = std::clamp(threads, 1, batch_size);
  if (threads == 1) {
    for (int i = 0; i < batch_size; ++i) fill_one(i);
    return b;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < batch_size; i += threads) fill_one(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return b;
}

template Batch<float> sample_batch<float>(const Dataset&, int, int, std::uint64_t, std::uint64_t, bool, int);
template Batch<double> sample_batch<double>(const Dataset&, int, int, std::uint64_t, std::uint64_t, bool, int);

}  // namespace emt
