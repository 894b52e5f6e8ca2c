#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emt/data.hpp"
#include "emt/model.hpp"

namespace emt {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Image quality. Both metrics work on the studio-swing luma plane (rgb_to_y)
// after dropping `border` pixels from every side.

/// 10·log10(255² / MSE). Identical planes give +inf.
double psnr_y(const ImageRGB& sr, const ImageRGB& hr, int border);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1 = (0.01·255)²,
/// C2 = (0.03·255)², averaged over the positions where the window fits.
double ssim_y(const ImageRGB& sr, const ImageRGB& hr, int border);

/// Normalized 11-tap Gaussian used by ssim_y (the 2-D window is its outer product).
std::vector<double> ssim_gaussian();

// ---------------------------------------------------------------------------
// Linear CKA

/// Rows are data points, columns features.
using FeatureMatrix = Eigen::MatrixXd;

/// Linear CKA with the biased HSIC estimator. Both inputs are column-centred
/// internally; the cheaper of the feature form ‖XᵀY‖²/(‖XᵀX‖·‖YᵀY‖) and the
/// Gram form <HKH, HLH>/(‖HKH‖·‖HLH‖) is used.
double cka(const FeatureMatrix& x, const FeatureMatrix& y);

/// H·K·H for a symmetric Gram matrix K.
Eigen::MatrixXd center_gram(const Eigen::MatrixXd& k);
/// CKA from two already centred Gram matrices.
double cka_centered_grams(const Eigen::MatrixXd& kc, const Eigen::MatrixXd& lc);

struct ActivationRecord {
  std::string layer;
  FeatureMatrix features;  // m × p
};

/// Symmetric layer × layer matrix.
struct CkaMatrix {
  std::vector<std::string> layers;
  Eigen::MatrixXd values;
};

/// Pairwise CKA over records that share m.
CkaMatrix cka_matrix(const std::vector<ActivationRecord>& records);

// ---------------------------------------------------------------------------
// Analysis runs

/// LR patches drawn for an analysis run. patch i comes from
/// Rng::stream(seed, 0, i): image index, then crop offset. No augmentation.
std::vector<ImageRGB> sample_lr_patches(const Dataset& ds, int count, int patch, std::uint64_t seed);

struct CkaOptions {
  int patches = 288;    // data points m
  int patch = 32;       // LR patch side
  int minibatch = 48;   // data points whose activations are held at once
  int batch = 8;        // forward batch
  std::uint64_t seed = 0;
};

/// Activation ids recorded by cka_heatmap, in order: sfeu, mtb{i}.layer{j}, recu_in.
std::vector<std::string> activation_ids(const ModelConfig& cfg);

/// CKA between every recorded layer boundary. Patches are split into
/// minibatches; the three HSIC terms are summed over minibatches before the
/// ratio, which is exact when one minibatch holds every patch.
template <typename T>
CkaMatrix cka_heatmap(const EmtParameters<T>& params, const std::vector<ImageRGB>& patches,
                      const CkaOptions& opt);

/// Σ_j A_ij·‖pos_i − pos_j‖ averaged over queries i, for one row-stochastic
/// area × area matrix over a window with row-major positions.
double attention_distance(const double* weights, const WindowSpec& win);

struct MadRow {
  std::string layer;
  int half = 0;
  WindowSpec window;
  int head = 0;
  double mad = 0;       // pixels
  std::int64_t windows = 0;  // attention matrices averaged
  double max_row_error = 0;  // worst |Σ_j A_ij − 1| seen
};

/// Observer that accumulates MAD per (layer, half, head) across forward passes.
template <typename T>
class MadRecorder : public ForwardObserver<T> {
 public:
  void on_attention(const AttentionEvent<T>& e) override;
  std::vector<MadRow> rows() const;

 private:
  struct Acc {
    std::string layer;
    int half;
    WindowSpec window;
    int head;
    double sum = 0;
    std::int64_t count = 0;
    double max_row_error = 0;
  };
  std::vector<Acc> acc_;
};

template <typename T>
std::vector<MadRow> mad(const EmtParameters<T>& params, const std::vector<ImageRGB>& patches,
                        int batch = 8);

/// Euclidean distance between opposite window corners, the largest MAD possible.
double window_diagonal(const WindowSpec& win);

// ---------------------------------------------------------------------------
// Artifacts

/// cka.csv: header `layer,<id>...`, then one row per layer.
void write_cka_csv(const CkaMatrix& m, const std::filesystem::path& path);
/// mad.csv: `layer,half,window,head,mad,windows`.
void write_mad_csv(const std::vector<MadRow>& rows, const std::filesystem::path& path);
/// Per-layer means over heads and halves, then the overall mean.
void write_mad_summary(const std::vector<MadRow>& rows, const std::filesystem::path& path);
/// `key = value` lines.
void write_metadata(const std::vector<std::pair<std::string, std::string>>& entries,
                    const std::filesystem::path& path);

extern template CkaMatrix cka_heatmap(const EmtParameters<float>&, const std::vector<ImageRGB>&,
                                      const CkaOptions&);
extern template CkaMatrix cka_heatmap(const EmtParameters<double>&, const std::vector<ImageRGB>&,
                                      const CkaOptions&);
extern template class MadRecorder<float>;
extern template class MadRecorder<double>;
extern template std::vector<MadRow> mad(const EmtParameters<float>&, const std::vector<ImageRGB>&,
                                        int);
extern template std::vector<MadRow> mad(const EmtParameters<double>&,
                                        const std::vector<ImageRGB>&, int);

}  // namespace emt
