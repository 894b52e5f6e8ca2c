#include <cmath>
#include <string>

#include "emt/metrics.hpp"

namespace emt {

namespace {

Eigen::MatrixXd centered_columns(const FeatureMatrix& x) {
  return x.rowwise() - x.colwise().mean();
}

void check_pair(const FeatureMatrix& x, const FeatureMatrix& y) {
  if (x.rows() != y.rows()) {
    throw MetricError("cka: row counts differ (" + std::to_string(x.rows()) + " vs " +
                      std::to_string(y.rows()) + ")");
  }
  if (x.rows() < 2) throw MetricError("cka: need at least 2 data points");
  if (x.cols() < 1 || y.cols() < 1) throw MetricError("cka: empty feature matrix");
}

double ratio(double xy, double xx, double yy) {
  if (!(xx > 0) || !(yy > 0)) throw MetricError("cka: zero-variance input");
  return xy / std::sqrt(xx * yy);
}

}  // namespace

Eigen::MatrixXd center_gram(const Eigen::MatrixXd& k) {
  // H·K·H with H = I − 11ᵀ/m: subtract row and column means, add back the grand mean.
  const Eigen::VectorXd col = k.colwise().mean().transpose();
  const Eigen::VectorXd row = k.rowwise().mean();
  const double all = k.mean();
  Eigen::MatrixXd out = k;
  out.colwise() -= row;
  out.rowwise() -= col.transpose();
  out.array() += all;
  return out;
}

double cka_centered_grams(const Eigen::MatrixXd& kc, const Eigen::MatrixXd& lc) {
  // The (m−1)⁻² HSIC normalisation cancels in the ratio.
  return ratio(kc.cwiseProduct(lc).sum(), kc.squaredNorm(), lc.squaredNorm());
}

double cka(const FeatureMatrix& x, const FeatureMatrix& y) {
  check_pair(x, y);
  const auto xc = centered_columns(x), yc = centered_columns(y);
  const double m = static_cast<double>(x.rows()), p1 = static_cast<double>(x.cols()),
               p2 = static_cast<double>(y.cols());
  if (p1 * p2 + p1 * p1 + p2 * p2 <= m * (p1 + p2) + 3 * m) {
    const double xy = (xc.transpose() * yc).squaredNorm();
    const double xx = (xc.transpose() * xc).norm(), yy = (yc.transpose() * yc).norm();
    if (!(xx > 0) || !(yy > 0)) throw MetricError("cka: zero-variance input");
    return xy / (xx * yy);
  }
  const Eigen::MatrixXd k = xc * xc.transpose(), l = yc * yc.transpose();
  return cka_centered_grams(k, l);
}

CkaMatrix cka_matrix(const std::vector<ActivationRecord>& records) {
  CkaMatrix out;
  const auto n = static_cast<Eigen::Index>(records.size());
  out.values = Eigen::MatrixXd::Identity(n, n);
  std::vector<Eigen::MatrixXd> grams;
  for (const auto& r : records) {
    out.layers.push_back(r.layer);
    if (r.features.rows() != records.front().features.rows()) {
      throw MetricError("cka_matrix: layer '" + r.layer + "' has " +
                        std::to_string(r.features.rows()) + " data points, expected " +
                        std::to_string(records.front().features.rows()));
    }
    const auto c = centered_columns(r.features);
    grams.push_back(c * c.transpose());
    if (!(grams.back().squaredNorm() > 0)) {
      throw MetricError("cka_matrix: layer '" + r.layer + "' has zero variance");
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      out.values(i, j) = out.values(j, i) = cka_centered_grams(grams[i], grams[j]);
  return out;
}

}  // namespace emt
