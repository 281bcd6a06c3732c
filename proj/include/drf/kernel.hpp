#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "drf/common.hpp"
#include "drf/random.hpp"

namespace drf {

// Unnormalized Gaussian kernel exp(-||u-v||^2 / (2 sigma^2)). The density
// prefactor cancels in every argmax this library takes, so it is dropped on
// both the criterion path and the exact-MMD oracle path.
inline double gaussian_kernel(ConstRowRef u, ConstRowRef v, double sigma) {
  if (u.size() != v.size()) throw DataError("gaussian_kernel: dimension mismatch");
  if (!(sigma > 0.0)) throw DataError("gaussian_kernel: sigma must be positive");
  const double sq = (u - v).squaredNorm();
  return std::exp(-sq / (2.0 * sigma * sigma));
}

// Median pairwise Euclidean distance over rows, the bandwidth heuristic.
// Exact all-pairs below subsample_cap rows; above it, a seeded uniform
// subsample of subsample_cap rows is used. Lower median (order statistic
// ceil(m/2)) so that the result is a data value, never an average.
inline double median_heuristic(const Eigen::MatrixXd& y, int subsample_cap = 10000,
                               std::uint64_t seed = 0) {
  const int n = static_cast<int>(y.rows());
  if (n < 2) throw DataError("median_heuristic: need at least 2 rows");

  std::vector<int> rows;
  if (n > subsample_cap) {
    Rng rng(hash_combine(seed, 0x6d656469616eULL));
    rows = rng.sample_without_replacement(n, subsample_cap);
    std::sort(rows.begin(), rows.end());
  } else {
    rows.resize(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
  }

  const int m = static_cast<int>(rows.size());
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      dists.push_back((y.row(rows[i]) - y.row(rows[j])).norm());

  const std::size_t k = (dists.size() - 1) / 2;  // lower median, 0-based
  std::nth_element(dists.begin(), dists.begin() + k, dists.end());
  const double med = dists[k];
  if (!(med > 0.0))
    throw DataError("median_heuristic: zero bandwidth (too many identical rows)");
  return med;
}

// Frequency vectors of the Bochner approximation of the Gaussian kernel:
// omega_b ~ N(0, sigma^-2 I_d), one set per tree node.
struct FourierFeatureSet {
  RowMatrixXd omegas;      // B x d
  double bandwidth_sigma = 0.0;

  int num_features() const { return static_cast<int>(omegas.rows()); }
  int dim() const { return static_cast<int>(omegas.cols()); }
};

inline FourierFeatureSet sample_features(int d, int B, double sigma, Rng& rng) {
  if (B < 1) throw DataError("sample_features: B must be >= 1");
  if (!(sigma > 0.0)) throw DataError("sample_features: sigma must be positive");
  FourierFeatureSet f;
  f.bandwidth_sigma = sigma;
  f.omegas.resize(B, d);
  const double sd = 1.0 / sigma;
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < d; ++j) f.omegas(b, j) = rng.normal(0.0, sd);
  return f;
}

// Real/imaginary split of the complex feature e^{i omega^T u}; keeping
// (cos, sin) pairs avoids a complex-number dependency and the squared
// modulus is recovered as cos^2 + sin^2.
struct FeatureEmbedding {
  Eigen::VectorXd cos_part;
  Eigen::VectorXd sin_part;
};

inline FeatureEmbedding embed(ConstRowRef y_row, const FourierFeatureSet& f) {
  if (y_row.size() != f.dim()) throw DataError("embed: dimension mismatch");
  FeatureEmbedding e;
  Eigen::VectorXd angles = f.omegas * y_row;
  e.cos_part = angles.array().cos();
  e.sin_part = angles.array().sin();
  return e;
}

// Batched embedding of many response rows; rows of the outputs align with
// rows of `y_rows`. Hot path of tree construction.
inline void embed_rows(const RowMatrixXd& y_rows, const FourierFeatureSet& f,
                       RowMatrixXd* cos_out, RowMatrixXd* sin_out) {
  RowMatrixXd angles = y_rows * f.omegas.transpose();  // n x B
  *cos_out = angles.array().cos();
  *sin_out = angles.array().sin();
}

}  // namespace drf
