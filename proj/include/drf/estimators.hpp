#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "drf/common.hpp"
#include "drf/forest.hpp"
#include "drf/kernel.hpp"
#include "drf/random.hpp"

namespace drf {

// Weighted samples in [0,1]^d from the probability-integral transform of a
// conditional distribution through its own weighted marginal CDFs.
struct CopulaSample {
  Eigen::MatrixXd u_points;
  Eigen::VectorXd weights;
};

struct WeightedMleResult {
  Eigen::VectorXd theta;
  double objective = 0.0;
  bool converged = false;
};

// The discrete measure sum_i w_i delta_{y_i}: a weight vector plus a view of
// the forest's training responses. Every estimator is a pure function of
// these two.
class ConditionalDistribution {
 public:
  ConditionalDistribution(WeightVector w, const Eigen::MatrixXd& y_view)
      : w_(std::move(w)), y_(&y_view) {
    if (w_.n_total != static_cast<int>(y_view.rows()))
      throw DataError("ConditionalDistribution: weight/response row mismatch");
  }

  // The response matrix is held by reference; a temporary would dangle.
  ConditionalDistribution(WeightVector, Eigen::MatrixXd&&) = delete;

  static ConditionalDistribution from_forest(const Forest& forest, ConstRowRef x_row) {
    return ConditionalDistribution(forest.weights(x_row), forest.y_train);
  }

  const WeightVector& weight_vector() const { return w_; }
  const Eigen::MatrixXd& responses() const { return *y_; }
  int dim() const { return static_cast<int>(y_->cols()); }
  int support_size() const { return static_cast<int>(w_.entries.size()); }

  // P(Y <= t coordinatewise).
  double cdf(ConstRowRef t) const {
    if (t.size() != dim()) throw DataError("cdf: threshold dimension mismatch");
    double total = 0.0;
    for (const auto& [i, w] : w_.entries) {
      bool below = true;
      for (int j = 0; j < dim() && below; ++j) below = (*y_)(i, j) <= t[j];
      if (below) total += w;
    }
    return total;
  }

  double marginal_cdf(double t, int coord) const {
    double total = 0.0;
    for (const auto& [i, w] : w_.entries)
      if ((*y_)(i, coord) <= t) total += w;
    return total;
  }

  // Left-continuous generalized inverse of the weighted marginal CDF:
  // the smallest support value whose cumulative weight reaches alpha.
  double quantile(double alpha, int coord) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("quantile: alpha must be in (0,1)");
    std::vector<std::pair<double, double>> vw;
    vw.reserve(w_.entries.size());
    for (const auto& [i, w] : w_.entries) vw.emplace_back((*y_)(i, coord), w);
    std::sort(vw.begin(), vw.end());
    double cum = 0.0;
    for (const auto& [v, w] : vw) {
      cum += w;
      if (cum >= alpha) return v;
    }
    return vw.back().first;  // alpha above accumulated mass (rounding)
  }

  double expect(const std::function<double(ConstRowRef)>& f) const {
    double total = 0.0;
    for (const auto& [i, w] : w_.entries) {
      const double v = f(y_->row(i).transpose());
      if (!std::isfinite(v))
        throw DataError("expect: target function non-finite at training row " +
                        std::to_string(i));
      total += w * v;
    }
    return total;
  }

  double mean(int coord) const {
    double total = 0.0;
    for (const auto& [i, w] : w_.entries) total += w * (*y_)(i, coord);
    return total;
  }

  struct CovCorr {
    double covariance = 0.0;
    std::optional<double> correlation;  // empty when a marginal variance is 0
  };

  // Weighted central moments from the single weight set; by construction the
  // correlation lands in [-1, 1].
  CovCorr cov_corr(int ci, int cj) const {
    const double mi = mean(ci);
    const double mj = mean(cj);
    double cov = 0.0, vi = 0.0, vj = 0.0;
    for (const auto& [i, w] : w_.entries) {
      const double a = (*y_)(i, ci) - mi;
      const double b = (*y_)(i, cj) - mj;
      cov += w * a * b;
      vi += w * a * a;
      vj += w * b * b;
    }
    CovCorr out;
    out.covariance = cov;
    if (vi > 0.0 && vj > 0.0) {
      double r = cov / std::sqrt(vi * vj);
      out.correlation = std::clamp(r, -1.0, 1.0);
    }
    return out;
  }

  // Entrywise correlation matrix; PSD because every entry comes from the
  // same weighted second-moment matrix. Unit diagonal.
  Eigen::MatrixXd correlation_matrix() const {
    const int d = dim();
    Eigen::VectorXd mu(d);
    for (int j = 0; j < d; ++j) mu[j] = mean(j);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& [i, w] : w_.entries) {
      Eigen::VectorXd c = y_->row(i).transpose() - mu;
      cov.noalias() += w * c * c.transpose();
    }
    Eigen::VectorXd sd = cov.diagonal().array().sqrt();
    Eigen::MatrixXd corr(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        corr(a, b) = (sd[a] > 0.0 && sd[b] > 0.0) ? cov(a, b) / (sd[a] * sd[b])
                                                  : (a == b ? 1.0 : 0.0);
    corr.diagonal().setOnes();
    return corr;
  }

  // Map each support response through the weighted marginal CDFs.
  CopulaSample copula_sample() const {
    if (dim() < 2) throw DataError("copula_sample: needs a multivariate response");
    const int m = support_size();
    CopulaSample out;
    out.u_points.resize(m, dim());
    out.weights.resize(m);

    for (int j = 0; j < dim(); ++j) {
      std::vector<std::pair<double, int>> order(m);
      for (int k = 0; k < m; ++k) order[k] = {(*y_)(w_.entries[k].first, j), k};
      std::sort(order.begin(), order.end());
      // cumulative weight at each support value, ties sharing the upper value
      double cum = 0.0;
      int k = 0;
      while (k < m) {
        int run_end = k;
        double run_w = 0.0;
        while (run_end < m && order[run_end].first == order[k].first) {
          run_w += w_.entries[order[run_end].second].second;
          ++run_end;
        }
        cum += run_w;
        for (int r = k; r < run_end; ++r) out.u_points(order[r].second, j) = cum;
        k = run_end;
      }
    }
    for (int k = 0; k < m; ++k) out.weights[k] = w_.entries[k].second;
    // Guard against summation drift outside [0,1].
    out.u_points = out.u_points.cwiseMin(1.0).cwiseMax(0.0);
    return out;
  }

  // Weighted biased HSIC V-statistic with Gaussian kernels on two disjoint
  // coordinate blocks; bandwidths <= 0 use the median heuristic per block.
  double hsic(const std::vector<int>& coords_a, const std::vector<int>& coords_b,
              double sigma_a = 0.0, double sigma_b = 0.0) const {
    if (coords_a.empty() || coords_b.empty())
      throw DataError("hsic: coordinate sets must be nonempty");
    for (int a : coords_a)
      for (int b : coords_b)
        if (a == b) throw DataError("hsic: coordinate sets must be disjoint");

    const int m = support_size();
    Eigen::MatrixXd ya(m, static_cast<int>(coords_a.size()));
    Eigen::MatrixXd yb(m, static_cast<int>(coords_b.size()));
    Eigen::VectorXd w(m);
    for (int k = 0; k < m; ++k) {
      const int row = w_.entries[k].first;
      for (std::size_t j = 0; j < coords_a.size(); ++j) ya(k, j) = (*y_)(row, coords_a[j]);
      for (std::size_t j = 0; j < coords_b.size(); ++j) yb(k, j) = (*y_)(row, coords_b[j]);
      w[k] = w_.entries[k].second;
    }
    if (sigma_a <= 0.0) sigma_a = median_heuristic_or_one(ya);
    if (sigma_b <= 0.0) sigma_b = median_heuristic_or_one(yb);

    // One O(m^2) pass accumulating sum_j w_j K_ij and sum_j w_j L_ij per i.
    Eigen::VectorXd krow = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd lrow = Eigen::VectorXd::Zero(m);
    double joint = 0.0;
    const double ia = 1.0 / (2.0 * sigma_a * sigma_a);
    const double ib = 1.0 / (2.0 * sigma_b * sigma_b);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const double kij = std::exp(-(ya.row(i) - ya.row(j)).squaredNorm() * ia);
        const double lij = std::exp(-(yb.row(i) - yb.row(j)).squaredNorm() * ib);
        krow[i] += w[j] * kij;
        lrow[i] += w[j] * lij;
        joint += w[i] * w[j] * kij * lij;
      }
    }
    const double k_mean = krow.dot(w);
    const double l_mean = lrow.dot(w);
    double cross = 0.0;
    for (int i = 0; i < m; ++i) cross += w[i] * krow[i] * lrow[i];
    return joint + k_mean * l_mean - 2.0 * cross;
  }

  // m i.i.d. draws from the discrete measure (rows of the result).
  Eigen::MatrixXd resample(int m, Rng& rng) const {
    if (m < 1) throw DataError("resample: m must be >= 1");
    std::vector<double> cum(w_.entries.size());
    double total = 0.0;
    for (std::size_t k = 0; k < w_.entries.size(); ++k) {
      total += w_.entries[k].second;
      cum[k] = total;
    }
    Eigen::MatrixXd out(m, dim());
    for (int s = 0; s < m; ++s) {
      const double u = rng.uniform() * total;
      const auto it = std::lower_bound(cum.begin(), cum.end(), u);
      const std::size_t k = std::min<std::size_t>(it - cum.begin(), cum.size() - 1);
      out.row(s) = y_->row(w_.entries[k].first);
    }
    return out;
  }

  // Weighted maximum likelihood by budgeted golden-section coordinate
  // descent over a user-supplied box; no derivatives required.
  WeightedMleResult weighted_mle(
      const std::function<double(const Eigen::VectorXd&, ConstRowRef)>& loglik,
      Eigen::VectorXd theta, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
      int eval_budget = 2000) const {
    const int k = static_cast<int>(theta.size());
    if (lower.size() != k || upper.size() != k)
      throw DataError("weighted_mle: box dimension mismatch");

    int evals = 0;
    auto objective = [&](const Eigen::VectorXd& th) {
      ++evals;
      double total = 0.0;
      for (const auto& [i, w] : w_.entries) {
        const double ll = loglik(th, y_->row(i).transpose());
        if (!std::isfinite(ll)) {
          std::ostringstream oss;
          oss << "weighted_mle: non-finite log-likelihood at theta = [";
          for (int j = 0; j < k; ++j) oss << (j ? ", " : "") << th[j];
          oss << "]";
          throw DataError(oss.str());
        }
        total += w * ll;
      }
      return total;
    };

    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
    double best = objective(theta);
    bool converged = false;
    while (evals < eval_budget && !converged) {
      double moved = 0.0;
      for (int j = 0; j < k && evals < eval_budget; ++j) {
        double a = lower[j], b = upper[j];
        const double start = theta[j];
        double c = b - golden * (b - a);
        double d = a + golden * (b - a);
        auto eval_at = [&](double v) {
          Eigen::VectorXd th = theta;
          th[j] = v;
          return objective(th);
        };
        double fc = eval_at(c), fd = eval_at(d);
        while (b - a > 1e-9 * (1.0 + std::abs(a) + std::abs(b)) && evals < eval_budget) {
          if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - golden * (b - a);
            fc = eval_at(c);
          } else {
            a = c;
            c = d;
            fc = fd;
            d = a + golden * (b - a);
            fd = eval_at(d);
          }
        }
        theta[j] = 0.5 * (a + b);
        best = eval_at(theta[j]);
        moved = std::max(moved, std::abs(theta[j] - start));
      }
      converged = moved < 1e-7;
    }
    return {theta, best, converged};
  }

 private:
  static double median_heuristic_or_one(const Eigen::MatrixXd& rows) {
    try {
      return median_heuristic(rows, 2000);
    } catch (const DataError&) {
      return 1.0;  // constant block; HSIC term degenerates to 0 regardless
    }
  }

  WeightVector w_;
  const Eigen::MatrixXd* y_;
};

struct DoAverageResult {
  std::vector<double> w_grid;
  std::vector<double> value;        // meaningful only where available
  std::vector<bool> available;
  std::vector<int> num_contributing;  // x_sample rows with usable cells
};

// Silverman's rule on pooled values.
inline double silverman_bandwidth(const Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size());
  if (n < 2) throw DataError("silverman_bandwidth: need at least 2 values");
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().sum() / (n - 1));
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  const double q1 = sorted[static_cast<std::size_t>(0.25 * (n - 1))];
  const double q3 = sorted[static_cast<std::size_t>(0.75 * (n - 1))];
  const double spread = std::min(sd, (q3 - q1) / 1.34);
  if (!(spread > 0.0)) throw DataError("silverman_bandwidth: zero spread");
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

// Back-door averaging of E[Y | W = w, X = x] over x_sample: per x, a
// Gaussian-kernel local-linear smoother in the treatment coordinate built
// from that query's forest weights. Local-linear rather than a plain
// kernel mean: the treatment density inside a window can be steeply sloped
// (several sd into the tail of W | X = x), and the induced first-order
// design bias is what a degree-one local fit cancels. Cells whose kernel
// mass falls below min_kernel_mass are flagged unavailable rather than
// extrapolated; a grid point with no usable cell is reported unavailable.
inline DoAverageResult do_average(const Forest& forest, const std::vector<double>& w_grid,
                                  const Eigen::MatrixXd& x_sample, double smoother_bw = 0.0,
                                  int treatment_coord = 0, int outcome_coord = 1,
                                  double min_kernel_mass = 1e-8) {
  if (x_sample.rows() < 1) throw DataError("do_average: empty x_sample");
  if (forest.num_responses() < 2)
    throw DataError("do_average: forest must be trained on a joint (treatment, outcome) response");
  if (treatment_coord == outcome_coord ||
      std::max(treatment_coord, outcome_coord) >= forest.num_responses())
    throw DataError("do_average: bad treatment/outcome coordinates");

  if (smoother_bw <= 0.0)
    smoother_bw = silverman_bandwidth(forest.y_train.col(treatment_coord));

  const std::size_t g = w_grid.size();
  std::vector<double> sums(g, 0.0);
  std::vector<int> counts(g, 0);

  for (int s = 0; s < static_cast<int>(x_sample.rows()); ++s) {
    const WeightVector wv = forest.weights(x_sample.row(s).transpose());
    for (std::size_t gi = 0; gi < g; ++gi) {
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
      for (const auto& [i, w] : wv.entries) {
        const double dw = forest.y_train(i, treatment_coord) - w_grid[gi];
        const double z = dw / smoother_bw;
        const double kern = w * std::exp(-0.5 * z * z);
        const double out = forest.y_train(i, outcome_coord);
        s0 += kern;
        s1 += kern * dw;
        s2 += kern * dw * dw;
        t0 += kern * out;
        t1 += kern * out * dw;
      }
      if (s0 <= min_kernel_mass) continue;
      const double det = s0 * s2 - s1 * s1;
      // degenerate designs (all treatments tied in the window) fall back to
      // the local mean
      const double cell = det > 1e-10 * s0 * s2 ? (s2 * t0 - s1 * t1) / det : t0 / s0;
      sums[gi] += cell;
      ++counts[gi];
    }
  }

  DoAverageResult out;
  out.w_grid = w_grid;
  out.value.resize(g, 0.0);
  out.available.resize(g, false);
  out.num_contributing = counts;
  for (std::size_t gi = 0; gi < g; ++gi) {
    if (counts[gi] > 0) {
      out.value[gi] = sums[gi] / counts[gi];
      out.available[gi] = true;
    }
  }
  return out;
}

}  // namespace drf
