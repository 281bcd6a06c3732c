#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "drf/common.hpp"
#include "drf/kernel.hpp"

namespace drf {

// Scores below these are summation noise, not signal; clamping them to an
// exact 0 keeps constant responses from producing spurious splits. MMD
// features have unit modulus so an absolute threshold works; CART scores
// scale with the response's second moment.
constexpr double kMmdScoreZero = 1e-15;
constexpr double kCartScoreZeroRel = 1e-20;

// Per-cutoff criterion values for one candidate feature of one node.
// Cutoffs exist only between distinct sorted feature values; entry i of the
// per-cutoff arrays corresponds to the first left_counts[i] rows of
// sorted_local going left.
struct SplitScan {
  int feature_index = -1;
  int n = 0;
  std::vector<int> sorted_local;   // node-local permutation, sorted by (value, row id)
  std::vector<double> cutoffs;     // midpoints between adjacent distinct values
  std::vector<int> left_counts;
  std::vector<double> scores;
  std::vector<char> admissible;

  bool empty() const { return cutoffs.empty(); }
};

struct SplitDecision {
  int feature_index = -1;
  double cutoff = 0.0;
  double score = 0.0;
  std::vector<int> left_ids;
  std::vector<int> right_ids;
};

namespace detail {

// Sort node-local indices by feature value, breaking ties by global row id
// so the scan is invariant to the order node samples arrive in.
inline std::vector<int> sorted_order(const std::vector<double>& vals,
                                     const std::vector<int>& ids) {
  std::vector<int> order(vals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (vals[a] != vals[b]) return vals[a] < vals[b];
    return ids[a] < ids[b];
  });
  return order;
}

// min_frac admissibility with the automatic relaxation: when a feature's
// distinct values admit no cutoff with both children holding at least
// min_frac of the node, only the nonempty/min_child constraint applies.
inline void mark_admissible(SplitScan* scan, double min_frac, int min_child) {
  const double frac_min = min_frac * scan->n;
  bool any_strict = false;
  scan->admissible.assign(scan->cutoffs.size(), 0);
  for (std::size_t i = 0; i < scan->cutoffs.size(); ++i) {
    const int nl = scan->left_counts[i];
    const int nr = scan->n - nl;
    if (nl < min_child || nr < min_child) continue;
    if (nl + 1e-9 >= frac_min && nr + 1e-9 >= frac_min) {
      scan->admissible[i] = 1;
      any_strict = true;
    }
  }
  if (!any_strict) {
    for (std::size_t i = 0; i < scan->cutoffs.size(); ++i) {
      const int nl = scan->left_counts[i];
      const int nr = scan->n - nl;
      scan->admissible[i] = (nl >= min_child && nr >= min_child) ? 1 : 0;
    }
  }
}

struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    double t = v - comp;
    double s = sum + t;
    comp = (s - sum) - t;
    sum = s;
  }
};

}  // namespace detail

// MMD splitting criterion evaluated at every admissible cutoff in one left-
// to-right pass: per cutoff, (1/B) sum_b (n_L n_R / n_P^2) |mean_L - mean_R|^2
// of the per-node Fourier embedding, with the running left sums updated in
// O(B) as each sample crosses over. Total cost O(B n_P) after the sort.
// Row i of cos_e/sin_e is the embedding of the sample with value vals[i] and
// training id ids[i].
inline SplitScan mmd_scan(const RowMatrixXd& cos_e, const RowMatrixXd& sin_e,
                          const std::vector<double>& vals, const std::vector<int>& ids,
                          double min_frac, int feature_index, int min_child = 1) {
  const int n = static_cast<int>(vals.size());
  const int B = static_cast<int>(cos_e.cols());
  SplitScan scan;
  scan.feature_index = feature_index;
  scan.n = n;
  if (n < 2) return scan;
  scan.sorted_local = detail::sorted_order(vals, ids);

  // Totals accumulate in the sorted order so that scores are bit-identical
  // under any permutation of the node samples.
  std::vector<detail::KahanSum> total_cos(B), total_sin(B);
  for (int i = 0; i < n; ++i) {
    const int row = scan.sorted_local[i];
    for (int b = 0; b < B; ++b) {
      total_cos[b].add(cos_e(row, b));
      total_sin[b].add(sin_e(row, b));
    }
  }

  std::vector<detail::KahanSum> left_cos(B), left_sin(B);
  const double inv_n2 = 1.0 / (static_cast<double>(n) * n);

  for (int i = 0; i + 1 < n; ++i) {
    const int row = scan.sorted_local[i];
    for (int b = 0; b < B; ++b) {
      left_cos[b].add(cos_e(row, b));
      left_sin[b].add(sin_e(row, b));
    }
    const double v_here = vals[row];
    const double v_next = vals[scan.sorted_local[i + 1]];
    if (v_here == v_next) continue;

    const int nl = i + 1;
    const int nr = n - nl;
    const double inv_l = 1.0 / nl;
    const double inv_r = 1.0 / nr;
    double acc = 0.0;
    for (int b = 0; b < B; ++b) {
      const double dc =
          left_cos[b].sum * inv_l - (total_cos[b].sum - left_cos[b].sum) * inv_r;
      const double ds =
          left_sin[b].sum * inv_l - (total_sin[b].sum - left_sin[b].sum) * inv_r;
      acc += dc * dc + ds * ds;
    }
    double score = (static_cast<double>(nl) * nr * inv_n2) * acc / B;
    if (score < kMmdScoreZero) score = 0.0;

    scan.cutoffs.push_back(v_here + 0.5 * (v_next - v_here));
    scan.left_counts.push_back(nl);
    scan.scores.push_back(score);
  }
  detail::mark_admissible(&scan, min_frac, min_child);
  return scan;
}

// Aggregated marginal CART criterion (sum over response columns of the
// scaled squared child-mean difference); O(d n_P) per feature.
inline SplitScan cart_multi_scan(const RowMatrixXd& y, const std::vector<double>& vals,
                                 const std::vector<int>& ids, double min_frac,
                                 int feature_index, int min_child = 1) {
  const int n = static_cast<int>(vals.size());
  const int d = static_cast<int>(y.cols());
  SplitScan scan;
  scan.feature_index = feature_index;
  scan.n = n;
  if (n < 2) return scan;
  scan.sorted_local = detail::sorted_order(vals, ids);

  std::vector<detail::KahanSum> total(d);
  double m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const int row = scan.sorted_local[i];
    for (int j = 0; j < d; ++j) {
      total[j].add(y(row, j));
      m2 += y(row, j) * y(row, j);
    }
  }
  m2 /= n;
  const double zero_eps = kCartScoreZeroRel * m2;

  std::vector<detail::KahanSum> left(d);
  const double inv_n2 = 1.0 / (static_cast<double>(n) * n);

  for (int i = 0; i + 1 < n; ++i) {
    const int row = scan.sorted_local[i];
    for (int j = 0; j < d; ++j) left[j].add(y(row, j));
    const double v_here = vals[row];
    const double v_next = vals[scan.sorted_local[i + 1]];
    if (v_here == v_next) continue;

    const int nl = i + 1;
    const int nr = n - nl;
    const double inv_l = 1.0 / nl;
    const double inv_r = 1.0 / nr;
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = left[j].sum * inv_l - (total[j].sum - left[j].sum) * inv_r;
      acc += diff * diff;
    }
    double score = (static_cast<double>(nl) * nr * inv_n2) * acc;
    if (score <= zero_eps) score = 0.0;

    scan.cutoffs.push_back(v_here + 0.5 * (v_next - v_here));
    scan.left_counts.push_back(nl);
    scan.scores.push_back(score);
  }
  detail::mark_admissible(&scan, min_frac, min_child);
  return scan;
}

// Univariate CART criterion, the d = 1 view.
inline SplitScan cart_scan(const std::vector<double>& node_y, const std::vector<double>& vals,
                           const std::vector<int>& ids, double min_frac, int feature_index,
                           int min_child = 1) {
  RowMatrixXd y(node_y.size(), 1);
  for (std::size_t i = 0; i < node_y.size(); ++i) y(static_cast<int>(i), 0) = node_y[i];
  return cart_multi_scan(y, vals, ids, min_frac, feature_index, min_child);
}

// Maximal strictly positive admissible score over all scans; ties broken by
// lower feature index, then lower cutoff. A nullopt return signals a leaf.
// ids must be the node row ids the scans were built from.
inline std::optional<SplitDecision> best_split(const std::vector<SplitScan>& scans,
                                               const std::vector<int>& ids) {
  const SplitScan* best_scan = nullptr;
  std::size_t best_cut = 0;
  double best_score = 0.0;

  for (const auto& scan : scans) {
    for (std::size_t i = 0; i < scan.cutoffs.size(); ++i) {
      if (!scan.admissible[i]) continue;
      const double s = scan.scores[i];
      if (s <= 0.0) continue;
      bool better = s > best_score;
      if (s == best_score && best_scan != nullptr) {
        if (scan.feature_index < best_scan->feature_index ||
            (scan.feature_index == best_scan->feature_index &&
             scan.cutoffs[i] < best_scan->cutoffs[best_cut]))
          better = true;
      }
      if (better) {
        best_scan = &scan;
        best_cut = i;
        best_score = s;
      }
    }
  }
  if (best_scan == nullptr) return std::nullopt;

  SplitDecision result;
  result.feature_index = best_scan->feature_index;
  result.cutoff = best_scan->cutoffs[best_cut];
  result.score = best_score;
  const int nl = best_scan->left_counts[best_cut];
  result.left_ids.reserve(nl);
  result.right_ids.reserve(best_scan->n - nl);
  for (int i = 0; i < best_scan->n; ++i) {
    const int id = ids[best_scan->sorted_local[i]];
    if (i < nl)
      result.left_ids.push_back(id);
    else
      result.right_ids.push_back(id);
  }
  return result;
}

// Biased two-sample MMD V-statistic with the Gaussian kernel, O((|U|+|V|)^2).
// Test oracle and variable-importance metric only; never on the split path.
inline double exact_mmd(const Eigen::MatrixXd& u_set, const Eigen::MatrixXd& v_set,
                        double sigma) {
  const int m = static_cast<int>(u_set.rows());
  const int n = static_cast<int>(v_set.rows());
  if (m == 0 || n == 0) throw DataError("exact_mmd: empty sample set");

  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) uu += gaussian_kernel(u_set.row(i), u_set.row(j), sigma);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) vv += gaussian_kernel(v_set.row(i), v_set.row(j), sigma);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) uv += gaussian_kernel(u_set.row(i), v_set.row(j), sigma);

  return uu / (static_cast<double>(m) * m) + vv / (static_cast<double>(n) * n) -
         2.0 * uv / (static_cast<double>(m) * n);
}

// exact_mmd generalized to weighted empirical distributions; needed where a
// forest-weighted distribution is compared against a point mass. Reduces to
// exact_mmd under uniform weights.
inline double exact_mmd_weighted(const Eigen::MatrixXd& u_set, const Eigen::VectorXd& u_w,
                                 const Eigen::MatrixXd& v_set, const Eigen::VectorXd& v_w,
                                 double sigma) {
  const int m = static_cast<int>(u_set.rows());
  const int n = static_cast<int>(v_set.rows());
  if (m == 0 || n == 0) throw DataError("exact_mmd_weighted: empty sample set");

  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      uu += u_w[i] * u_w[j] * gaussian_kernel(u_set.row(i), u_set.row(j), sigma);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      vv += v_w[i] * v_w[j] * gaussian_kernel(v_set.row(i), v_set.row(j), sigma);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      uv += u_w[i] * v_w[j] * gaussian_kernel(u_set.row(i), v_set.row(j), sigma);

  return uu + vv - 2.0 * uv;
}

}  // namespace drf
