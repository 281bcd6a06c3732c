#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "drf/common.hpp"
#include "drf/estimators.hpp"
#include "drf/eval/metrics.hpp"
#include "drf/eval/scenarios.hpp"
#include "drf/forest.hpp"
#include "drf/version.hpp"

namespace drf {

// A fitted conditional-distribution model the harness can query.
class ConditionalEstimator {
 public:
  virtual ~ConditionalEstimator() = default;
  virtual void fit(const Dataset& train, std::uint64_t seed, int threads) = 0;
  virtual std::vector<double> quantiles(ConstRowRef x, const std::vector<double>& alphas,
                                        int coord) const = 0;
  virtual Eigen::MatrixXd sample(ConstRowRef x, int m, Rng& rng) const = 0;
};

namespace bench {

class DrfEstimator : public ConditionalEstimator {
 public:
  DrfEstimator(SplitRule rule, int num_trees, int num_features, double mtry)
      : rule_(rule), num_trees_(num_trees), num_features_(num_features), mtry_(mtry) {}

  void fit(const Dataset& train, std::uint64_t seed, int threads) override {
    ForestConfig config;
    config.num_trees = num_trees_;
    config.num_features = num_features_;
    config.split_rule = rule_;
    config.seed = seed;
    config.tree.mtry = mtry_;
    forest_ = drf::fit(train, config, threads);
  }

  std::vector<double> quantiles(ConstRowRef x, const std::vector<double>& alphas,
                                int coord) const override {
    ConditionalDistribution cd = ConditionalDistribution::from_forest(forest_, x);
    std::vector<double> out;
    out.reserve(alphas.size());
    for (double a : alphas) out.push_back(cd.quantile(a, coord));
    return out;
  }

  Eigen::MatrixXd sample(ConstRowRef x, int m, Rng& rng) const override {
    return ConditionalDistribution::from_forest(forest_, x).resample(m, rng);
  }

  const Forest& forest() const { return forest_; }

 private:
  SplitRule rule_;
  int num_trees_;
  int num_features_;
  double mtry_;
  Forest forest_;
};

// Uniform distribution over the k = ceil(sqrt(n_train)) nearest training
// responses in Euclidean predictor distance.
class KnnEstimator : public ConditionalEstimator {
 public:
  void fit(const Dataset& train, std::uint64_t, int) override {
    x_ = train.x;
    y_ = train.y;
    k_ = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(train.n()))));
  }

  std::vector<int> neighbors(ConstRowRef x) const {
    const int n = static_cast<int>(x_.rows());
    std::vector<std::pair<double, int>> dist(n);
    for (int i = 0; i < n; ++i)
      dist[i] = {(x_.row(i).transpose() - x).squaredNorm(), i};
    std::partial_sort(dist.begin(), dist.begin() + k_, dist.end());
    std::vector<int> ids(k_);
    for (int i = 0; i < k_; ++i) ids[i] = dist[i].second;
    return ids;
  }

  std::vector<double> quantiles(ConstRowRef x, const std::vector<double>& alphas,
                                int coord) const override {
    const auto ids = neighbors(x);
    std::vector<double> vals(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) vals[i] = y_(ids[i], coord);
    std::sort(vals.begin(), vals.end());
    std::vector<double> out;
    for (double a : alphas) {
      const std::size_t idx = std::min(
          vals.size() - 1, static_cast<std::size_t>(std::ceil(a * vals.size())) - 1);
      out.push_back(vals[std::max<std::size_t>(idx, 0)]);
    }
    return out;
  }

  Eigen::MatrixXd sample(ConstRowRef x, int m, Rng& rng) const override {
    const auto ids = neighbors(x);
    Eigen::MatrixXd out(m, y_.cols());
    for (int s = 0; s < m; ++s)
      out.row(s) = y_.row(ids[static_cast<std::size_t>(rng.uniform_int(k_))]);
    return out;
  }

 private:
  Eigen::MatrixXd x_, y_;
  int k_ = 1;
};

// Gaussian kernel weights on predictor distance, median-heuristic bandwidth.
class KernelEstimator : public ConditionalEstimator {
 public:
  void fit(const Dataset& train, std::uint64_t, int) override {
    x_ = train.x;
    y_ = train.y;
    bandwidth_ = median_heuristic(x_, 2000);
  }

  Eigen::VectorXd weights(ConstRowRef x) const {
    const int n = static_cast<int>(x_.rows());
    Eigen::VectorXd w(n);
    const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
    for (int i = 0; i < n; ++i)
      w[i] = std::exp(-(x_.row(i).transpose() - x).squaredNorm() * inv);
    const double total = w.sum();
    if (total <= 0.0) return Eigen::VectorXd::Constant(n, 1.0 / n);
    return w / total;
  }

  std::vector<double> quantiles(ConstRowRef x, const std::vector<double>& alphas,
                                int coord) const override {
    const Eigen::VectorXd w = weights(x);
    std::vector<std::pair<double, double>> vw(x_.rows());
    for (int i = 0; i < static_cast<int>(x_.rows()); ++i) vw[i] = {y_(i, coord), w[i]};
    std::sort(vw.begin(), vw.end());
    std::vector<double> out;
    for (double a : alphas) {
      double cum = 0.0;
      double q = vw.back().first;
      for (const auto& [v, wi] : vw) {
        cum += wi;
        if (cum >= a) {
          q = v;
          break;
        }
      }
      out.push_back(q);
    }
    return out;
  }

  Eigen::MatrixXd sample(ConstRowRef x, int m, Rng& rng) const override {
    const Eigen::VectorXd w = weights(x);
    std::vector<double> cum(w.size());
    double total = 0.0;
    for (int i = 0; i < w.size(); ++i) {
      total += w[i];
      cum[i] = total;
    }
    Eigen::MatrixXd out(m, y_.cols());
    for (int s = 0; s < m; ++s) {
      const double u = rng.uniform() * total;
      const auto it = std::lower_bound(cum.begin(), cum.end(), u);
      out.row(s) = y_.row(std::min<std::ptrdiff_t>(it - cum.begin(),
                                                   static_cast<std::ptrdiff_t>(cum.size()) - 1));
    }
    return out;
  }

 private:
  Eigen::MatrixXd x_, y_;
  double bandwidth_ = 1.0;
};

// Homogeneous-residual baseline: one CART-criterion mean forest per response
// coordinate, conditional distribution = predicted mean + residuals pooled
// per coordinate. Each coordinate is regressed and resampled separately, so
// the baseline carries no cross-component dependence.
class RfResidualEstimator : public ConditionalEstimator {
 public:
  RfResidualEstimator(int num_trees, double mtry) : num_trees_(num_trees), mtry_(mtry) {}

  void fit(const Dataset& train, std::uint64_t seed, int threads) override {
    const int d = train.d();
    forests_.clear();
    forests_.reserve(d);
    for (int j = 0; j < d; ++j) {
      Dataset uni;
      uni.x = train.x;
      uni.y = train.y.col(j);
      uni.predictors = train.predictors;
      uni.responses = {train.responses[j]};
      ForestConfig config;
      config.num_trees = num_trees_;
      config.split_rule = SplitRule::CartMulti;
      config.tree.honesty = false;
      config.tree.mtry = mtry_;
      config.seed = hash_combine(seed, static_cast<std::uint64_t>(j));
      forests_.push_back(drf::fit(uni, config, threads));
    }
    residuals_.resize(train.n(), d);
    for (int i = 0; i < train.n(); ++i) {
      const Eigen::VectorXd m = predict_mean(train.x.row(i).transpose());
      residuals_.row(i) = train.y.row(i) - m.transpose();
    }
  }

  Eigen::VectorXd predict_mean(ConstRowRef x) const {
    Eigen::VectorXd m(static_cast<int>(forests_.size()));
    for (std::size_t j = 0; j < forests_.size(); ++j) {
      const WeightVector wv = forests_[j].weights(x);
      double total = 0.0;
      for (const auto& [i, w] : wv.entries) total += w * forests_[j].y_train(i, 0);
      m[static_cast<int>(j)] = total;
    }
    return m;
  }

  std::vector<double> quantiles(ConstRowRef x, const std::vector<double>& alphas,
                                int coord) const override {
    const double mean = predict_mean(x)[coord];
    std::vector<double> res(residuals_.rows());
    for (int i = 0; i < residuals_.rows(); ++i) res[i] = residuals_(i, coord);
    std::sort(res.begin(), res.end());
    std::vector<double> out;
    for (double a : alphas) {
      const std::size_t idx = std::min(
          res.size() - 1, static_cast<std::size_t>(std::ceil(a * res.size())) - 1);
      out.push_back(mean + res[idx]);
    }
    return out;
  }

  Eigen::MatrixXd sample(ConstRowRef x, int m, Rng& rng) const override {
    const Eigen::VectorXd mean = predict_mean(x);
    Eigen::MatrixXd out(m, residuals_.cols());
    const int n = static_cast<int>(residuals_.rows());
    for (int s = 0; s < m; ++s)
      for (int j = 0; j < residuals_.cols(); ++j)
        out(s, j) = mean[j] + residuals_(rng.uniform_int(n), j);
    return out;
  }

 private:
  int num_trees_;
  double mtry_;
  std::vector<Forest> forests_;
  Eigen::MatrixXd residuals_;
};

}  // namespace bench

inline const std::vector<std::string>& benchmark_method_ids() {
  static const std::vector<std::string> ids = {"drf-mmd", "drf-cart", "knn",
                                               "kernel-smoother", "rf-residual"};
  return ids;
}

struct BenchmarkOptions {
  std::vector<std::string> methods = benchmark_method_ids();
  int repeats = 10;
  double train_frac = 0.7;
  std::string metric = "pinball";  // pinball | nlpd
  std::vector<double> alphas = {0.1, 0.3, 0.5, 0.7, 0.9};
  int response_coord = 0;
  int nlpd_samples = 500;
  int num_trees = 500;
  int num_features = 20;
  double mtry = 0.0;  // <= 0: forest default ceil(sqrt(p))
  int threads = 1;
  std::uint64_t seed = 17;
};

struct MethodResult {
  std::string method;
  std::vector<double> columns;                 // alphas (pinball) or {0} (nlpd)
  std::vector<std::vector<double>> per_repeat; // [repeat][column]
  std::vector<double> mean_loss;               // per column across repeats
  std::vector<double> sd_loss;
};

struct TidyRow {
  double x1;
  double alpha;
  std::string method;
  double estimate;
  double truth;
};

struct BenchmarkResult {
  Scenario scenario;
  BenchmarkOptions options;
  std::vector<MethodResult> methods;
  std::vector<TidyRow> tidy;  // first repeat only, pinball metric

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["artifact_version"] = kVersion;
    j["scenario"] = {{"id", scenario.id}, {"n", scenario.n},   {"p", scenario.p},
                     {"seed", scenario.seed}, {"copula_dim", scenario.copula_dim}};
    j["config"] = {{"metric", options.metric},     {"repeats", options.repeats},
                   {"train_frac", options.train_frac}, {"alphas", options.alphas},
                   {"num_trees", options.num_trees},   {"seed", options.seed}};
    auto tables = nlohmann::ordered_json::array();
    for (const auto& m : methods) {
      nlohmann::ordered_json t;
      t["method"] = m.method;
      t["columns"] = m.columns;
      t["mean_loss"] = m.mean_loss;
      t["sd_loss"] = m.sd_loss;
      t["per_repeat"] = m.per_repeat;
      tables.push_back(t);
    }
    j["results"] = tables;
    return j;
  }

  void write_tidy_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "x1,alpha,method,estimate,truth\n";
    out.precision(10);
    for (const auto& r : tidy)
      out << r.x1 << "," << r.alpha << "," << r.method << "," << r.estimate << ","
          << r.truth << "\n";
  }
};

inline std::unique_ptr<ConditionalEstimator> make_estimator(const std::string& id,
                                                            const BenchmarkOptions& opt) {
  if (id == "drf-mmd")
    return std::make_unique<bench::DrfEstimator>(SplitRule::Mmd, opt.num_trees,
                                                 opt.num_features, opt.mtry);
  if (id == "drf-cart")
    return std::make_unique<bench::DrfEstimator>(SplitRule::CartMulti, opt.num_trees,
                                                 opt.num_features, opt.mtry);
  if (id == "knn") return std::make_unique<bench::KnnEstimator>();
  if (id == "kernel-smoother") return std::make_unique<bench::KernelEstimator>();
  if (id == "rf-residual")
    return std::make_unique<bench::RfResidualEstimator>(opt.num_trees, opt.mtry);
  throw UsageError("unknown benchmark method '" + id + "'");
}

// Guard against evaluating a method on rows it trained on.
inline void check_disjoint_split(const std::vector<int>& train_idx,
                                 const std::vector<int>& test_idx) {
  std::set<int> train(train_idx.begin(), train_idx.end());
  for (int t : test_idx)
    if (train.count(t))
      throw UsageError("benchmark: train/test leak, row " + std::to_string(t) +
                       " appears in both sets");
}

// Repeated out-of-sample validation: seeded shuffles into train_frac / rest,
// per-method per-repeat losses, aggregates with across-repeat sd.
inline BenchmarkResult run_benchmark(const Scenario& scenario, const BenchmarkOptions& options) {
  if (options.metric != "pinball" && options.metric != "nlpd")
    throw UsageError("benchmark metric must be pinball or nlpd");
  for (const auto& id : options.methods) (void)make_estimator(id, options);  // validate ids

  const GeneratedData gen = generate(scenario);
  const Dataset& full = gen.data;
  const int n = full.n();
  const int n_train = static_cast<int>(std::round(options.train_frac * n));
  if (n_train < 10 || n - n_train < 1) throw UsageError("benchmark: degenerate split");

  BenchmarkResult result;
  result.scenario = scenario;
  result.options = options;
  const bool is_pinball = options.metric == "pinball";
  const std::vector<double> columns = is_pinball ? options.alphas : std::vector<double>{0.0};

  for (const auto& id : options.methods) {
    MethodResult mr;
    mr.method = id;
    mr.columns = columns;
    mr.per_repeat.assign(options.repeats, std::vector<double>(columns.size(), 0.0));
    result.methods.push_back(std::move(mr));
  }

  std::vector<std::vector<int>> train_sets(options.repeats), test_sets(options.repeats);
  for (int r = 0; r < options.repeats; ++r) {
    Rng rng(hash_combine(options.seed, 0x5eedULL + r));
    auto order = rng.permutation(n);
    train_sets[r].assign(order.begin(), order.begin() + n_train);
    test_sets[r].assign(order.begin() + n_train, order.end());
    check_disjoint_split(train_sets[r], test_sets[r]);
  }

  const int outer_threads = std::max(1, std::min(options.threads, options.repeats));
  const int inner_threads = std::max(1, options.threads / outer_threads);

  std::mutex tidy_mutex;
  detail::run_parallel(options.repeats, outer_threads, [&](int r) {
    const Dataset train = subset_rows(full, train_sets[r]);
    const Dataset test = subset_rows(full, test_sets[r]);

    for (std::size_t mi = 0; mi < options.methods.size(); ++mi) {
      auto model = make_estimator(options.methods[mi], options);
      model->fit(train, hash_combine(options.seed, 1000 + r), inner_threads);

      if (is_pinball) {
        std::vector<double> totals(options.alphas.size(), 0.0);
        std::vector<TidyRow> rows;
        for (int t = 0; t < test.n(); ++t) {
          const auto qs =
              model->quantiles(test.x.row(t).transpose(), options.alphas,
                               options.response_coord);
          for (std::size_t a = 0; a < qs.size(); ++a) {
            totals[a] += pinball(qs[a], test.y(t, options.response_coord), options.alphas[a]);
            if (r == 0 && gen.truth.quantile)
              rows.push_back({test.x(t, 0), options.alphas[a], options.methods[mi], qs[a],
                              gen.truth.quantile(test.x.row(t).transpose(),
                                                 options.alphas[a], options.response_coord)});
          }
        }
        for (std::size_t a = 0; a < totals.size(); ++a)
          result.methods[mi].per_repeat[r][a] = totals[a] / test.n();
        if (!rows.empty()) {
          std::lock_guard<std::mutex> lock(tidy_mutex);
          result.tidy.insert(result.tidy.end(), rows.begin(), rows.end());
        }
      } else {
        Rng sample_rng(hash_combine(options.seed, 7000 + r));
        std::vector<Eigen::MatrixXd> samples;
        samples.reserve(test.n());
        for (int t = 0; t < test.n(); ++t)
          samples.push_back(
              model->sample(test.x.row(t).transpose(), options.nlpd_samples, sample_rng));
        const LossReport report = nlpd(samples, test.y);
        result.methods[mi].per_repeat[r][0] = report.aggregate;
      }
    }
  });

  for (auto& mr : result.methods) {
    mr.mean_loss.resize(mr.columns.size());
    mr.sd_loss.resize(mr.columns.size());
    for (std::size_t a = 0; a < mr.columns.size(); ++a) {
      double mean = 0.0;
      for (int r = 0; r < options.repeats; ++r) mean += mr.per_repeat[r][a];
      mean /= options.repeats;
      double var = 0.0;
      for (int r = 0; r < options.repeats; ++r) {
        const double dev = mr.per_repeat[r][a] - mean;
        var += dev * dev;
      }
      mr.mean_loss[a] = mean;
      mr.sd_loss[a] = options.repeats > 1 ? std::sqrt(var / (options.repeats - 1)) : 0.0;
    }
  }
  return result;
}

}  // namespace drf
