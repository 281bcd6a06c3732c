#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "drf/binary_io.hpp"
#include "drf/common.hpp"
#include "drf/dataset.hpp"
#include "drf/tree.hpp"

namespace drf {

struct ForestConfig {
  int num_trees = 2000;
  double subsample_frac = 0.5;
  int num_features = 20;  // B, Fourier features per node
  TreeConfig tree;
  SplitRule split_rule = SplitRule::Mmd;
  double bandwidth = 0.0;  // <= 0: median heuristic on the scaled responses
  std::uint64_t seed = 42;
};

inline void to_json(nlohmann::ordered_json& j, const ForestConfig& c) {
  j = nlohmann::ordered_json{{"num_trees", c.num_trees},
                             {"subsample_frac", c.subsample_frac},
                             {"num_features", c.num_features},
                             {"mtry", c.tree.mtry},
                             {"min_node_frac", c.tree.min_node_frac},
                             {"min_leaf_size", c.tree.min_leaf_size},
                             {"max_depth", c.tree.max_depth},
                             {"honesty", c.tree.honesty},
                             {"split_rule", to_string(c.split_rule)},
                             {"bandwidth", c.bandwidth},
                             {"seed", c.seed}};
}

inline void from_json(const nlohmann::ordered_json& j, ForestConfig& c) {
  j.at("num_trees").get_to(c.num_trees);
  j.at("subsample_frac").get_to(c.subsample_frac);
  j.at("num_features").get_to(c.num_features);
  j.at("mtry").get_to(c.tree.mtry);
  j.at("min_node_frac").get_to(c.tree.min_node_frac);
  j.at("min_leaf_size").get_to(c.tree.min_leaf_size);
  j.at("max_depth").get_to(c.tree.max_depth);
  j.at("honesty").get_to(c.tree.honesty);
  c.split_rule = split_rule_from_string(j.at("split_rule").get<std::string>());
  j.at("bandwidth").get_to(c.bandwidth);
  j.at("seed").get_to(c.seed);
}

// Nonnegative weights over training rows, summing to 1; entries sorted by
// row index, zero-weight rows omitted.
struct WeightVector {
  std::vector<std::pair<int, double>> entries;
  int n_total = 0;

  double sum() const {
    double s = 0.0;
    for (const auto& [i, w] : entries) s += w;
    return s;
  }

  Eigen::VectorXd dense() const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_total);
    for (const auto& [i, w] : entries) v[i] = w;
    return v;
  }
};

class Forest {
 public:
  std::vector<Tree> trees;
  ForestConfig config;
  ResponseScaler scaler;
  Eigen::MatrixXd y_train;  // original scale; leaves index into this
  double bandwidth_used = 0.0;
  std::uint64_t train_fingerprint = 0;
  std::vector<ColumnInfo> predictors;
  std::vector<std::string> responses;

  int num_predictors() const { return static_cast<int>(predictors.size()); }
  int num_responses() const { return static_cast<int>(y_train.cols()); }
  int num_train_rows() const { return static_cast<int>(y_train.rows()); }

  // Weighting function: average over trees of 1(leaf-mate)/|leaf|. A tree
  // whose leaf holds no populate rows contributes nothing and the average
  // renormalizes over contributing trees, keeping the total at 1.
  WeightVector weights(ConstRowRef x_row) const {
    if (x_row.size() != num_predictors())
      throw DataError("weights: query has " + std::to_string(x_row.size()) +
                      " features, forest expects " + std::to_string(num_predictors()));
    if (!x_row.allFinite()) throw DataError("weights: non-finite query entries");

    Eigen::VectorXd acc = Eigen::VectorXd::Zero(num_train_rows());
    int contributing = 0;
    for (const auto& tree : trees) {
      const TreeNode& leaf = tree.nodes[tree.route(x_row)];
      if (leaf.samples.empty()) continue;
      ++contributing;
      const double w = 1.0 / static_cast<double>(leaf.samples.size());
      for (int id : leaf.samples) acc[id] += w;
    }
    if (contributing == 0)
      throw FitError("weights: no tree has populate rows in the query's leaves");

    WeightVector out;
    out.n_total = num_train_rows();
    const double inv = 1.0 / contributing;
    for (int i = 0; i < num_train_rows(); ++i)
      if (acc[i] > 0.0) out.entries.emplace_back(i, acc[i] * inv);
    return out;
  }
};

namespace detail {

inline void run_parallel(int num_tasks, int num_threads, const std::function<void(int)>& task) {
  num_threads = std::max(1, std::min(num_threads, num_tasks));
  if (num_threads == 1) {
    for (int i = 0; i < num_tasks; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int t = 0; t < num_threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= num_tasks) return;
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// Ensemble training. Per tree: seeded subsample without replacement of size
// ceil(subsample_frac * n), honest build/populate split, recursive growth.
// Tree i's generator is derived solely from (seed, i), so the result never
// depends on the worker count.
inline Forest fit(const Dataset& ds, ForestConfig config, int n_threads = 1) {
  ds.validate();
  if (ds.n() < 10) throw FitError("fit: need at least 10 training rows");
  if (config.num_trees < 1) throw FitError("fit: num_trees must be >= 1");
  if (!(config.subsample_frac > 0.0 && config.subsample_frac <= 1.0))
    throw FitError("fit: subsample_frac must be in (0, 1]");
  if (!(config.tree.min_node_frac > 0.0 && config.tree.min_node_frac <= 0.2))
    throw FitError("fit: min_node_frac must be in (0, 0.2]");

  Forest forest;
  forest.config = config;
  forest.scaler = ResponseScaler::fit(ds.y);
  forest.y_train = ds.y;
  forest.predictors = ds.predictors;
  forest.responses = ds.responses;

  const Eigen::MatrixXd y_scaled = forest.scaler.transform(ds.y);
  if (config.bandwidth > 0.0) {
    forest.bandwidth_used = config.bandwidth;
  } else {
    try {
      forest.bandwidth_used =
          median_heuristic(y_scaled, 10000, hash_combine(config.seed, 0xb4fdULL));
    } catch (const DataError& e) {
      throw FitError(std::string("fit: bandwidth selection failed: ") + e.what());
    }
  }

  {
    nlohmann::ordered_json jc = config;
    forest.train_fingerprint = Crc64::of(serialize_dataset(ds) + jc.dump());
  }

  const int n = ds.n();
  const int subsample_size =
      std::max(1, static_cast<int>(std::ceil(config.subsample_frac * n)));
  const auto factory = gaussian_feature_factory(config.num_features, forest.bandwidth_used);

  forest.trees.resize(config.num_trees);
  detail::run_parallel(config.num_trees, n_threads, [&](int i) {
    Rng rng(hash_combine(config.seed, static_cast<std::uint64_t>(i)));
    const auto subsample = rng.sample_without_replacement(n, subsample_size);
    forest.trees[i] =
        build_tree(ds.x, y_scaled, subsample, config.tree, config.split_rule, factory, rng);
  });
  return forest;
}

// How often each predictor was chosen for a split, across all trees.
inline std::vector<int> split_counts(const Forest& forest) {
  std::vector<int> counts(forest.num_predictors(), 0);
  for (const auto& tree : forest.trees)
    for (const auto& node : tree.nodes)
      if (!node.is_leaf()) ++counts[node.feature];
  return counts;
}

// --- serialization -----------------------------------------------------
// Layout: magic "DRFF", u32 version, length-prefixed JSON config block,
// training-response snapshot (row-major f64), per-tree pre-order node arrays
// (internal = feature u32 + cutoff f64, leaf = sentinel + count + id list),
// CRC-64 trailer over everything before it.

namespace detail {

constexpr std::uint32_t kForestFormatVersion = 1;
constexpr std::uint32_t kLeafTag = 0xFFFFFFFFu;

inline void serialize_node(const Tree& tree, int idx, std::string* out) {
  const TreeNode& node = tree.nodes[idx];
  if (node.is_leaf()) {
    put_u32(*out, kLeafTag);
    put_u32(*out, static_cast<std::uint32_t>(node.samples.size()));
    for (int id : node.samples) put_u32(*out, static_cast<std::uint32_t>(id));
  } else {
    put_u32(*out, static_cast<std::uint32_t>(node.feature));
    put_f64(*out, node.cutoff);
    serialize_node(tree, node.left, out);
    serialize_node(tree, node.right, out);
  }
}

inline int deserialize_node(ByteReader& r, Tree* tree) {
  const int idx = static_cast<int>(tree->nodes.size());
  tree->nodes.emplace_back();
  const std::uint32_t tag = r.u32();
  if (tag == kLeafTag) {
    const std::uint32_t count = r.u32();
    tree->nodes[idx].samples.resize(count);
    for (std::uint32_t i = 0; i < count; ++i)
      tree->nodes[idx].samples[i] = static_cast<int>(r.u32());
  } else {
    tree->nodes[idx].feature = static_cast<int>(tag);
    tree->nodes[idx].cutoff = r.f64();
    const int left = deserialize_node(r, tree);
    tree->nodes[idx].left = left;
    const int right = deserialize_node(r, tree);
    tree->nodes[idx].right = right;
  }
  return idx;
}

}  // namespace detail

inline std::string serialize_forest(const Forest& forest) {
  std::string out = "DRFF";
  put_u32(out, detail::kForestFormatVersion);

  nlohmann::ordered_json header;
  header["config"] = forest.config;
  header["scaler"] = {{"center", std::vector<double>(forest.scaler.center.begin(),
                                                     forest.scaler.center.end())},
                      {"scale", std::vector<double>(forest.scaler.scale.begin(),
                                                    forest.scaler.scale.end())}};
  header["bandwidth_used"] = forest.bandwidth_used;
  header["fingerprint"] = forest.train_fingerprint;
  header["n"] = forest.num_train_rows();
  header["d"] = forest.num_responses();
  auto preds = nlohmann::ordered_json::array();
  for (const auto& c : forest.predictors) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["one_hot"] = c.one_hot;
    if (c.one_hot) {
      jc["parent"] = c.parent;
      jc["level"] = c.level;
    }
    preds.push_back(jc);
  }
  header["predictors"] = preds;
  header["responses"] = forest.responses;
  const std::string hdr = header.dump();
  put_u64(out, hdr.size());
  out += hdr;

  for (int i = 0; i < forest.num_train_rows(); ++i)
    for (int j = 0; j < forest.num_responses(); ++j) put_f64(out, forest.y_train(i, j));

  put_u32(out, static_cast<std::uint32_t>(forest.trees.size()));
  for (const auto& tree : forest.trees) {
    put_u32(out, static_cast<std::uint32_t>(tree.nodes.size()));
    detail::serialize_node(tree, 0, &out);
  }

  put_u64(out, Crc64::of(out));
  return out;
}

inline Forest deserialize_forest(const std::string& bytes) {
  if (bytes.size() < 24) throw IoError("forest file: truncated");
  {
    const std::string body = bytes.substr(0, bytes.size() - 8);
    ByteReader tail(bytes, "forest trailer");
    (void)tail.raw(bytes.size() - 8);
    const std::uint64_t stored = tail.u64();
    if (Crc64::of(body) != stored)
      throw IoError("forest file: checksum mismatch (corrupted file)");
  }

  ByteReader r(bytes, "forest file");
  if (r.raw(4) != "DRFF") throw IoError("forest file: bad magic (not a DRFF file)");
  const std::uint32_t version = r.u32();
  if (version != detail::kForestFormatVersion)
    throw IoError("forest file: format version " + std::to_string(version) +
                  " unsupported, this build reads version " +
                  std::to_string(detail::kForestFormatVersion));

  Forest forest;
  const std::uint64_t hdr_len = r.u64();
  nlohmann::ordered_json header = nlohmann::ordered_json::parse(r.raw(hdr_len));
  forest.config = header["config"].get<ForestConfig>();
  {
    auto center = header["scaler"]["center"].get<std::vector<double>>();
    auto scale = header["scaler"]["scale"].get<std::vector<double>>();
    forest.scaler.center = Eigen::Map<Eigen::VectorXd>(center.data(), center.size());
    forest.scaler.scale = Eigen::Map<Eigen::VectorXd>(scale.data(), scale.size());
  }
  forest.bandwidth_used = header["bandwidth_used"];
  forest.train_fingerprint = header["fingerprint"];
  for (const auto& jc : header["predictors"]) {
    ColumnInfo c;
    c.name = jc["name"];
    c.one_hot = jc["one_hot"];
    if (c.one_hot) {
      c.parent = jc["parent"];
      c.level = jc["level"];
    }
    forest.predictors.push_back(c);
  }
  forest.responses = header["responses"].get<std::vector<std::string>>();

  const int n = header["n"], d = header["d"];
  forest.y_train.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) forest.y_train(i, j) = r.f64();

  const std::uint32_t num_trees = r.u32();
  forest.trees.resize(num_trees);
  for (std::uint32_t t = 0; t < num_trees; ++t) {
    const std::uint32_t num_nodes = r.u32();
    forest.trees[t].nodes.reserve(num_nodes);
    detail::deserialize_node(r, &forest.trees[t]);
    if (forest.trees[t].nodes.size() != num_nodes)
      throw IoError("forest file: tree " + std::to_string(t) + " node count mismatch");
  }
  return forest;
}

inline void save(const Forest& forest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::string bytes = serialize_forest(forest);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

inline Forest load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_forest(buf.str());
}

// Permutation importance: the increase in mean MMD distance between the
// weight-induced distribution and the point mass at the observed response
// when one predictor column is shuffled. Distances are taken in the scaled
// response space with the forest's bandwidth.
inline std::vector<double> variable_importance(const Forest& forest, const Dataset& holdout,
                                               Rng& rng, int num_permutations = 1) {
  if (holdout.p() != forest.num_predictors())
    throw DataError("variable_importance: holdout feature count mismatch");
  if (holdout.n() < 1) throw DataError("variable_importance: empty holdout");

  const Eigen::MatrixXd y_scaled_train = forest.scaler.transform(forest.y_train);
  const Eigen::MatrixXd y_scaled_holdout = forest.scaler.transform(holdout.y);
  const double sigma = forest.bandwidth_used;

  auto point_loss = [&](ConstRowRef x_row, int row) {
    const WeightVector wv = forest.weights(x_row);
    const int m = static_cast<int>(wv.entries.size());
    Eigen::MatrixXd support(m, forest.num_responses());
    Eigen::VectorXd w(m);
    for (int k = 0; k < m; ++k) {
      support.row(k) = y_scaled_train.row(wv.entries[k].first);
      w[k] = wv.entries[k].second;
    }
    Eigen::MatrixXd target = y_scaled_holdout.row(row);
    Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    return exact_mmd_weighted(support, w, target, one, sigma);
  };

  double baseline = 0.0;
  for (int i = 0; i < holdout.n(); ++i)
    baseline += point_loss(holdout.x.row(i).transpose(), i);
  baseline /= holdout.n();

  std::vector<double> scores(holdout.p(), 0.0);
  for (int j = 0; j < holdout.p(); ++j) {
    double permuted_total = 0.0;
    for (int rep = 0; rep < num_permutations; ++rep) {
      const auto perm = rng.permutation(holdout.n());
      double loss = 0.0;
      Eigen::VectorXd x_row(holdout.p());
      for (int i = 0; i < holdout.n(); ++i) {
        x_row = holdout.x.row(i);
        x_row[j] = holdout.x(perm[i], j);
        loss += point_loss(x_row, i);
      }
      permuted_total += loss / holdout.n();
    }
    scores[j] = permuted_total / num_permutations - baseline;
  }
  return scores;
}

}  // namespace drf
