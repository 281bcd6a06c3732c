#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "drf/common.hpp"
#include "drf/kernel.hpp"
#include "drf/random.hpp"
#include "drf/split.hpp"

namespace drf {

struct TreeConfig {
  double mtry = 0.0;           // expected candidate count; <= 0 resolves to ceil(sqrt(p))
  double min_node_frac = 0.10; // each child keeps at least this fraction of the node
  int min_leaf_size = 1;       // optional kappa-style floor on child sizes
  int max_depth = 0;           // 0 = no cap
  bool honesty = true;
};

enum class SplitRule { Mmd, CartMulti };

inline const char* to_string(SplitRule r) {
  return r == SplitRule::Mmd ? "mmd" : "cart";
}

inline SplitRule split_rule_from_string(const std::string& s) {
  if (s == "mmd") return SplitRule::Mmd;
  if (s == "cart" || s == "cart_multi") return SplitRule::CartMulti;
  throw UsageError("unknown split rule '" + s + "' (expected mmd|cart)");
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double cutoff = 0.0;
  int left = -1;
  int right = -1;
  std::vector<int> samples;  // populate-half training ids; leaves only, may be empty

  bool is_leaf() const { return feature < 0; }
};

// One honest tree. Nodes are stored flat in pre-order (node, left subtree,
// right subtree); immutable after construction, safe for concurrent routing.
class Tree {
 public:
  std::vector<TreeNode> nodes;
  std::vector<int> build_ids;
  std::vector<int> populate_ids;
  std::vector<std::uint64_t> node_seeds;  // per-node criterion seeds, for replay

  // Deterministic descent; values equal to the cutoff go left.
  int route(ConstRowRef x_row) const {
    int idx = 0;
    while (!nodes[idx].is_leaf()) {
      const TreeNode& node = nodes[idx];
      const double v = x_row[node.feature];
      if (!std::isfinite(v))
        throw DataError("route: non-finite value for feature " + std::to_string(node.feature));
      idx = v <= node.cutoff ? node.left : node.right;
    }
    return idx;
  }

  const TreeNode& leaf_for(ConstRowRef x_row) const { return nodes[route(x_row)]; }
};

// grf-style candidate count: min(max(Poisson(mtry), 1), p) distinct features.
inline std::vector<int> draw_candidates(int p, double mtry, Rng& rng) {
  int k = rng.poisson(mtry);
  k = std::min(std::max(k, 1), p);
  auto ids = rng.sample_without_replacement(p, k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Supplies the per-node Fourier feature set for the MMD rule. Kept as a hook
// so tests can pin frequencies or bandwidths.
using FeatureFactory = std::function<FourierFeatureSet(int dim, Rng& rng)>;

inline FeatureFactory gaussian_feature_factory(int num_features, double sigma) {
  return [num_features, sigma](int dim, Rng& rng) {
    return sample_features(dim, num_features, sigma, rng);
  };
}

namespace detail {

struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const Eigen::MatrixXd& y_scaled;
  const TreeConfig& config;
  SplitRule rule;
  const FeatureFactory& features;
  Rng& rng;
  double mtry;
  Tree* tree;

  int build_node(const std::vector<int>& ids, int depth) {
    const int idx = static_cast<int>(tree->nodes.size());
    tree->nodes.emplace_back();
    tree->node_seeds.push_back(rng.next_u64());

    auto decision = find_split(ids, depth);
    if (!decision) return idx;  // leaf; populated later

    tree->nodes[idx].feature = decision->feature_index;
    tree->nodes[idx].cutoff = decision->cutoff;
    const auto left_ids = std::move(decision->left_ids);
    const auto right_ids = std::move(decision->right_ids);
    decision.reset();
    const int left = build_node(left_ids, depth + 1);
    tree->nodes[idx].left = left;
    const int right = build_node(right_ids, depth + 1);
    tree->nodes[idx].right = right;
    return idx;
  }

  std::optional<SplitDecision> find_split(const std::vector<int>& ids, int depth) {
    const int n = static_cast<int>(ids.size());
    if (n < 2 || n < 2 * config.min_leaf_size) return std::nullopt;
    if (config.max_depth > 0 && depth >= config.max_depth) return std::nullopt;

    Rng node_rng(tree->node_seeds.back());
    const int d = static_cast<int>(y_scaled.cols());

    // Gather the node's (scaled) responses once; one fresh feature set per node.
    RowMatrixXd y_node(n, d);
    for (int i = 0; i < n; ++i) y_node.row(i) = y_scaled.row(ids[i]);

    RowMatrixXd cos_e, sin_e;
    if (rule == SplitRule::Mmd) {
      FourierFeatureSet f = features(d, node_rng);
      embed_rows(y_node, f, &cos_e, &sin_e);
    }

    const int p = static_cast<int>(x.cols());
    const auto candidates = draw_candidates(p, mtry, node_rng);

    std::vector<SplitScan> scans;
    scans.reserve(candidates.size());
    std::vector<double> vals(n);
    for (int feature : candidates) {
      for (int i = 0; i < n; ++i) vals[i] = x(ids[i], feature);
      if (rule == SplitRule::Mmd) {
        scans.push_back(mmd_scan(cos_e, sin_e, vals, ids, config.min_node_frac, feature,
                                 config.min_leaf_size));
      } else {
        scans.push_back(cart_multi_scan(y_node, vals, ids, config.min_node_frac, feature,
                                        config.min_leaf_size));
      }
    }
    return best_split(scans, ids);
  }
};

}  // namespace detail

// Honest recursive construction: structure from the build half, leaves
// populated by routing the disjoint populate half. `subsample_ids` is this
// tree's subsample of training rows; responses must already be scaled.
inline Tree build_tree(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_scaled,
                       const std::vector<int>& subsample_ids, const TreeConfig& config,
                       SplitRule rule, const FeatureFactory& features, Rng& rng) {
  Tree tree;
  if (config.honesty) {
    if (subsample_ids.size() < 4)
      throw FitError("honest tree needs a subsample of at least 4 rows");
    std::vector<int> shuffled = subsample_ids;
    rng.shuffle(shuffled);
    const std::size_t build_n = (shuffled.size() + 1) / 2;
    tree.build_ids.assign(shuffled.begin(), shuffled.begin() + build_n);
    tree.populate_ids.assign(shuffled.begin() + build_n, shuffled.end());
  } else {
    if (subsample_ids.size() < 2) throw FitError("tree needs a subsample of at least 2 rows");
    tree.build_ids = subsample_ids;
    tree.populate_ids = subsample_ids;
  }
  std::sort(tree.build_ids.begin(), tree.build_ids.end());
  std::sort(tree.populate_ids.begin(), tree.populate_ids.end());

  double mtry = config.mtry;
  if (mtry <= 0.0) mtry = std::ceil(std::sqrt(static_cast<double>(x.cols())));

  detail::TreeBuilder builder{x, y_scaled, config, rule, features, rng, mtry, &tree};
  builder.build_node(tree.build_ids, 0);

  for (int id : tree.populate_ids) {
    const int leaf = tree.route(x.row(id).transpose());
    tree.nodes[leaf].samples.push_back(id);
  }
  return tree;
}

}  // namespace drf
