#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <set>

#include "drf/estimators.hpp"
#include "drf/eval/scenarios.hpp"
#include "drf/forest.hpp"

namespace {

drf::Dataset shift_dataset(int n, int p, std::uint64_t seed) {
  drf::Scenario s;
  s.id = "scenario1";
  s.n = n;
  s.p = p;
  s.seed = seed;
  return drf::generate(s).data;
}

// Literal per-tree accumulation, renormalized over trees whose leaf holds
// populate rows; written independently of Forest::weights.
Eigen::VectorXd weights_oracle(const drf::Forest& forest, const Eigen::VectorXd& x) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(forest.num_train_rows());
  int contributing = 0;
  for (const auto& tree : forest.trees) {
    int idx = 0;
    while (!tree.nodes[idx].is_leaf())
      idx = x[tree.nodes[idx].feature] <= tree.nodes[idx].cutoff ? tree.nodes[idx].left
                                                                 : tree.nodes[idx].right;
    const auto& leaf = tree.nodes[idx].samples;
    if (leaf.empty()) continue;
    ++contributing;
    for (int id : leaf) w[id] += 1.0 / static_cast<double>(leaf.size());
  }
  return w / contributing;
}

}  // namespace

TEST_CASE("single-tree forest reproduces leaf proportions", "[forest]") {
  auto ds = shift_dataset(60, 3, 1);
  drf::ForestConfig config;
  config.num_trees = 1;
  config.subsample_frac = 1.0;
  config.tree.honesty = false;
  config.seed = 5;
  auto forest = drf::fit(ds, config);

  drf::Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.uniform(-1.0, 1.0);
    const auto& leaf = forest.trees[0].nodes[forest.trees[0].route(x)].samples;
    const auto wv = forest.weights(x);
    REQUIRE(wv.entries.size() == leaf.size());
    std::set<int> leaf_set(leaf.begin(), leaf.end());
    for (const auto& [id, w] : wv.entries) {
      CHECK(leaf_set.count(id) == 1);
      CHECK(w == 1.0 / static_cast<double>(leaf.size()));
    }
  }
}

TEST_CASE("hand-assembled forests give the weighting-function arithmetic", "[forest]") {
  drf::Forest forest;
  forest.y_train = Eigen::MatrixXd::Zero(10, 1);
  forest.predictors = {{"x1", false, "", ""}};
  forest.responses = {"y"};

  auto single_leaf_tree = [](std::vector<int> rows) {
    drf::Tree t;
    t.nodes.resize(1);
    t.nodes[0].samples = std::move(rows);
    return t;
  };

  SECTION("two trees with disjoint singleton leaves") {
    forest.trees.push_back(single_leaf_tree({3}));
    forest.trees.push_back(single_leaf_tree({9}));
    auto wv = forest.weights(Eigen::VectorXd::Zero(1));
    REQUIRE(wv.entries.size() == 2);
    CHECK(wv.entries[0] == std::pair<int, double>{3, 0.5});
    CHECK(wv.entries[1] == std::pair<int, double>{9, 0.5});
  }
  SECTION("all trees pointing at row 7") {
    for (int k = 0; k < 3; ++k) forest.trees.push_back(single_leaf_tree({7}));
    auto wv = forest.weights(Eigen::VectorXd::Zero(1));
    REQUIRE(wv.entries.size() == 1);
    CHECK(wv.entries[0].first == 7);
    CHECK(wv.entries[0].second == 1.0);
  }
  SECTION("empty leaves renormalize over contributing trees") {
    forest.trees.push_back(single_leaf_tree({2, 4}));
    forest.trees.push_back(single_leaf_tree({}));
    auto wv = forest.weights(Eigen::VectorXd::Zero(1));
    REQUIRE(wv.entries.size() == 2);
    CHECK(wv.entries[0].second == 0.5);
    CHECK(wv.entries[1].second == 0.5);
    CHECK_THAT(wv.sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  SECTION("all leaves empty is an error") {
    forest.trees.push_back(single_leaf_tree({}));
    CHECK_THROWS_AS(forest.weights(Eigen::VectorXd::Zero(1)), drf::FitError);
  }
}

TEST_CASE("weights match the pseudocode oracle", "[forest]") {
  drf::Rng rng(3);
  for (int rep = 0; rep < 4; ++rep) {
    auto ds = shift_dataset(80 + 20 * rep, 4, 10 + rep);
    drf::ForestConfig config;
    config.num_trees = 30;
    config.tree.honesty = rep % 2 == 0;
    config.split_rule = rep < 2 ? drf::SplitRule::Mmd : drf::SplitRule::CartMulti;
    config.seed = 100 + rep;
    auto forest = drf::fit(ds, config);

    for (int q = 0; q < 25; ++q) {
      Eigen::VectorXd x(4);
      for (int j = 0; j < 4; ++j) x[j] = rng.uniform(-1.0, 1.0);
      const auto wv = forest.weights(x);
      const Eigen::VectorXd oracle = weights_oracle(forest, x);
      const Eigen::VectorXd dense = wv.dense();
      for (int i = 0; i < ds.n(); ++i)
        CHECK_THAT(dense[i], Catch::Matchers::WithinAbs(oracle[i], 1e-12));
      CHECK_THAT(wv.sum(), Catch::Matchers::WithinAbs(1.0, 1e-10));
      for (const auto& [i, w] : wv.entries) CHECK(w > 0.0);
    }
  }
}

TEST_CASE("honesty-off weights equal the unnormalized pseudocode exactly", "[forest]") {
  // without honesty no leaf can be empty, so 1/(|L| |F|) accumulation applies as-is
  auto ds = shift_dataset(70, 3, 4);
  drf::ForestConfig config;
  config.num_trees = 25;
  config.tree.honesty = false;
  config.seed = 9;
  auto forest = drf::fit(ds, config);

  drf::Rng rng(5);
  for (int q = 0; q < 20; ++q) {
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd literal = Eigen::VectorXd::Zero(ds.n());
    for (const auto& tree : forest.trees) {
      const auto& leaf = tree.nodes[tree.route(x)].samples;
      REQUIRE_FALSE(leaf.empty());
      for (int id : leaf)
        literal[id] += 1.0 / (static_cast<double>(leaf.size()) * forest.trees.size());
    }
    const Eigen::VectorXd dense = forest.weights(x).dense();
    for (int i = 0; i < ds.n(); ++i)
      CHECK_THAT(dense[i], Catch::Matchers::WithinAbs(literal[i], 1e-12));
  }
}

TEST_CASE("fit is deterministic across worker counts", "[forest]") {
  auto ds = shift_dataset(120, 4, 6);
  drf::ForestConfig config;
  config.num_trees = 40;
  config.seed = 11;
  auto f1 = drf::fit(ds, config, 1);
  auto f4 = drf::fit(ds, config, 4);
  CHECK(drf::serialize_forest(f1) == drf::serialize_forest(f4));
}

TEST_CASE("signal feature dominates the split counts", "[forest]") {
  auto ds = shift_dataset(1000, 10, 7);
  drf::ForestConfig config;
  config.num_trees = 100;
  config.seed = 13;
  auto forest = drf::fit(ds, config, 2);
  const auto counts = drf::split_counts(forest);
  for (int j = 1; j < 10; ++j) {
    INFO("feature " << j << ": " << counts[j] << " vs signal " << counts[0]);
    CHECK(counts[0] > counts[j]);
  }
}

TEST_CASE("serialization round-trips bit-exactly", "[forest]") {
  auto ds = shift_dataset(90, 3, 8);
  drf::ForestConfig config;
  config.num_trees = 10;
  config.seed = 15;
  auto forest = drf::fit(ds, config);

  const std::string path = "drf_test_forest.drf";
  drf::save(forest, path);
  auto loaded = drf::load(path);

  CHECK(loaded.bandwidth_used == forest.bandwidth_used);
  CHECK(loaded.train_fingerprint == forest.train_fingerprint);
  CHECK(loaded.y_train == forest.y_train);

  drf::Rng rng(16);
  for (int q = 0; q < 100; ++q) {
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.uniform(-1.0, 1.0);
    const auto a = forest.weights(x);
    const auto b = loaded.weights(x);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t k = 0; k < a.entries.size(); ++k) {
      CHECK(a.entries[k].first == b.entries[k].first);
      CHECK(a.entries[k].second == b.entries[k].second);  // bit-level equality
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("forest file integrity failures are loud", "[forest]") {
  auto ds = shift_dataset(60, 3, 9);
  drf::ForestConfig config;
  config.num_trees = 5;
  auto forest = drf::fit(ds, config);
  std::string bytes = drf::serialize_forest(forest);

  SECTION("corrupted byte fails the checksum") {
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    CHECK_THROWS_WITH(drf::deserialize_forest(bytes),
                      Catch::Matchers::ContainsSubstring("checksum"));
  }
  SECTION("version mismatch names both versions") {
    // version field sits right after the 4-byte magic; bump it and re-seal the CRC
    bytes[4] = 9;
    std::string body = bytes.substr(0, bytes.size() - 8);
    std::string fixed = body;
    drf::put_u64(fixed, drf::Crc64::of(body));
    try {
      drf::deserialize_forest(fixed);
      FAIL("expected a version error");
    } catch (const drf::IoError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("9") != std::string::npos);
      CHECK(msg.find("1") != std::string::npos);
    }
  }
  SECTION("truncated file") {
    CHECK_THROWS_AS(drf::deserialize_forest(bytes.substr(0, bytes.size() / 3)), drf::IoError);
  }
  SECTION("wrong magic") {
    bytes[0] = 'X';
    std::string body = bytes.substr(0, bytes.size() - 8);
    std::string fixed = body;
    drf::put_u64(fixed, drf::Crc64::of(body));
    CHECK_THROWS_WITH(drf::deserialize_forest(fixed),
                      Catch::Matchers::ContainsSubstring("magic"));
  }
}

TEST_CASE("weight variance between half-forests shrinks with ensemble size", "[forest]") {
  auto ds = shift_dataset(300, 5, 12);
  drf::Rng rng(17);
  std::vector<Eigen::VectorXd> queries;
  for (int q = 0; q < 10; ++q) {
    Eigen::VectorXd x(5);
    for (int j = 0; j < 5; ++j) x[j] = rng.uniform(-1.0, 1.0);
    queries.push_back(x);
  }

  auto half_gap = [&](int num_trees) {
    drf::ForestConfig config;
    config.num_trees = num_trees;
    config.seed = 19;
    auto forest = drf::fit(ds, config, 2);
    drf::Forest a = forest, b = forest;
    a.trees.assign(forest.trees.begin(), forest.trees.begin() + num_trees / 2);
    b.trees.assign(forest.trees.begin() + num_trees / 2, forest.trees.end());
    double gap = 0.0;
    for (const auto& x : queries)
      gap += (a.weights(x).dense() - b.weights(x).dense()).squaredNorm();
    return gap / queries.size();
  };

  const double g50 = half_gap(50);
  const double g100 = half_gap(100);
  const double g200 = half_gap(200);
  INFO("gaps: " << g50 << " > " << g100 << " > " << g200);
  CHECK(g100 < g50);
  CHECK(g200 < g100);
}

TEST_CASE("variable importance separates signal from noise", "[forest]") {
  auto ds = shift_dataset(300, 4, 21);
  drf::ForestConfig config;
  config.num_trees = 60;
  config.seed = 23;
  auto forest = drf::fit(ds, config, 2);

  std::vector<int> head(40);
  for (int i = 0; i < 40; ++i) head[i] = i;
  auto holdout = drf::subset_rows(shift_dataset(360, 4, 99), head);

  drf::Rng rng(25);
  const auto scores = drf::variable_importance(forest, holdout, rng);
  for (int j = 1; j < 4; ++j) {
    INFO("signal " << scores[0] << " vs noise " << scores[j]);
    CHECK(scores[0] > std::abs(scores[j]));
  }
}

TEST_CASE("permuting a constant column moves nothing", "[forest]") {
  auto base = shift_dataset(120, 3, 31);
  drf::Dataset ds = base;
  ds.x.conservativeResize(Eigen::NoChange, 4);
  ds.x.col(3).setConstant(2.5);  // permutation-invariant column
  ds.predictors.push_back({"x4", false, "", ""});

  drf::ForestConfig config;
  config.num_trees = 30;
  auto forest = drf::fit(ds, config);
  auto holdout = drf::subset_rows(ds, {0, 5, 10, 15, 20, 25, 30, 35, 40, 45});
  drf::Rng rng(33);
  const auto scores = drf::variable_importance(forest, holdout, rng);
  CHECK(scores[3] == 0.0);
}

TEST_CASE("averaging permutations stabilizes importance scores", "[forest]") {
  auto ds = shift_dataset(200, 3, 41);
  drf::ForestConfig config;
  config.num_trees = 40;
  auto forest = drf::fit(ds, config, 2);
  std::vector<int> head(30);
  for (int i = 0; i < 30; ++i) head[i] = i;
  auto holdout = drf::subset_rows(shift_dataset(200, 3, 42), head);

  auto spread = [&](int permutations) {
    std::vector<double> vals;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      drf::Rng rng(1000 + seed);
      vals.push_back(drf::variable_importance(forest, holdout, rng, permutations)[0]);
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= vals.size();
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    return std::sqrt(var / (vals.size() - 1));
  };

  const double sd1 = spread(1);
  const double sd5 = spread(5);
  INFO("sd over seeds: 1 perm " << sd1 << ", 5 perms " << sd5);
  CHECK(sd5 < sd1);
}

TEST_CASE("fit validates its inputs", "[forest]") {
  auto ds = shift_dataset(30, 3, 51);
  drf::ForestConfig config;

  SECTION("too few rows") {
    auto tiny = drf::subset_rows(ds, {0, 1, 2, 3, 4});
    CHECK_THROWS_AS(drf::fit(tiny, config), drf::FitError);
  }
  SECTION("identical responses break the bandwidth heuristic") {
    drf::Dataset flat = ds;
    flat.y.setConstant(3.0);
    CHECK_THROWS_AS(drf::fit(flat, config), drf::FitError);
  }
  SECTION("bad subsample fraction") {
    config.subsample_frac = 1.5;
    CHECK_THROWS_AS(drf::fit(ds, config), drf::FitError);
  }
  SECTION("non-finite or misshapen query") {
    config.num_trees = 5;
    auto forest = drf::fit(ds, config);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(3, std::nan(""));
    CHECK_THROWS_AS(forest.weights(x), drf::DataError);
    CHECK_THROWS_AS(forest.weights(Eigen::VectorXd::Zero(2)), drf::DataError);
  }
}
