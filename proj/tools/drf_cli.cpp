// Command-line surface: train / weights / estimate / benchmark / importance.
// stdout carries data, stderr carries diagnostics. Exit codes:
// 1 usage, 2 data, 3 fit, 4 io.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drf/drf.hpp"

namespace {

int log_level() {
  const char* env = std::getenv("DRF_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[drf] " << msg << "\n";
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

double parse_threshold(const std::string& tok) {
  if (tok == "inf" || tok == "+inf") return std::numeric_limits<double>::infinity();
  if (tok == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    return std::stod(tok);
  } catch (const std::exception&) {
    throw drf::UsageError("cannot parse threshold '" + tok + "'");
  }
}

struct ForestFlags {
  int num_trees = 2000;
  double mtry = 0.0;  // 0: ceil(sqrt(p))
  int num_features = 20;
  double subsample_frac = 0.5;
  double min_node_frac = 0.10;
  int min_leaf_size = 1;
  int max_depth = 0;
  bool honesty = true;
  std::string split_rule = "mmd";
  double bandwidth = 0.0;
  std::uint64_t seed = 42;
  int threads = 1;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--num-trees", num_trees, "number of trees (default 2000)");
    cmd->add_option("--mtry", mtry, "expected split candidates; default ceil(sqrt(p))");
    cmd->add_option("--num-features", num_features, "Fourier features per node (default 20)");
    cmd->add_option("--subsample-frac", subsample_frac, "per-tree subsample fraction (default 0.5)");
    cmd->add_option("--min-node-frac", min_node_frac, "minimum child fraction (default 0.10)");
    cmd->add_option("--min-leaf-size", min_leaf_size, "minimum child size (default 1)");
    cmd->add_option("--max-depth", max_depth, "depth cap, 0 = none");
    cmd->add_option("--honesty", honesty, "honest splitting (default on)");
    cmd->add_option("--split-rule", split_rule, "mmd|cart (default mmd)");
    cmd->add_option("--bandwidth", bandwidth, "kernel bandwidth; <= 0 uses the median heuristic");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--threads", threads, "worker threads (never affects results)");
  }

  drf::ForestConfig to_config() const {
    drf::ForestConfig c;
    c.num_trees = num_trees;
    c.num_features = num_features;
    c.subsample_frac = subsample_frac;
    c.bandwidth = bandwidth;
    c.seed = seed;
    c.split_rule = drf::split_rule_from_string(split_rule);
    c.tree.mtry = mtry;
    c.tree.min_node_frac = min_node_frac;
    c.tree.min_leaf_size = min_leaf_size;
    c.tree.max_depth = max_depth;
    c.tree.honesty = honesty;
    return c;
  }
};

// Encode a query CSV against the predictor metadata a forest was trained
// with; factor levels unseen in training produce an all-zero one-hot group.
Eigen::MatrixXd encode_query(const std::string& path, const drf::Forest& forest,
                             const drf::IngestOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw drf::IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  auto records = drf::detail::parse_csv(buf.str());
  if (records.size() < 2) throw drf::DataError(path + ": need a header and at least one row");
  const auto& header = records[0];

  auto col_of = [&](const std::string& name) -> int {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return static_cast<int>(c);
    return -1;
  };

  const int n = static_cast<int>(records.size()) - 1;
  const int p = forest.num_predictors();
  Eigen::MatrixXd x(n, p);
  for (int j = 0; j < p; ++j) {
    const auto& info = forest.predictors[j];
    const std::string source = info.one_hot ? info.parent : info.name;
    const int c = col_of(source);
    if (c < 0)
      throw drf::DataError(path + ": query is missing column '" + source +
                           "' required by the model (train/serve mismatch)");
    for (int i = 0; i < n; ++i) {
      const std::string& cell = records[i + 1][c];
      if (info.one_hot) {
        x(i, j) = cell == info.level ? 1.0 : 0.0;
      } else {
        double v;
        if (!drf::detail::parse_double(cell, &v))
          throw drf::DataError(path + ": non-numeric value '" + cell + "' at row " +
                               std::to_string(i + 2) + " column '" + source + "'");
        x(i, j) = v;
      }
    }
  }
  (void)opt;
  return x;
}

int cmd_train(const std::string& data_path, const std::string& response_list,
              const std::string& out_path, const ForestFlags& flags, bool drop_missing) {
  drf::IngestOptions opt;
  opt.missing = drop_missing ? drf::MissingPolicy::DropRow : drf::MissingPolicy::Error;
  const auto loaded = drf::load_csv(data_path, split_list(response_list), opt);
  if (loaded.dropped_rows > 0)
    log_info("dropped " + std::to_string(loaded.dropped_rows) + " rows with missing values");

  const auto t0 = std::chrono::steady_clock::now();
  drf::Forest forest = drf::fit(loaded.data, flags.to_config(), flags.threads);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  drf::save(forest, out_path);

  nlohmann::ordered_json summary;
  summary["version"] = drf::kVersion;
  summary["n"] = loaded.data.n();
  summary["p"] = loaded.data.p();
  summary["d"] = loaded.data.d();
  summary["dropped_rows"] = loaded.dropped_rows;
  summary["bandwidth_used"] = forest.bandwidth_used;
  summary["wall_time_s"] = elapsed;
  summary["fingerprint"] = forest.train_fingerprint;
  summary["model"] = out_path;
  nlohmann::ordered_json jc = forest.config;
  summary["config"] = jc;
  const auto counts = drf::split_counts(forest);
  nlohmann::ordered_json jcounts;
  for (int j = 0; j < loaded.data.p(); ++j)
    jcounts[loaded.data.predictors[j].name] = counts[j];
  summary["split_counts"] = jcounts;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_weights(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, const std::string& format) {
  const drf::Forest forest = drf::load(model_path);
  const Eigen::MatrixXd x = encode_query(data_path, forest, {});

  std::ofstream out(out_path);
  if (!out) throw drf::IoError("cannot write " + out_path);
  out.precision(17);
  if (format == "json") {
    auto arr = nlohmann::ordered_json::array();
    for (int i = 0; i < x.rows(); ++i) {
      const auto wv = forest.weights(x.row(i).transpose());
      nlohmann::ordered_json q;
      q["query"] = i;
      auto entries = nlohmann::ordered_json::array();
      for (const auto& [idx, w] : wv.entries) entries.push_back({{"row", idx}, {"weight", w}});
      q["weights"] = entries;
      arr.push_back(q);
    }
    out << arr.dump(2) << "\n";
  } else {
    out << "query,train_row,weight\n";
    for (int i = 0; i < x.rows(); ++i) {
      const auto wv = forest.weights(x.row(i).transpose());
      for (const auto& [idx, w] : wv.entries)
        out << i << "," << idx << "," << w << "\n";
    }
  }
  log_info("wrote weights for " + std::to_string(x.rows()) + " queries to " + out_path);
  return 0;
}

int cmd_estimate(const std::string& model_path, const std::string& data_path,
                 const std::string& target, const std::string& out_path,
                 const std::string& format) {
  const drf::Forest forest = drf::load(model_path);
  const Eigen::MatrixXd x = encode_query(data_path, forest, {});
  const auto parts = split_list(target, ':');
  if (parts.empty()) throw drf::UsageError("empty target spec");
  const std::string& kind = parts[0];

  std::ofstream out(out_path);
  if (!out) throw drf::IoError("cannot write " + out_path);
  out.precision(12);

  auto emit_rows = [&](const std::vector<std::string>& cols,
                       const std::vector<std::vector<std::string>>& rows) {
    if (format == "json") {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& row : rows) {
        nlohmann::ordered_json r;
        for (std::size_t c = 0; c < cols.size(); ++c) r[cols[c]] = row[c];
        arr.push_back(r);
      }
      out << arr.dump(2) << "\n";
    } else {
      for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
      out << "\n";
      for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
        out << "\n";
      }
    }
  };

  auto fmt = [](double v) {
    std::ostringstream oss;
    oss.precision(12);
    oss << v;
    return oss.str();
  };

  std::vector<std::vector<std::string>> rows;

  if (kind == "mean") {
    std::vector<std::string> cols = {"query"};
    for (const auto& rn : forest.responses) cols.push_back("mean_" + rn);
    for (int i = 0; i < x.rows(); ++i) {
      auto cd = drf::ConditionalDistribution::from_forest(forest, x.row(i).transpose());
      std::vector<std::string> row = {std::to_string(i)};
      for (int j = 0; j < forest.num_responses(); ++j) row.push_back(fmt(cd.mean(j)));
      rows.push_back(row);
    }
    emit_rows(cols, rows);
  } else if (kind == "quantile") {
    if (parts.size() != 3) throw drf::UsageError("expected quantile:alpha:coord");
    const double alpha = std::stod(parts[1]);
    const int coord = std::stoi(parts[2]);
    if (coord < 0 || coord >= forest.num_responses())
      throw drf::UsageError("quantile: coord out of range");
    for (int i = 0; i < x.rows(); ++i) {
      auto cd = drf::ConditionalDistribution::from_forest(forest, x.row(i).transpose());
      rows.push_back({std::to_string(i), fmt(cd.quantile(alpha, coord))});
    }
    emit_rows({"query", "quantile"}, rows);
  } else if (kind == "cdf") {
    if (parts.size() != 2) throw drf::UsageError("expected cdf:t1,...,td");
    const auto toks = split_list(parts[1]);
    if (static_cast<int>(toks.size()) != forest.num_responses())
      throw drf::UsageError("cdf: need one threshold per response coordinate");
    Eigen::VectorXd t(forest.num_responses());
    for (int j = 0; j < t.size(); ++j) t[j] = parse_threshold(toks[j]);
    for (int i = 0; i < x.rows(); ++i) {
      auto cd = drf::ConditionalDistribution::from_forest(forest, x.row(i).transpose());
      rows.push_back({std::to_string(i), fmt(cd.cdf(t))});
    }
    emit_rows({"query", "cdf"}, rows);
  } else if (kind == "corr") {
    if (parts.size() != 3) throw drf::UsageError("expected corr:i:j");
    const int ci = std::stoi(parts[1]);
    const int cj = std::stoi(parts[2]);
    for (int i = 0; i < x.rows(); ++i) {
      auto cd = drf::ConditionalDistribution::from_forest(forest, x.row(i).transpose());
      const auto cc = cd.cov_corr(ci, cj);
      rows.push_back({std::to_string(i), fmt(cc.covariance),
                      cc.correlation ? fmt(*cc.correlation) : "NA:zero-variance"});
    }
    emit_rows({"query", "covariance", "correlation"}, rows);
  } else if (kind == "hsic") {
    if (parts.size() != 2) throw drf::UsageError("expected hsic:i,j|k,l");
    const auto sides = split_list(parts[1], '|');
    if (sides.size() != 2) throw drf::UsageError("hsic target needs two coordinate blocks");
    std::vector<int> a, b;
    for (const auto& tok : split_list(sides[0])) a.push_back(std::stoi(tok));
    for (const auto& tok : split_list(sides[1])) b.push_back(std::stoi(tok));
    for (int i = 0; i < x.rows(); ++i) {
      auto cd = drf::ConditionalDistribution::from_forest(forest, x.row(i).transpose());
      rows.push_back({std::to_string(i), fmt(cd.hsic(a, b))});
    }
    emit_rows({"query", "hsic"}, rows);
  } else if (kind == "copula-sample") {
    if (parts.size() != 2) throw drf::UsageError("expected copula-sample:m");
    const int m = std::stoi(parts[1]);
    drf::Rng rng(forest.config.seed);
    std::vector<std::string> cols = {"query", "sample"};
    for (int j = 0; j < forest.num_responses(); ++j) cols.push_back("u" + std::to_string(j + 1));
    for (int i = 0; i < x.rows(); ++i) {
      auto cd = drf::ConditionalDistribution::from_forest(forest, x.row(i).transpose());
      const auto cop = cd.copula_sample();
      // resample m points from the weighted u-cloud for compact output
      std::vector<double> cum(cop.weights.size());
      double total = 0.0;
      for (int k = 0; k < cop.weights.size(); ++k) {
        total += cop.weights[k];
        cum[k] = total;
      }
      for (int s = 0; s < m; ++s) {
        const double u = rng.uniform() * total;
        const auto it = std::lower_bound(cum.begin(), cum.end(), u);
        const auto k = std::min<std::ptrdiff_t>(it - cum.begin(),
                                                static_cast<std::ptrdiff_t>(cum.size()) - 1);
        std::vector<std::string> row = {std::to_string(i), std::to_string(s)};
        for (int j = 0; j < cop.u_points.cols(); ++j) row.push_back(fmt(cop.u_points(k, j)));
        rows.push_back(row);
      }
    }
    emit_rows(cols, rows);
  } else if (kind == "do-average") {
    if (parts.size() != 4 && parts.size() != 5)
      throw drf::UsageError("expected do-average:lo:hi:count[:bandwidth]");
    const double lo = std::stod(parts[1]);
    const double hi = std::stod(parts[2]);
    const int count = std::stoi(parts[3]);
    const double bw = parts.size() == 5 ? std::stod(parts[4]) : 0.0;
    if (count < 1) throw drf::UsageError("do-average: count must be >= 1");
    std::vector<double> grid(count);
    for (int g = 0; g < count; ++g)
      grid[g] = count == 1 ? lo : lo + (hi - lo) * g / (count - 1);
    const auto res = drf::do_average(forest, grid, x, bw);
    for (std::size_t g = 0; g < grid.size(); ++g)
      rows.push_back({fmt(grid[g]),
                      res.available[g] ? fmt(res.value[g]) : "NA:no-kernel-mass",
                      std::to_string(res.num_contributing[g])});
    emit_rows({"w", "do_mean", "n_contributing"}, rows);
  } else {
    throw drf::UsageError("unknown target '" + kind + "'");
  }
  log_info("wrote estimates to " + out_path);
  return 0;
}

int cmd_benchmark(const std::string& scenario_id, int n, int p, int copula_dim,
                  const std::string& methods, const std::string& metric, int repeats,
                  double train_frac, int num_trees, double mtry, std::uint64_t seed,
                  int threads, const std::string& out_path, const std::string& tidy_path) {
  drf::Scenario scenario;
  scenario.id = scenario_id;
  scenario.n = n;
  scenario.p = p;
  scenario.seed = seed;
  if (copula_dim > 0) scenario.copula_dim = copula_dim;

  drf::BenchmarkOptions options;
  if (!methods.empty()) options.methods = split_list(methods);
  options.metric = metric;
  options.repeats = repeats;
  options.train_frac = train_frac;
  options.num_trees = num_trees;
  options.mtry = mtry;
  options.seed = seed;
  options.threads = threads;

  const auto result = drf::run_benchmark(scenario, options);
  std::ofstream out(out_path);
  if (!out) throw drf::IoError("cannot write " + out_path);
  out << result.to_json().dump(2) << "\n";
  if (!tidy_path.empty()) result.write_tidy_csv(tidy_path);
  std::cout << result.to_json()["results"].dump(2) << "\n";
  return 0;
}

int cmd_importance(const std::string& model_path, const std::string& data_path,
                   const std::string& out_path, int permutations, std::uint64_t seed) {
  const drf::Forest forest = drf::load(model_path);
  drf::IngestOptions opt;
  auto loaded = drf::load_csv(data_path, forest.responses, opt);
  if (loaded.data.p() != forest.num_predictors())
    throw drf::DataError("holdout encodes to " + std::to_string(loaded.data.p()) +
                         " predictors, model expects " +
                         std::to_string(forest.num_predictors()));
  drf::Rng rng(seed);
  const auto scores = drf::variable_importance(forest, loaded.data, rng, permutations);
  std::ofstream out(out_path);
  if (!out) throw drf::IoError("cannot write " + out_path);
  out << "feature,importance\n";
  out.precision(12);
  for (int j = 0; j < loaded.data.p(); ++j)
    out << loaded.data.predictors[j].name << "," << scores[j] << "\n";
  log_info("wrote importance scores to " + out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributional random forest"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "fit a forest from a CSV file");
  std::string data_path, response_list, out_path = "forest.drf";
  bool drop_missing = false;
  train->add_option("--data", data_path, "training CSV")->required();
  train->add_option("--response", response_list, "comma-separated response columns")->required();
  train->add_option("--out", out_path, "output model path");
  train->add_flag("--drop-missing", drop_missing, "drop rows with missing values instead of failing");
  ForestFlags flags;
  flags.add_to(train);

  // weights
  auto* weights = app.add_subcommand("weights", "emit the weighting function for query rows");
  std::string w_model, w_data, w_out = "weights.csv", w_format = "csv";
  weights->add_option("--model", w_model, "forest file")->required();
  weights->add_option("--data", w_data, "query CSV")->required();
  weights->add_option("--out", w_out, "output path");
  weights->add_option("--format", w_format, "csv|json");

  // estimate
  auto* estimate = app.add_subcommand("estimate", "compute a weight-based target per query row");
  std::string e_model, e_data, e_target, e_out = "estimates.csv", e_format = "csv";
  estimate->add_option("--model", e_model, "forest file")->required();
  estimate->add_option("--data", e_data, "query CSV")->required();
  estimate
      ->add_option("--target", e_target,
                   "mean | quantile:a:coord | cdf:t1,..,td | corr:i:j | hsic:a|b | "
                   "copula-sample:m | do-average:lo:hi:count[:bw]")
      ->required();
  estimate->add_option("--out", e_out, "output path");
  estimate->add_option("--format", e_format, "csv|json");

  // benchmark
  auto* benchmark = app.add_subcommand("benchmark", "run a synthetic scenario benchmark");
  std::string b_scenario, b_methods, b_metric = "pinball", b_out = "benchmark.json", b_tidy;
  int b_n = 2000, b_p = 40, b_copula_dim = 0, b_repeats = 10, b_trees = 500, b_threads = 1;
  double b_mtry = 0.0;
  double b_train_frac = 0.7;
  std::uint64_t b_seed = 17;
  benchmark->add_option("--scenario", b_scenario,
                        "toy-grf|vignette|scenario1|scenario2|scenario3|copula|causal18")
      ->required();
  benchmark->add_option("--n", b_n, "sample size");
  benchmark->add_option("--p", b_p, "predictor count");
  benchmark->add_option("--copula-dim", b_copula_dim, "copula response dimension");
  benchmark->add_option("--methods", b_methods,
                        "comma list of drf-mmd,drf-cart,knn,kernel-smoother,rf-residual");
  benchmark->add_option("--metric", b_metric, "pinball|nlpd");
  benchmark->add_option("--repeats", b_repeats, "out-of-sample repeats (default 10)");
  benchmark->add_option("--train-frac", b_train_frac, "train fraction (default 0.7)");
  benchmark->add_option("--num-trees", b_trees, "trees per forest method");
  benchmark->add_option("--mtry", b_mtry, "expected split candidates for forest methods");
  benchmark->add_option("--seed", b_seed, "harness seed");
  benchmark->add_option("--threads", b_threads, "worker threads");
  benchmark->add_option("--out", b_out, "JSON report path");
  benchmark->add_option("--tidy-out", b_tidy, "tidy CSV path (x, method, estimate, truth)");

  // importance
  auto* importance = app.add_subcommand("importance", "permutation variable importance");
  std::string i_model, i_data, i_out = "importance.csv";
  int i_perms = 1;
  std::uint64_t i_seed = 42;
  importance->add_option("--model", i_model, "forest file")->required();
  importance->add_option("--data", i_data, "holdout CSV with response columns")->required();
  importance->add_option("--out", i_out, "output path");
  importance->add_option("--permutations", i_perms, "permutations per feature");
  importance->add_option("--seed", i_seed, "permutation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (train->parsed())
      return cmd_train(data_path, response_list, out_path, flags, drop_missing);
    if (weights->parsed()) return cmd_weights(w_model, w_data, w_out, w_format);
    if (estimate->parsed()) return cmd_estimate(e_model, e_data, e_target, e_out, e_format);
    if (benchmark->parsed())
      return cmd_benchmark(b_scenario, b_n, b_p, b_copula_dim, b_methods, b_metric, b_repeats,
                           b_train_frac, b_trees, b_mtry, b_seed, b_threads, b_out, b_tidy);
    if (importance->parsed()) return cmd_importance(i_model, i_data, i_out, i_perms, i_seed);
  } catch (const drf::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const drf::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const drf::FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return 3;
  } catch (const drf::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
