#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "drf/dataset.hpp"
#include "drf/eval/scenarios.hpp"

namespace {

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(DRF_CLI_PATH) + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CliFixture {
  std::string train_csv = "cli_train.csv";
  std::string query_csv = "cli_query.csv";

  CliFixture() {
    drf::Scenario s{.id = "scenario1", .n = 200, .p = 3, .seed = 100};
    auto gen = drf::generate(s);
    drf::write_csv(gen.data, train_csv);
    std::ofstream out(query_csv);
    out << "x1,x2,x3\n";
    for (int i = 0; i < 5; ++i)
      out << gen.data.x(i, 0) << "," << gen.data.x(i, 1) << "," << gen.data.x(i, 2) << "\n";
  }

  ~CliFixture() {
    for (const char* f : {"cli_train.csv", "cli_query.csv", "cli_model.drf", "cli_model2.drf",
                          "cli_out.csv", "cli_stdout.txt", "cli_stderr.txt", "cli_bench.json",
                          "cli_tidy.csv"})
      std::remove(f);
  }
};

}  // namespace

TEST_CASE_METHOD(CliFixture, "train emits a summary and a loadable model", "[cli]") {
  const int code = run_cli("train --data " + train_csv +
                           " --response y --out cli_model.drf --num-trees 40 --seed 7");
  REQUIRE(code == 0);
  auto summary = nlohmann::json::parse(slurp("cli_stdout.txt"));
  CHECK(summary["n"] == 200);
  CHECK(summary["p"] == 3);
  CHECK(summary["d"] == 1);
  CHECK(summary["bandwidth_used"].get<double>() > 0.0);
  // the signal feature collects the most splits
  const auto counts = summary["split_counts"];
  CHECK(counts["x1"].get<int>() > counts["x2"].get<int>());
  CHECK(counts["x1"].get<int>() > counts["x3"].get<int>());

  SECTION("seeded training is byte-reproducible") {
    REQUIRE(run_cli("train --data " + train_csv +
                    " --response y --out cli_model2.drf --num-trees 40 --seed 7") == 0);
    CHECK(slurp("cli_model.drf") == slurp("cli_model2.drf"));
  }
  SECTION("weights rows sum to one per query") {
    REQUIRE(run_cli("weights --model cli_model.drf --data " + query_csv +
                    " --out cli_out.csv") == 0);
    std::ifstream in("cli_out.csv");
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "query,train_row,weight");
    std::vector<double> sums(5, 0.0);
    while (std::getline(in, line)) {
      int q, row;
      double w;
      REQUIRE(std::sscanf(line.c_str(), "%d,%d,%lf", &q, &row, &w) == 3);
      sums[q] += w;
      CHECK(w > 0.0);
    }
    for (double s : sums) CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-10));
  }
  SECTION("estimate quantile emits one row per query") {
    REQUIRE(run_cli("estimate --model cli_model.drf --data " + query_csv +
                    " --target quantile:0.5:0 --out cli_out.csv") == 0);
    std::ifstream in("cli_out.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "query,quantile");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 5);
  }
  SECTION("cdf at +inf is 1 for every query") {
    REQUIRE(run_cli("estimate --model cli_model.drf --data " + query_csv +
                    " --target cdf:inf --out cli_out.csv") == 0);
    std::ifstream in("cli_out.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      CHECK(std::stod(line.substr(comma + 1)) == 1.0);
    }
  }
  SECTION("bad target spec is a usage error") {
    CHECK(run_cli("estimate --model cli_model.drf --data " + query_csv +
                  " --target entropy --out cli_out.csv") == 1);
  }
  SECTION("corrupted model file is an io error") {
    auto bytes = slurp("cli_model.drf");
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x10);
    std::ofstream out("cli_model2.drf", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK(run_cli("estimate --model cli_model2.drf --data " + query_csv +
                  " --target mean --out cli_out.csv") == 4);
  }
}

TEST_CASE_METHOD(CliFixture, "train error paths map to exit codes", "[cli]") {
  SECTION("missing response column names the column") {
    CHECK(run_cli("train --data " + train_csv + " --response z --out cli_model.drf") == 2);
    CHECK(slurp("cli_stderr.txt").find("z") != std::string::npos);
  }
  SECTION("unreadable data file") {
    CHECK(run_cli("train --data nope.csv --response y --out cli_model.drf") == 4);
  }
  SECTION("bad split rule is a usage error") {
    CHECK(run_cli("train --data " + train_csv +
                  " --response y --split-rule entropy --out cli_model.drf") == 1);
  }
}

TEST_CASE("factor predictors round-trip through train and estimate", "[cli]") {
  // training CSV with a categorical column; the query CSV carries the raw
  // factor values and is encoded against the model's stored metadata
  {
    drf::Rng rng(55);
    std::ofstream out("cli_factor_train.csv");
    out << "setting,x,y\n";
    const char* levels[] = {"rural", "suburban", "urban"};
    for (int i = 0; i < 150; ++i) {
      const int lvl = rng.uniform_int(3);
      out << levels[lvl] << "," << rng.uniform() << ","
          << (lvl == 2 ? 1.5 : 0.0) + rng.normal() << "\n";
    }
  }
  {
    std::ofstream out("cli_factor_query.csv");
    out << "setting,x\nurban,0.5\nrural,0.5\nswamp,0.5\n";  // unseen level too
  }
  REQUIRE(run_cli("train --data cli_factor_train.csv --response y "
                  "--out cli_model.drf --num-trees 40 --seed 2") == 0);
  auto summary = nlohmann::json::parse(slurp("cli_stdout.txt"));
  CHECK(summary["p"] == 4);  // 3 one-hot columns + 1 numeric
  REQUIRE(run_cli("estimate --model cli_model.drf --data cli_factor_query.csv "
                  "--target mean --out cli_out.csv") == 0);
  std::ifstream in("cli_out.csv");
  std::string line;
  std::getline(in, line);
  std::vector<double> means;
  while (std::getline(in, line))
    means.push_back(std::stod(line.substr(line.find(',') + 1)));
  REQUIRE(means.size() == 3);
  CHECK(means[0] > 1.0);   // urban
  CHECK(means[1] < 0.5);   // rural
  CHECK(std::isfinite(means[2]));  // unseen level: all-zero group, still routable
  for (const char* f : {"cli_factor_train.csv", "cli_factor_query.csv", "cli_model.drf",
                        "cli_out.csv", "cli_stdout.txt", "cli_stderr.txt"})
    std::remove(f);
}

TEST_CASE("benchmark subcommand writes reports", "[cli]") {
  const int code = run_cli(
      "benchmark --scenario scenario1 --n 200 --p 3 --methods drf-mmd,knn --repeats 2 "
      "--num-trees 25 --threads 2 --out cli_bench.json --tidy-out cli_tidy.csv");
  REQUIRE(code == 0);
  auto report = nlohmann::json::parse(slurp("cli_bench.json"));
  CHECK(report["results"].size() == 2);
  CHECK(report["config"]["repeats"] == 2);
  std::ifstream tidy("cli_tidy.csv");
  std::string header;
  std::getline(tidy, header);
  CHECK(header == "x1,alpha,method,estimate,truth");
  CHECK(run_cli("benchmark --scenario marscolony --out cli_bench.json") == 2);
  for (const char* f : {"cli_bench.json", "cli_tidy.csv", "cli_stdout.txt", "cli_stderr.txt"})
    std::remove(f);
}

TEST_CASE_METHOD(CliFixture, "importance subcommand ranks the signal feature", "[cli]") {
  REQUIRE(run_cli("train --data " + train_csv +
                  " --response y --out cli_model.drf --num-trees 40 --seed 3") == 0);
  REQUIRE(run_cli("importance --model cli_model.drf --data " + train_csv +
                  " --out cli_out.csv --seed 5") == 0);
  std::ifstream in("cli_out.csv");
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "feature,importance");
  double x1_score = -1e300, best_other = -1e300;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const std::string name = line.substr(0, comma);
    const double score = std::stod(line.substr(comma + 1));
    if (name == "x1")
      x1_score = score;
    else
      best_other = std::max(best_other, score);
  }
  CHECK(x1_score > best_other);
}
