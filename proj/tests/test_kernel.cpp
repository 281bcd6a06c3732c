#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "drf/kernel.hpp"
#include "drf/random.hpp"

namespace {

// All-pairs lower-median oracle, independent of the implementation.
double median_oracle(const Eigen::MatrixXd& y) {
  std::vector<double> d;
  for (int i = 0; i < y.rows(); ++i)
    for (int j = i + 1; j < y.rows(); ++j) d.push_back((y.row(i) - y.row(j)).norm());
  std::sort(d.begin(), d.end());
  return d[(d.size() - 1) / 2];
}

}  // namespace

TEST_CASE("median heuristic on hand-enumerated pairs", "[kernel]") {
  SECTION("responses 0, 1, 3 give distances {1, 3, 2} with median 2") {
    Eigen::MatrixXd y(3, 1);
    y << 0.0, 1.0, 3.0;
    CHECK(drf::median_heuristic(y) == 2.0);
  }
  SECTION("duplicate rows among 0, 0, 4 give distances {0, 4, 4} with median 4") {
    Eigen::MatrixXd y(3, 1);
    y << 0.0, 0.0, 4.0;
    CHECK(drf::median_heuristic(y) == 4.0);
  }
  SECTION("all rows identical is a zero-bandwidth error") {
    Eigen::MatrixXd y = Eigen::MatrixXd::Constant(5, 2, 3.3);
    CHECK_THROWS_AS(drf::median_heuristic(y), drf::DataError);
  }
}

TEST_CASE("median heuristic equals the all-pairs oracle below the cap", "[kernel]") {
  drf::Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd y(20 + rep * 7, 2);
    for (int i = 0; i < y.rows(); ++i)
      for (int j = 0; j < y.cols(); ++j) y(i, j) = rng.normal();
    CHECK(drf::median_heuristic(y) == median_oracle(y));
  }
}

TEST_CASE("median heuristic capping is seed-deterministic", "[kernel]") {
  drf::Rng rng(5);
  Eigen::MatrixXd y(300, 1);
  for (int i = 0; i < y.rows(); ++i) y(i, 0) = rng.normal();
  const double a = drf::median_heuristic(y, 100, 42);
  const double b = drf::median_heuristic(y, 100, 42);
  CHECK(a == b);
  // and close to the exact value on this well-behaved sample
  CHECK_THAT(a, Catch::Matchers::WithinRel(median_oracle(y), 0.15));
}

TEST_CASE("sample_features draws N(0, sigma^-2) coordinates", "[kernel]") {
  SECTION("empirical sd within 2% of 1/sigma") {
    const double sigma = 2.5;
    drf::Rng rng(99);
    auto f = drf::sample_features(1, 100000, sigma, rng);
    const double sd = std::sqrt(f.omegas.array().square().sum() / f.omegas.size());
    CHECK_THAT(sd, Catch::Matchers::WithinRel(1.0 / sigma, 0.02));
  }
  SECTION("fixed seed reproduces the set") {
    drf::Rng r1(7), r2(7);
    auto a = drf::sample_features(3, 10, 1.0, r1);
    auto b = drf::sample_features(3, 10, 1.0, r2);
    CHECK(a.omegas == b.omegas);
  }
  SECTION("B=1, d=3 shape") {
    drf::Rng rng(1);
    auto f = drf::sample_features(3, 1, 1.0, rng);
    CHECK(f.num_features() == 1);
    CHECK(f.dim() == 3);
  }
  SECTION("invalid arguments") {
    drf::Rng rng(1);
    CHECK_THROWS_AS(drf::sample_features(2, 0, 1.0, rng), drf::DataError);
    CHECK_THROWS_AS(drf::sample_features(2, 4, 0.0, rng), drf::DataError);
  }
}

TEST_CASE("embed computes cos/sin of omega dot y", "[kernel]") {
  SECTION("zero vector maps to (1, 0) in every feature") {
    drf::Rng rng(3);
    auto f = drf::sample_features(4, 16, 0.7, rng);
    auto e = drf::embed(Eigen::VectorXd::Zero(4), f);
    CHECK(e.cos_part == Eigen::VectorXd::Ones(16));
    CHECK(e.sin_part == Eigen::VectorXd::Zero(16));
  }
  SECTION("unit modulus for random inputs") {
    drf::Rng rng(4);
    auto f = drf::sample_features(3, 8, 1.3, rng);
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::VectorXd y(3);
      for (int j = 0; j < 3; ++j) y[j] = rng.normal();
      auto e = drf::embed(y, f);
      for (int b = 0; b < 8; ++b)
        CHECK_THAT(e.cos_part[b] * e.cos_part[b] + e.sin_part[b] * e.sin_part[b],
                   Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
  }
  SECTION("omega = pi, y = 1 gives cos -1, sin ~ 0") {
    drf::FourierFeatureSet f;
    f.bandwidth_sigma = 1.0;
    f.omegas.resize(1, 1);
    f.omegas(0, 0) = std::numbers::pi;
    Eigen::VectorXd y(1);
    y << 1.0;
    auto e = drf::embed(y, f);
    CHECK_THAT(e.cos_part[0], Catch::Matchers::WithinAbs(-1.0, 1e-12));
    CHECK_THAT(e.sin_part[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("deterministic and pure") {
    drf::Rng rng(12);
    auto f = drf::sample_features(2, 6, 0.5, rng);
    Eigen::VectorXd y(2);
    y << 0.3, -1.1;
    auto a = drf::embed(y, f);
    auto b = drf::embed(y, f);
    CHECK(a.cos_part == b.cos_part);
    CHECK(a.sin_part == b.sin_part);
  }
  SECTION("dimension mismatch") {
    drf::Rng rng(1);
    auto f = drf::sample_features(3, 2, 1.0, rng);
    CHECK_THROWS_AS(drf::embed(Eigen::VectorXd::Zero(2), f), drf::DataError);
  }
}

TEST_CASE("gaussian kernel conventions", "[kernel]") {
  Eigen::VectorXd u(2), v(2);
  u << 1.0, 2.0;
  SECTION("zero distance gives 1") { CHECK(drf::gaussian_kernel(u, u, 0.7) == 1.0); }
  SECTION("distance sigma*sqrt(2) gives exp(-1)") {
    const double sigma = 1.7;
    v = u;
    v[0] += sigma * std::numbers::sqrt2;
    CHECK_THAT(drf::gaussian_kernel(u, v, sigma),
               Catch::Matchers::WithinAbs(std::exp(-1.0), 1e-14));
  }
  SECTION("symmetry") {
    drf::Rng rng(8);
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::VectorXd a(3), b(3);
      for (int j = 0; j < 3; ++j) {
        a[j] = rng.normal();
        b[j] = rng.normal();
      }
      CHECK(drf::gaussian_kernel(a, b, 1.1) == drf::gaussian_kernel(b, a, 1.1));
    }
  }
}

TEST_CASE("Fourier feature average is an unbiased kernel estimate", "[kernel]") {
  // (1/B) sum_b cos(omega_b (u - v)) -> k(u, v) as B grows
  const double sigma = 1.4;
  Eigen::VectorXd u(3), v(3);
  u << 0.2, -0.5, 1.0;
  v << -0.3, 0.4, 0.6;
  const double truth = drf::gaussian_kernel(u, v, sigma);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    drf::Rng rng(seed);
    auto f = drf::sample_features(3, 10000, sigma, rng);
    const Eigen::VectorXd angles = f.omegas * (u - v);
    const double approx = angles.array().cos().mean();
    CHECK_THAT(approx, Catch::Matchers::WithinAbs(truth, 0.05));
  }
}
