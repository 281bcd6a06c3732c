#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "drf/common.hpp"
#include "drf/dataset.hpp"
#include "drf/eval/metrics.hpp"
#include "drf/random.hpp"

namespace drf {

// Synthetic generators used throughout the experiment suite. Every draw is a
// pure function of (id, n, p, seed, params).
struct Scenario {
  std::string id;  // toy-grf | vignette | scenario1 | scenario2 | scenario3 | copula | causal18
  int n = 1000;
  int p = 10;
  std::uint64_t seed = 1;
  double toy_sigma = 0.2;  // toy-grf noise level
  int copula_dim = 5;      // response dimension of the copula generator
};

// Analytic conditional facts about a scenario; only the applicable fields
// are set.
struct GroundTruth {
  std::function<double(ConstRowRef, double, int)> quantile;       // (x, alpha, coord)
  std::function<double(ConstRowRef, int)> mean;                   // (x, coord)
  std::function<double(ConstRowRef, int, int)> correlation;       // (x, i, j)
  std::function<double(double)> do_curve;                         // E[Y | do(W = w)]
};

struct GeneratedData {
  Dataset data;
  GroundTruth truth;
};

namespace detail {

inline std::vector<ColumnInfo> numeric_predictors(int p) {
  std::vector<ColumnInfo> cols(p);
  for (int j = 0; j < p; ++j) cols[j] = {"x" + std::to_string(j + 1), false, "", ""};
  return cols;
}

}  // namespace detail

inline GeneratedData generate(const Scenario& s) {
  if (s.n < 2 || s.p < 1) throw DataError("generate: need n >= 2, p >= 1");
  Rng rng(hash_combine(s.seed, Crc64::of(s.id)));

  GeneratedData out;
  Dataset& ds = out.data;
  ds.predictors = detail::numeric_predictors(s.p);
  ds.x.resize(s.n, s.p);

  if (s.id == "scenario1" || s.id == "scenario2" || s.id == "scenario3") {
    ds.y.resize(s.n, 1);
    ds.responses = {"y"};
    for (int i = 0; i < s.n; ++i) {
      for (int j = 0; j < s.p; ++j) ds.x(i, j) = rng.uniform(-1.0, 1.0);
      const bool right = ds.x(i, 0) > 0.0;
      if (s.id == "scenario1") {
        ds.y(i, 0) = (right ? 0.8 : 0.0) + rng.normal();
      } else if (s.id == "scenario2") {
        ds.y(i, 0) = (right ? 2.0 : 1.0) * rng.normal();
      } else {
        ds.y(i, 0) = right ? rng.exponential(1.0) : 1.0 + rng.normal();
      }
    }
    if (s.id == "scenario1") {
      out.truth.quantile = [](ConstRowRef x, double a, int) {
        return (x[0] > 0.0 ? 0.8 : 0.0) + normal_quantile(a);
      };
      out.truth.mean = [](ConstRowRef x, int) { return x[0] > 0.0 ? 0.8 : 0.0; };
    } else if (s.id == "scenario2") {
      out.truth.quantile = [](ConstRowRef x, double a, int) {
        return (x[0] > 0.0 ? 2.0 : 1.0) * normal_quantile(a);
      };
      out.truth.mean = [](ConstRowRef, int) { return 0.0; };
    } else {
      out.truth.quantile = [](ConstRowRef x, double a, int) {
        return x[0] > 0.0 ? -std::log1p(-a) : 1.0 + normal_quantile(a);
      };
      out.truth.mean = [](ConstRowRef, int) { return 1.0; };
    }
    return out;
  }

  if (s.id == "toy-grf") {
    // (Y1, Y2) ~ N((x1, x1), sigma^2 I); only the first predictor matters.
    ds.y.resize(s.n, 2);
    ds.responses = {"y1", "y2"};
    const double sigma = s.toy_sigma;
    for (int i = 0; i < s.n; ++i) {
      for (int j = 0; j < s.p; ++j) ds.x(i, j) = rng.normal();
      ds.y(i, 0) = ds.x(i, 0) + sigma * rng.normal();
      ds.y(i, 1) = ds.x(i, 0) + sigma * rng.normal();
    }
    out.truth.mean = [](ConstRowRef x, int) { return x[0]; };
    out.truth.quantile = [sigma](ConstRowRef x, double a, int) {
      return x[0] + sigma * normal_quantile(a);
    };
    out.truth.correlation = [](ConstRowRef, int, int) { return 0.0; };
    return out;
  }

  if (s.id == "vignette") {
    // Y1 ~ U(x1, x1 + 1), Y2 ~ U(0, x2), independent given X.
    ds.y.resize(s.n, 2);
    ds.responses = {"y1", "y2"};
    for (int i = 0; i < s.n; ++i) {
      for (int j = 0; j < s.p; ++j) ds.x(i, j) = rng.uniform();
      ds.y(i, 0) = ds.x(i, 0) + rng.uniform();
      ds.y(i, 1) = ds.x(i, 1) * rng.uniform();
    }
    out.truth.quantile = [](ConstRowRef x, double a, int coord) {
      return coord == 0 ? x[0] + a : x[1] * a;
    };
    out.truth.mean = [](ConstRowRef x, int coord) {
      return coord == 0 ? x[0] + 0.5 : 0.5 * x[1];
    };
    return out;
  }

  if (s.id == "copula") {
    // Equicorrelated Gaussian copula with N(0,1) marginals and pairwise
    // correlation rho(x) = x1.
    const int d = s.copula_dim;
    if (d < 2) throw DataError("copula scenario: needs copula_dim >= 2");
    ds.y.resize(s.n, d);
    ds.responses.clear();
    for (int j = 0; j < d; ++j) ds.responses.push_back("y" + std::to_string(j + 1));
    for (int i = 0; i < s.n; ++i) {
      for (int j = 0; j < s.p; ++j) ds.x(i, j) = rng.uniform();
      const double rho = ds.x(i, 0);
      const double shared = std::sqrt(rho) * rng.normal();
      const double own_sd = std::sqrt(1.0 - rho);
      for (int j = 0; j < d; ++j) ds.y(i, j) = shared + own_sd * rng.normal();
    }
    out.truth.correlation = [](ConstRowRef x, int i, int j) {
      return i == j ? 1.0 : x[0];
    };
    out.truth.mean = [](ConstRowRef, int) { return 0.0; };
    out.truth.quantile = [](ConstRowRef, double a, int) { return normal_quantile(a); };
    return out;
  }

  if (s.id == "causal18") {
    // X ~ U(0,5)^p, W | X ~ N(x2, 1), Y | X, W ~ N(x2 + x1 sin(W), 1).
    // Response is the joint (W, Y); E[Y | do(W = w)] = E[X2] + E[X1] sin(w).
    ds.y.resize(s.n, 2);
    ds.responses = {"w", "y"};
    if (s.p < 2) throw DataError("causal18: needs p >= 2");
    for (int i = 0; i < s.n; ++i) {
      for (int j = 0; j < s.p; ++j) ds.x(i, j) = rng.uniform(0.0, 5.0);
      const double w = ds.x(i, 1) + rng.normal();
      const double y = ds.x(i, 1) + ds.x(i, 0) * std::sin(w) + rng.normal();
      ds.y(i, 0) = w;
      ds.y(i, 1) = y;
    }
    out.truth.do_curve = [](double w) { return 2.5 + 2.5 * std::sin(w); };
    return out;
  }

  throw DataError("generate: unknown scenario id '" + s.id + "'");
}

}  // namespace drf
