// Fit a forest on the mean-shift scenario and read conditional quantiles
// off the weighting function at a few test points.

#include <iostream>

#include "drf/drf.hpp"

int main() {
  drf::Scenario scenario{.id = "scenario1", .n = 2000, .p = 10, .seed = 42};
  auto gen = drf::generate(scenario);

  drf::ForestConfig config;
  config.num_trees = 300;
  config.seed = 7;
  auto forest = drf::fit(gen.data, config, 2);

  std::cout << "bandwidth (median heuristic, scaled responses): "
            << forest.bandwidth_used << "\n\n";
  std::cout << "x1      alpha   estimate   truth\n";
  for (double x1 : {-0.5, 0.5}) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(10);
    x[0] = x1;
    auto cd = drf::ConditionalDistribution::from_forest(forest, x);
    for (double alpha : {0.1, 0.5, 0.9}) {
      std::cout << x1 << "\t" << alpha << "\t" << cd.quantile(alpha, 0) << "\t"
                << gen.truth.quantile(x, alpha, 0) << "\n";
    }
  }
  return 0;
}
