#pragma once

// Distributional random forests: multivariate conditional distribution
// estimation through an MMD splitting criterion with random Fourier
// features, plus the weight-based estimators built on top.

#include "drf/common.hpp"
#include "drf/dataset.hpp"
#include "drf/estimators.hpp"
#include "drf/eval/benchmark.hpp"
#include "drf/eval/metrics.hpp"
#include "drf/eval/scenarios.hpp"
#include "drf/forest.hpp"
#include "drf/kernel.hpp"
#include "drf/random.hpp"
#include "drf/split.hpp"
#include "drf/tree.hpp"
#include "drf/version.hpp"
