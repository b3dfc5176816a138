#pragma once

#include <tuple>
#include <vector>

namespace dbb {

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

// Linear-interpolation quantiles between closest ranks (the common "type 7"
// definition) at p = 0.25, 0.5, 0.75. Requires >= 2 samples.
Quartiles quartiles(std::vector<double> samples);

// Signed percentage error of the median against a Monte Carlo reference:
// 100 * (median - mc) / mc. Requires mc != 0.
double median_pe(double median, double mc);

// Interquartile range q3 - q1. Rejects inverted quartiles.
double iqr(double q1, double q3);

struct SqrtFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Least-squares fit of metric against 1/sqrt(parameter). Requires >= 3
// points, positive parameters, and non-degenerate (non-constant) inputs.
SqrtFit sqrt_scaling_fit(const std::vector<double>& metric,
                         const std::vector<double>& parameter);

}  // namespace dbb
