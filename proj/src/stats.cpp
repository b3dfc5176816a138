#include "dbb/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dbb {

namespace {

double quantile_sorted(const std::vector<double>& s, double prob) {
  const double pos = prob * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= s.size()) return s.back();
  return s[lo] + frac * (s[lo + 1] - s[lo]);
}

}  // namespace

Quartiles quartiles(std::vector<double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("quartiles: need at least 2 samples");
  std::sort(samples.begin(), samples.end());
  return {quantile_sorted(samples, 0.25), quantile_sorted(samples, 0.5),
          quantile_sorted(samples, 0.75)};
}

double median_pe(double median, double mc) {
  if (mc == 0.0) throw std::invalid_argument("median_pe: zero Monte Carlo reference");
  return 100.0 * (median - mc) / mc;
}

double iqr(double q1, double q3) {
  if (q3 < q1) throw std::invalid_argument("iqr: inverted quartiles");
  return q3 - q1;
}

SqrtFit sqrt_scaling_fit(const std::vector<double>& metric,
                         const std::vector<double>& parameter) {
  if (metric.size() != parameter.size())
    throw std::invalid_argument("sqrt_scaling_fit: length mismatch");
  const std::size_t n = metric.size();
  if (n < 3) throw std::invalid_argument("sqrt_scaling_fit: need at least 3 points");

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(parameter[i] > 0.0))
      throw std::invalid_argument("sqrt_scaling_fit: parameters must be positive");
    x[i] = 1.0 / std::sqrt(parameter[i]);
  }

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += metric[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (metric[i] - my);
    syy += (metric[i] - my) * (metric[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw std::invalid_argument("sqrt_scaling_fit: degenerate (constant) inputs");

  SqrtFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = metric[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += e * e;
  }
  fit.r_squared = 1.0 - ss_res / syy;
  return fit;
}

}  // namespace dbb
