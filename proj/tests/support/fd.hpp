#pragma once

// Central finite-difference oracles for gradient checks, independent of the
// backward-pass implementation they verify.

#include <cmath>
#include <functional>
#include <vector>

#include "dbb/net.hpp"

namespace dbb::test {

// d loss / d param for every scalar parameter of `net`, by central
// differences on a loss closure that re-evaluates the mutated net.
inline std::vector<double> fd_param_grad(MlpNet& net, const std::function<double()>& loss,
                                         double h = 1e-5) {
  std::vector<double> out;
  std::vector<Tensor*> params = param_tensors(net);
  for (Tensor* t : params) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double keep = (*t)[i];
      (*t)[i] = keep + h;
      const double up = loss();
      (*t)[i] = keep - h;
      const double down = loss();
      (*t)[i] = keep;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return out;
}

inline std::vector<double> flatten_grads(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    for (std::size_t i = 0; i < g.weights[l].size(); ++i) out.push_back(g.weights[l][i]);
    for (std::size_t i = 0; i < g.biases[l].size(); ++i) out.push_back(g.biases[l][i]);
  }
  return out;
}

// Worst relative mismatch. Near-zero entries are measured against a floor of
// 1e-6 times the largest gradient magnitude, since central differences carry
// absolute roundoff noise of order |loss| * eps / h regardless of how small
// the true entry is.
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 1e-6;
  for (double v : a) scale = std::max(scale, std::abs(v));
  for (double v : b) scale = std::max(scale, std::abs(v));
  const double floor = 1e-6 * scale;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(std::max(std::abs(a[i]), std::abs(b[i])), floor);
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace dbb::test
