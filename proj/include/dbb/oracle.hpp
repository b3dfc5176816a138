#pragma once

#include <cstdint>

#include "dbb/market.hpp"

namespace dbb {

struct McEstimate {
  double price = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
};

// Plain Monte Carlo reference price: exp(-r T) * mean(payoff(X_N)) over
// n_paths independent full-truncation Euler paths. Deterministic given seed
// and independent of n_threads (per-path streams, in-order reduction).
// n_threads == 0 picks the hardware count.
McEstimate mc_price(const HestonParams& p, std::size_t n_paths, std::size_t n_steps,
                    std::uint64_t seed, std::size_t n_threads = 0);

// European call under Black-Scholes; validation oracle for the degenerate
// xi = 0, d = 1 market with constant volatility sqrt(theta).
double bs_closed_form(double s0, double strike, double r, double sigma, double t_mat);

double norm_cdf(double x);

}  // namespace dbb
