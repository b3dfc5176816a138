#include "dbb/oracle.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>
#include <vector>

#include "dbb/rng.hpp"

namespace dbb {

McEstimate mc_price(const HestonParams& p, std::size_t n_paths, std::size_t n_steps,
                    std::uint64_t seed, std::size_t n_threads) {
  p.validate();
  if (n_paths < 2) throw std::invalid_argument("mc_price: n_paths must be >= 2");
  if (n_steps < 1) throw std::invalid_argument("mc_price: n_steps must be >= 1");
  if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, n_paths);

  const std::size_t n = p.state_dim();
  const double dt = p.t_mat / static_cast<double>(n_steps);
  const double sqrt_dt = std::sqrt(dt);
  const std::vector<double> x0 = initial_state(p);

  // One discounted payoff per path, stored so the reduction order (and hence
  // the estimate) does not depend on the thread count.
  std::vector<double> discounted(n_paths);
  const double disc = std::exp(-p.r * p.t_mat);

  auto worker = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> x(n), x_next(n), dw(n);
    for (std::size_t path = lo; path < hi; ++path) {
      NormalStream normals(seed_mix(seed, path));
      std::memcpy(x.data(), x0.data(), n * sizeof(double));
      for (std::size_t i = 0; i < n_steps; ++i) {
        for (std::size_t c = 0; c < n; ++c) dw[c] = sqrt_dt * normals.next();
        euler_step_single(p, dt, x.data(), dw.data(), x_next.data());
        x.swap(x_next);
      }
      discounted[path] = disc * payoff_scalar(p, x.data());
    }
  };

  if (n_threads == 1) {
    worker(0, n_paths);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n_paths + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      const std::size_t lo = t * chunk;
      const std::size_t hi = std::min(n_paths, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  McEstimate est;
  est.n_paths = n_paths;
  est.n_steps = n_steps;

  // A degenerate (constant) sample has zero spread by definition; bypass the
  // two-pass moments, whose own rounding would report ~1e-15 instead.
  double lo = discounted[0], hi = discounted[0];
  for (double v : discounted) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) {
    est.price = lo;
    est.std_error = 0.0;
    return est;
  }

  double sum = 0.0;
  for (double v : discounted) sum += v;
  const double mean = sum / static_cast<double>(n_paths);
  double ss = 0.0;
  for (double v : discounted) {
    const double c = v - mean;
    ss += c * c;
  }
  const double sample_var = ss / static_cast<double>(n_paths - 1);
  est.price = mean;
  est.std_error = std::sqrt(sample_var / static_cast<double>(n_paths));
  return est;
}

double norm_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double bs_closed_form(double s0, double strike, double r, double sigma, double t_mat) {
  if (!(s0 > 0.0) || !(strike > 0.0) || !(sigma > 0.0) || !(t_mat > 0.0))
    throw std::invalid_argument("bs_closed_form: s0, strike, sigma, T must be positive");
  const double vol = sigma * std::sqrt(t_mat);
  const double d1 = (std::log(s0 / strike) + (r + 0.5 * sigma * sigma) * t_mat) / vol;
  const double d2 = d1 - vol;
  return s0 * norm_cdf(d1) - strike * std::exp(-r * t_mat) * norm_cdf(d2);
}

}  // namespace dbb
