#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dbb/market.hpp"
#include "dbb/oracle.hpp"
#include "dbb/rng.hpp"

using namespace dbb;

namespace {

HestonParams standard() {
  return HestonParams{};  // the paper-default parameter set
}

}  // namespace

TEST_CASE("parameter validation") {
  HestonParams p = standard();
  CHECK_NOTHROW(p.validate());
  p.d = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = standard();
  p.rho = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = standard();
  p.moneyness = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  CHECK(standard().strike() == doctest::Approx(83.33333333333333).epsilon(1e-14));
}

TEST_CASE("feller condition") {
  HestonParams p = standard();  // kappa=2, theta=0.1, xi=0.1
  CHECK(feller_check(p));       // 0.4 > 0.01
  p.kappa = 0.1;
  p.xi = 1.0;
  CHECK_FALSE(feller_check(p));  // 0.02 < 1
  p = standard();
  p.kappa = 0.5;
  p.theta = 0.01;
  p.xi = 0.1;  // 2*0.5*0.01 == 0.01 == xi^2
  CHECK_FALSE(feller_check(p));  // boundary is out: strict inequality
}

TEST_CASE("drift: stationary, standard, mean-reverting cases") {
  HestonParams p = standard();
  p.d = 1;

  SUBCASE("r=0 and nu=theta gives zero drift") {
    p.r = 0.0;
    const auto mu = drift(p, 0.0, {100.0, p.theta});
    CHECK(mu[0] == 0.0);
    CHECK(mu[1] == 0.0);
  }
  SUBCASE("standard parameters at s=100, nu=0.1") {
    const auto mu = drift(p, 0.0, {100.0, 0.1});
    CHECK(mu[0] == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(mu[1] == 0.0);  // nu0 = theta forces zero variance drift
  }
  SUBCASE("linear mean reversion") {
    p.kappa = 2.0;
    p.theta = 0.1;
    const auto mu = drift(p, 0.0, {100.0, 0.2});
    CHECK(mu[1] == doctest::Approx(-0.2).epsilon(1e-15));
  }
}

TEST_CASE("diffusion blocks") {
  HestonParams p = standard();
  p.d = 1;

  SUBCASE("zero variance degenerates the block") {
    const auto sig = diffusion(p, 0.0, {100.0, 0.0});
    for (double v : sig) CHECK(v == 0.0);
  }
  SUBCASE("standard rho=0, xi=0.1 values") {
    const auto sig = diffusion(p, 0.0, {100.0, 0.1});
    const double sqrt_nu = std::sqrt(0.1);
    CHECK(sig[0] == doctest::Approx(100.0 * sqrt_nu).epsilon(1e-14));  // 31.6228
    CHECK(sig[1] == 0.0);
    CHECK(sig[2] == 0.0);  // rho = 0
    CHECK(sig[3] == doctest::Approx(0.1 * sqrt_nu).epsilon(1e-14));  // 0.0316228
  }
  SUBCASE("rho=1 collapses both Brownians onto one") {
    p.rho = 1.0;
    const auto sig = diffusion(p, 0.0, {100.0, 0.1});
    CHECK(sig[2] == doctest::Approx(p.xi * std::sqrt(0.1)).epsilon(1e-14));
    CHECK(sig[3] == 0.0);
  }
}

TEST_CASE("sigma_vec helpers agree with the dense diffusion matrix") {
  HestonParams p = standard();
  p.d = 3;
  p.rho = -0.4;
  const std::size_t n = p.state_dim();
  std::mt19937_64 eng(5);
  Tensor states({2, n}), g({2, n});
  for (std::size_t i = 0; i < states.size(); ++i) {
    states[i] = 50.0 + 100.0 * u01(eng);
    g[i] = 2.0 * u01(eng) - 1.0;
  }
  // give variances a realistic scale, including one negative entry
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = p.d; i < n; ++i) states(b, i) = -0.05 + 0.3 * u01(eng);

  Tensor st_g, s_g;
  sigma_transpose_vec(p, 0.0, states, g, st_g);
  sigma_vec(p, 0.0, states, g, s_g);
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> x(states.data() + b * n, states.data() + b * n + n);
    const auto sig = diffusion(p, 0.0, x);
    for (std::size_t cc = 0; cc < n; ++cc) {
      double tr = 0.0, fw = 0.0;
      for (std::size_t rr = 0; rr < n; ++rr) {
        tr += sig[rr * n + cc] * g(b, rr);
        fw += sig[cc * n + rr] * g(b, rr);
      }
      CHECK(st_g(b, cc) == doctest::Approx(tr).epsilon(1e-13));
      CHECK(s_g(b, cc) == doctest::Approx(fw).epsilon(1e-13));
    }
  }
}

TEST_CASE("euler_step special cases") {
  SUBCASE("zero drift and diffusion leave the state unchanged") {
    HestonParams p = standard();
    p.d = 1;
    p.r = 0.0;
    p.kappa = 1e-12;  // kappa must stay positive; drift term is ~0 with nu0=theta=0
    p.nu0 = 0.0;
    p.theta = 0.0;
    p.xi = 0.0;
    Tensor x({1, 2}, {100.0, 0.0});
    Tensor dw({1, 2}, {0.3, -0.2});
    const Tensor next = euler_step(p, 0.0, 0.025, x, dw);
    CHECK(next(0, 0) == 100.0);
    CHECK(next(0, 1) == 0.0);
  }
  SUBCASE("deterministic variance recurrence when xi = 0") {
    HestonParams p = standard();
    p.d = 1;
    p.xi = 0.0;
    p.nu0 = 0.2;
    p.theta = 0.1;
    p.kappa = 2.0;
    Tensor x({1, 2}, {100.0, 0.2});
    for (double w : {0.5, -0.7}) {
      Tensor dw({1, 2}, {0.0, w});
      const Tensor next = euler_step(p, 0.0, 0.1, x, dw);
      CHECK(next(0, 1) == doctest::Approx(0.18).epsilon(1e-15));
    }
  }
  SUBCASE("single asset one-step hand computation") {
    const HestonParams p = standard();  // rho=0, xi=0.1, r=0.05, kappa=2, theta=0.1
    HestonParams p1 = p;
    p1.d = 1;
    Tensor x({1, 2}, {100.0, 0.1});
    Tensor dw({1, 2}, {0.1, -0.05});
    const Tensor next = euler_step(p1, 0.0, 0.025, x, dw);
    const double vol = std::sqrt(0.1);
    const double s_expect = 100.0 + 0.05 * 100.0 * 0.025 + 100.0 * vol * 0.1;
    const double nu_expect = 0.1 + 2.0 * (0.1 - 0.1) * 0.025 + 0.1 * vol * (-0.05);
    CHECK(next(0, 0) == doctest::Approx(s_expect).epsilon(1e-15));
    CHECK(next(0, 1) == doctest::Approx(nu_expect).epsilon(1e-15));
  }
  SUBCASE("non-finite input rejected") {
    HestonParams p = standard();
    p.d = 1;
    Tensor x({1, 2}, {100.0, 0.1});
    Tensor dw({1, 2}, {std::nan(""), 0.0});
    CHECK_THROWS_AS(euler_step(p, 0.0, 0.025, x, dw), std::invalid_argument);
  }
}

TEST_CASE("negative variance is clamped inside the step but stored raw") {
  HestonParams p = standard();
  p.d = 1;
  p.xi = 1.5;  // strongly violates Feller; negative iterates happen
  CHECK_FALSE(feller_check(p));
  Tensor x({1, 2}, {100.0, -0.05});
  Tensor dw({1, 2}, {0.2, 0.1});
  const Tensor next = euler_step(p, 0.0, 0.1, x, dw);
  // sqrt(nu+) = 0: no diffusion on either coordinate, drift pulls toward theta
  CHECK(next(0, 0) == doctest::Approx(100.0 * (1.0 + 0.05 * 0.1)).epsilon(1e-15));
  CHECK(next(0, 1) == doctest::Approx(-0.05 + 2.0 * 0.1 * 0.1).epsilon(1e-15));
}

TEST_CASE("simulate_paths is deterministic given the seed") {
  HestonParams p = standard();
  p.d = 2;
  const PathBatch a = simulate_paths(p, 5, 7, 1234);
  const PathBatch b = simulate_paths(p, 5, 7, 1234);
  const PathBatch c = simulate_paths(p, 5, 7, 1235);
  REQUIRE(a.states.size() == b.states.size());
  bool equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    equal &= a.states[i] == b.states[i];
    any_diff |= a.states[i] != c.states[i];
  }
  CHECK(equal);
  CHECK(any_diff);
}

TEST_CASE("Euler recurrence exactness: states recompute from dw bit for bit") {
  HestonParams p = standard();
  p.d = 3;
  const PathBatch pb = simulate_paths(p, 8, 11, 99);
  CHECK(pb.dt * static_cast<double>(pb.n_steps) == doctest::Approx(p.t_mat).epsilon(1e-15));

  // initial slice replicates (s0.., nu0..)
  const Tensor x0 = pb.states_at(0);
  for (std::size_t b = 0; b < pb.batch; ++b)
    for (std::size_t i = 0; i < p.d; ++i) {
      CHECK(x0(b, i) == p.s0);
      CHECK(x0(b, p.d + i) == p.nu0);
    }

  for (std::size_t i = 0; i < pb.n_steps; ++i) {
    const Tensor next = euler_step(p, static_cast<double>(i) * pb.dt, pb.dt, pb.states_at(i),
                                   pb.dw_at(i));
    const Tensor stored = pb.states_at(i + 1);
    for (std::size_t k = 0; k < next.size(); ++k) CHECK(next[k] == stored[k]);
  }
}

TEST_CASE("dw increments pass the CLT mean bound") {
  HestonParams p = standard();
  p.d = 1;
  const std::size_t batch = 1000, steps = 100;  // 1e5 draws per coordinate
  const PathBatch pb = simulate_paths(p, steps, batch, 2024);
  const double bound = 4.0 * std::sqrt(pb.dt / 1e5);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < steps; ++i) mean += pb.dw(b, i, c);
    mean /= 1e5;
    CHECK(std::abs(mean) < bound);
  }
}

TEST_CASE("xi = 0 with nu0 = theta keeps every variance constant") {
  HestonParams p = standard();
  p.d = 2;
  p.xi = 0.0;
  const PathBatch pb = simulate_paths(p, 6, 9, 7);
  for (std::size_t b = 0; b < pb.batch; ++b)
    for (std::size_t i = 0; i <= pb.n_steps; ++i)
      for (std::size_t k = 0; k < 2; ++k) CHECK(pb.states(b, i, 2 + k) == p.theta);
}

TEST_CASE("Black-Scholes limit: terminal log-price moments") {
  HestonParams p = standard();
  p.d = 1;
  p.xi = 0.0;  // constant volatility sqrt(theta)
  const std::size_t batch = 100000, steps = 32;
  const PathBatch pb = simulate_paths(p, steps, batch, 31415);

  std::vector<double> logs(batch);
  for (std::size_t b = 0; b < batch; ++b) logs[b] = std::log(pb.states(b, steps, 0));
  double mean = std::accumulate(logs.begin(), logs.end(), 0.0) / static_cast<double>(batch);
  double var = 0.0;
  for (double v : logs) var += (v - mean) * (v - mean);
  var /= static_cast<double>(batch - 1);

  const double mean_expect = std::log(p.s0) + (p.r - 0.5 * p.theta) * p.t_mat;
  const double var_expect = p.theta * p.t_mat;
  const double se_mean = std::sqrt(var_expect / static_cast<double>(batch));
  const double se_var = var_expect * std::sqrt(2.0 / static_cast<double>(batch));
  CHECK(std::abs(mean - mean_expect) < 4.0 * se_mean);
  CHECK(std::abs(var - var_expect) < 4.0 * se_var);
}

TEST_CASE("payoff examples") {
  HestonParams p = standard();
  p.d = 3;
  SUBCASE("all prices 100 with M = 1.2") {
    Tensor term({1, 6}, {100.0, 100.0, 100.0, 0.1, 0.1, 0.1});
    const Tensor v = payoff(p, term);
    CHECK(v[0] == doctest::Approx(100.0 - 100.0 / 1.2).epsilon(1e-14));  // 16.6667
  }
  SUBCASE("out of the money pays zero") {
    Tensor term({1, 6}, {10.0, 20.0, 30.0, 0.1, 0.1, 0.1});
    CHECK(payoff(p, term)[0] == 0.0);
  }
  SUBCASE("max selection") {
    Tensor term({1, 6}, {80.0, 120.0, 90.0, 0.1, 0.1, 0.1});
    CHECK(payoff(p, term)[0] == doctest::Approx(120.0 - 100.0 / 1.2).epsilon(1e-13));  // 36.6667
  }
}

TEST_CASE("payoff is monotone and permutation-invariant") {
  HestonParams p = standard();
  p.d = 4;
  std::mt19937_64 eng(17);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor term({1, 8});
    for (std::size_t i = 0; i < 4; ++i) term[i] = 40.0 + 120.0 * u01(eng);
    for (std::size_t i = 4; i < 8; ++i) term[i] = 0.3 * u01(eng);
    const double base = payoff(p, term)[0];

    Tensor bumped = term;
    const std::size_t which = eng() % 4;
    bumped[which] += 5.0;
    CHECK(payoff(p, bumped)[0] >= base);

    Tensor permuted = term;
    std::vector<std::size_t> perm = {0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), eng);
    for (std::size_t i = 0; i < 4; ++i) {
      permuted[i] = term[perm[i]];
      permuted[4 + i] = term[4 + perm[i]];
    }
    CHECK(payoff(p, permuted)[0] == base);
  }
}

TEST_CASE("payoff gradient marks the argmax price when in the money") {
  HestonParams p = standard();
  p.d = 3;
  Tensor term({2, 6}, {80.0, 120.0, 90.0, 0.1, 0.1, 0.1,   // ITM at asset 1
                       10.0, 20.0, 30.0, 0.1, 0.1, 0.1});  // OTM
  const Tensor g = payoff_gradient(p, term);
  CHECK(g(0, 1) == 1.0);
  for (std::size_t c = 0; c < 6; ++c)
    if (c != 1) CHECK(g(0, c) == 0.0);
  for (std::size_t c = 0; c < 6; ++c) CHECK(g(1, c) == 0.0);
}

TEST_CASE("discounted payoff expectation is seed-invariant within 3 sigma") {
  HestonParams p = standard();
  p.d = 1;
  const std::size_t n_paths = 4000, n_steps = 16;
  std::vector<McEstimate> ests;
  for (std::uint64_t s = 0; s < 20; ++s) ests.push_back(mc_price(p, n_paths, n_steps, 1000 + s));
  double grand = 0.0;
  for (const auto& e : ests) grand += e.price;
  grand /= static_cast<double>(ests.size());
  for (const auto& e : ests) CHECK(std::abs(e.price - grand) < 3.0 * e.std_error);
}

TEST_CASE("driver: default discounting and a custom extension") {
  const HestonParams p = standard();
  const DiscountDriver drv(0.05);
  Tensor states({2, p.state_dim()});
  Tensor y({2, 1}, {100.0, 0.0});
  Tensor z({2, p.state_dim()});
  const Tensor f = driver_eval(drv, 0.0, states, y, z);
  CHECK(f[0] == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(f[1] == 0.0);

  // plumbing check: a shifted driver plugs in through the same interface
  class ShiftedDriver final : public Driver {
   public:
    void eval(double, const Tensor&, const Tensor& y, const Tensor&, Tensor& out) const override {
      out = Tensor({y.dim(0), 1});
      for (std::size_t b = 0; b < y.dim(0); ++b) out[b] = 0.05 * y[b] + 2.0;
    }
    void partials(double, const Tensor& states, const Tensor& y, const Tensor&, Tensor& dy,
                  Tensor& dz) const override {
      dy = Tensor::full({y.dim(0), 1}, 0.05);
      dz = Tensor({y.dim(0), states.dim(1)});
    }
  };
  const ShiftedDriver custom;
  const Tensor fc = driver_eval(custom, 0.0, states, y, z);
  CHECK(fc[0] == doctest::Approx(7.0).epsilon(1e-15));
  CHECK(fc[1] == doctest::Approx(2.0).epsilon(1e-15));
}
