#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dbb/rng.hpp"
#include "dbb/solvers.hpp"
#include "support/fd.hpp"

using namespace dbb;

namespace {

// f(t,x,y,z) = c, independent of everything.
class ConstDriver final : public Driver {
 public:
  explicit ConstDriver(double c) : c_(c) {}
  void eval(double, const Tensor&, const Tensor& y, const Tensor&, Tensor& out) const override {
    out = Tensor::full({y.dim(0), 1}, c_);
  }
  void partials(double, const Tensor& states, const Tensor& y, const Tensor&, Tensor& dy,
                Tensor& dz) const override {
    dy = Tensor({y.dim(0), 1});
    dz = Tensor({y.dim(0), states.dim(1)});
  }

 private:
  double c_;
};

MlpNet const_net(std::size_t in, std::size_t out, const std::vector<double>& bias) {
  MlpNet net = init_net(in, out, {}, 0);
  net.weights[0].fill(0.0);
  for (std::size_t i = 0; i < out; ++i) net.biases[0][i] = bias[i];
  return net;
}

// sigma == 0 market: nu0 = theta = 0 kills every diffusion entry.
HestonParams frozen_market(double r) {
  HestonParams p;
  p.d = 1;
  p.r = r;
  p.nu0 = 0.0;
  p.theta = 0.0;
  p.xi = 0.0;
  return p;
}

}  // namespace

TEST_CASE("dbsde_loss: deterministic single-step construction is exact") {
  const HestonParams p = frozen_market(0.0);
  PathBatch paths;
  paths.batch = 3;
  paths.n_steps = 1;
  paths.dt = p.t_mat;
  paths.states = Tensor({3, 2, 2});
  paths.dw = Tensor({3, 1, 2});
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = 0; i < 2; ++i) {
      paths.states(b, i, 0) = p.s0;
      paths.states(b, i, 1) = 0.0;
    }

  std::vector<MlpNet> z_nets;
  z_nets.push_back(const_net(2, 2, {0.0, 0.0}));
  const DiscountDriver drv(0.0);
  const double g0 = p.s0 - p.strike();

  CHECK(dbsde_loss(g0, z_nets, paths, p, drv) == 0.0);
  CHECK(dbsde_loss(g0 + 1.0, z_nets, paths, p, drv) == 1.0);
}

TEST_CASE("dbsde_loss: two-step recursion matches a hand-unrolled evaluation") {
  HestonParams p;
  p.d = 1;
  const PathBatch paths = simulate_paths(p, 2, 1, 77);
  const DiscountDriver drv(p.r);

  std::vector<MlpNet> z_nets;
  z_nets.push_back(const_net(2, 2, {0.3, -0.2}));
  z_nets.push_back(const_net(2, 2, {-0.1, 0.4}));

  const double u0 = 20.0;
  const double got = dbsde_loss(u0, z_nets, paths, p, drv);

  // hand evaluation with the same update ordering
  double y = u0;
  {
    double dot = 0.0;
    dot += 0.3 * paths.dw(0, 0, 0);
    dot += -0.2 * paths.dw(0, 0, 1);
    y += p.r * y * paths.dt + dot;
  }
  {
    double dot = 0.0;
    dot += -0.1 * paths.dw(0, 1, 0);
    dot += 0.4 * paths.dw(0, 1, 1);
    y += p.r * y * paths.dt + dot;
  }
  const double g = std::max(paths.states(0, 2, 0) - p.strike(), 0.0);
  CHECK(got == doctest::Approx((y - g) * (y - g)).epsilon(1e-14));
}

TEST_CASE("dbsde_loss flags non-finite outcomes as divergence") {
  HestonParams p;
  p.d = 1;
  const PathBatch paths = simulate_paths(p, 2, 4, 3);
  std::vector<MlpNet> z_nets = {const_net(2, 2, {0.0, 0.0}), const_net(2, 2, {0.0, 0.0})};
  const DiscountDriver drv(p.r);
  CHECK_THROWS_AS(dbsde_loss(std::numeric_limits<double>::infinity(), z_nets, paths, p, drv),
                  DivergenceError);
}

TEST_CASE("dbdp_step_loss: exact transport on a frozen state") {
  const HestonParams p = frozen_market(0.0);
  const PathBatch paths = simulate_paths(p, 3, 4, 9);  // constant states, random dw
  const DiscountDriver drv(0.0);
  const MlpNet u = init_net(2, 1, {6}, 13, Activation::Tanh);

  SUBCASE("DBDP1 with a zero V net") {
    const MlpNet v = const_net(2, 2, {0.0, 0.0});
    const double loss = dbdp_step_loss(u, &v, ValueFn::from_net(u), paths, p, drv, 1);
    CHECK(loss == 0.0);
  }
  SUBCASE("DBDP2: sigma == 0 kills the autodiff V term") {
    const double loss = dbdp_step_loss(u, nullptr, ValueFn::from_net(u), paths, p, drv, 1);
    CHECK(loss == 0.0);
  }
}

TEST_CASE("dbdp_step_loss: zero networks at the terminal step leave E[g^2]") {
  HestonParams p;
  p.d = 2;
  const PathBatch paths = simulate_paths(p, 3, 16, 21);
  const DiscountDriver drv(0.0);
  const MlpNet u = const_net(4, 1, {0.0});
  const MlpNet v = const_net(4, 4, {0.0, 0.0, 0.0, 0.0});

  const double loss = dbdp_step_loss(u, &v, ValueFn::terminal(p), paths, p, drv, 2);
  const Tensor g = payoff(p, paths.states_at(3));
  double expect = 0.0;
  for (std::size_t b = 0; b < 16; ++b) expect += g[b] * g[b];
  expect /= 16.0;
  CHECK(loss == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("dbdp_step_loss: one-path hand-evaluated residual") {
  HestonParams p;
  p.d = 1;
  const PathBatch paths = simulate_paths(p, 2, 1, 5);
  const DiscountDriver drv(p.r);
  const MlpNet u_i = const_net(2, 1, {5.0});
  const MlpNet v_i = const_net(2, 2, {0.7, -0.3});
  const MlpNet u_next = const_net(2, 1, {9.0});

  const double loss = dbdp_step_loss(u_i, &v_i, ValueFn::from_net(u_next), paths, p, drv, 0);
  const double vdw = 0.7 * paths.dw(0, 0, 0) + (-0.3) * paths.dw(0, 0, 1);
  const double resid = 9.0 - 5.0 - (p.r * 5.0) * paths.dt - vdw;
  CHECK(loss == doctest::Approx(resid * resid).epsilon(1e-14));
}

TEST_CASE("ds_step_loss: with f == 0 it is plain regression onto U_i") {
  HestonParams p;
  p.d = 1;
  const PathBatch paths = simulate_paths(p, 2, 8, 31);
  const DiscountDriver drv(0.0);
  const MlpNet u_i = init_net(2, 1, {5}, 3, Activation::Tanh);
  const MlpNet u_next = init_net(2, 1, {5}, 4, Activation::Tanh);

  const double loss = ds_step_loss(u_i, ValueFn::from_net(u_next), paths, p, drv, 0);
  const Tensor c = mlp_forward(u_next, paths.states_at(1));
  const Tensor y = mlp_forward(u_i, paths.states_at(0));
  double expect = 0.0;
  for (std::size_t b = 0; b < 8; ++b) expect += (c[b] - y[b]) * (c[b] - y[b]);
  expect /= 8.0;
  CHECK(loss == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("ds_step_loss: discount driver term uses the frozen value") {
  HestonParams p;
  p.d = 1;
  const PathBatch paths = simulate_paths(p, 3, 1, 8);
  const DiscountDriver drv(p.r);

  SUBCASE("hand-check on one path with a constant frozen net") {
    const MlpNet u_i = const_net(2, 1, {5.0});
    const MlpNet u_next = const_net(2, 1, {9.0});
    const double loss = ds_step_loss(u_i, ValueFn::from_net(u_next), paths, p, drv, 1);
    const double resid = 9.0 - 5.0 - (p.r * 9.0) * paths.dt;  // grad of a constant net is 0
    CHECK(loss == doctest::Approx(resid * resid).epsilon(1e-14));
  }
  SUBCASE("identical constants leave only the discount term") {
    const MlpNet u_c = const_net(2, 1, {7.5});
    const double loss = ds_step_loss(u_c, ValueFn::from_net(u_c), paths, p, drv, 1);
    const double expect = (p.r * 7.5 * paths.dt) * (p.r * 7.5 * paths.dt);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("mdbdp_step_loss equals dbdp_step_loss at the last step, bit for bit") {
  HestonParams p;
  p.d = 2;
  const std::size_t N = 4;
  const PathBatch paths = simulate_paths(p, N, 8, 55);
  const DiscountDriver drv(p.r);

  const MlpNet u_i = init_net(4, 1, {8}, 61, Activation::Relu);
  const MlpNet v_i = init_net(4, 4, {8}, 62, Activation::Relu);
  std::vector<MlpNet> u_frozen(N), v_frozen(N);  // unused at j > N-1

  StepGrads g_md, g_db;
  g_md.u = zero_gradients(u_i);
  g_md.v = zero_gradients(v_i);
  g_db.u = zero_gradients(u_i);
  g_db.v = zero_gradients(v_i);

  const double md = mdbdp_step_loss(u_i, v_i, u_frozen, v_frozen, paths, p, drv, N - 1, &g_md);
  const double db = dbdp_step_loss(u_i, &v_i, ValueFn::terminal(p), paths, p, drv, N - 1, &g_db);
  CHECK(md == db);  // exact equality, not approximate
  const auto fmd = test::flatten_grads(g_md.u), fdb = test::flatten_grads(g_db.u);
  for (std::size_t i = 0; i < fmd.size(); ++i) CHECK(fmd[i] == fdb[i]);
  const auto vmd = test::flatten_grads(g_md.v), vdb = test::flatten_grads(g_db.v);
  for (std::size_t i = 0; i < vmd.size(); ++i) CHECK(vmd[i] == vdb[i]);
}

TEST_CASE("mdbdp_step_loss: zero V nets and f == 0 collapse to E|g - U_i|^2") {
  HestonParams p;
  p.d = 1;
  const std::size_t N = 3;
  const PathBatch paths = simulate_paths(p, N, 8, 17);
  const DiscountDriver drv(0.0);
  const MlpNet u_i = init_net(2, 1, {6}, 23, Activation::Tanh);
  const MlpNet v_zero = const_net(2, 2, {0.0, 0.0});
  std::vector<MlpNet> u_frozen(N, const_net(2, 1, {3.0}));
  std::vector<MlpNet> v_frozen(N, v_zero);

  const double loss = mdbdp_step_loss(u_i, v_zero, u_frozen, v_frozen, paths, p, drv, 0);
  const Tensor g = payoff(p, paths.states_at(N));
  const Tensor y = mlp_forward(u_i, paths.states_at(0));
  double expect = 0.0;
  for (std::size_t b = 0; b < 8; ++b) expect += (g[b] - y[b]) * (g[b] - y[b]);
  expect /= 8.0;
  CHECK(loss == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("mdbdp_step_loss: three-step hand-evaluated multistep residual") {
  HestonParams p;
  p.d = 1;
  const std::size_t N = 3;
  const PathBatch paths = simulate_paths(p, N, 1, 91);
  const DiscountDriver drv(p.r);

  const MlpNet u_i = const_net(2, 1, {4.0});
  const MlpNet v_i = const_net(2, 2, {0.2, -0.6});
  std::vector<MlpNet> u_frozen, v_frozen;
  for (std::size_t j = 0; j < N; ++j) {
    u_frozen.push_back(const_net(2, 1, {1.0 + static_cast<double>(j)}));
    v_frozen.push_back(const_net(2, 2, {0.1 * static_cast<double>(j), -0.05}));
  }

  const double loss = mdbdp_step_loss(u_i, v_i, u_frozen, v_frozen, paths, p, drv, 0);

  const double g = std::max(paths.states(0, N, 0) - p.strike(), 0.0);
  double target = g;
  for (std::size_t j = 1; j < N; ++j) {
    const double a_j = 1.0 + static_cast<double>(j);
    const double vdw =
        0.1 * static_cast<double>(j) * paths.dw(0, j, 0) + (-0.05) * paths.dw(0, j, 1);
    target -= p.r * a_j * paths.dt + vdw;
  }
  const double vdw0 = 0.2 * paths.dw(0, 0, 0) + (-0.6) * paths.dw(0, 0, 1);
  const double resid = target - 4.0 - (p.r * 4.0) * paths.dt - vdw0;
  CHECK(loss == doctest::Approx(resid * resid).epsilon(1e-13));
}

TEST_CASE("DBDP2 and DS coincide when f ignores (y,z) and dt-terms vanish") {
  HestonParams p;
  p.d = 1;
  const std::size_t N = 2;

  // hand-built batch: dt = 0, dW = 0, arbitrary states
  PathBatch paths;
  paths.batch = 4;
  paths.n_steps = N;
  paths.dt = 0.0;
  paths.states = Tensor({4, N + 1, 2});
  paths.dw = Tensor({4, N, 2});
  std::mt19937_64 eng(123);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t i = 0; i <= N; ++i) {
      paths.states(b, i, 0) = 60.0 + 80.0 * u01(eng);
      paths.states(b, i, 1) = 0.3 * u01(eng);
    }

  const ConstDriver drv(3.7);  // nonzero but independent of (y, z)
  const MlpNet u_i = init_net(2, 1, {6}, 41, Activation::Tanh);

  const double dbdp2 = dbdp_step_loss(u_i, nullptr, ValueFn::terminal(p), paths, p, drv, N - 1);
  const double ds = ds_step_loss(u_i, ValueFn::terminal(p), paths, p, drv, N - 1);
  CHECK(dbdp2 == ds);  // bitwise: identical residuals through the shared helper
}

TEST_CASE("step losses are nonnegative on random inputs") {
  HestonParams p;
  p.d = 2;
  const PathBatch paths = simulate_paths(p, 3, 8, 2);
  const DiscountDriver drv(p.r);
  const MlpNet u = init_net(4, 1, {8}, 1, Activation::Relu);
  const MlpNet v = init_net(4, 4, {8}, 2, Activation::Relu);
  std::vector<MlpNet> uf(3, u), vf(3, v);
  CHECK(dbdp_step_loss(u, &v, ValueFn::terminal(p), paths, p, drv, 2) >= 0.0);
  CHECK(dbdp_step_loss(u, nullptr, ValueFn::terminal(p), paths, p, drv, 2) >= 0.0);
  CHECK(ds_step_loss(u, ValueFn::terminal(p), paths, p, drv, 2) >= 0.0);
  CHECK(mdbdp_step_loss(u, v, uf, vf, paths, p, drv, 1) >= 0.0);
  std::vector<MlpNet> z = {init_net(4, 4, {8}, 3), init_net(4, 4, {8}, 4),
                           init_net(4, 4, {8}, 5)};
  CHECK(dbsde_loss(10.0, z, paths, p, drv) >= 0.0);
}

TEST_CASE("every step-loss gradient matches central finite differences") {
  // s0 = 1 keeps the finite-difference oracle well conditioned: at price
  // scale ~100 the h^2 truncation and cancellation noise of the quotient
  // dominate long before 1e-4, while the analytic gradients are unchanged.
  HestonParams p;
  p.d = 2;
  p.s0 = 1.0;
  const std::size_t n = 4;
  const PathBatch paths = simulate_paths(p, 3, 6, 1001);
  const DiscountDriver drv(p.r);
  const double tol = 1e-4;

  SUBCASE("dbsde: u0 and every Z net") {
    std::vector<MlpNet> z_nets = {init_net(n, n, {8, 8}, 11, Activation::Tanh),
                                  init_net(n, n, {8, 8}, 12, Activation::Tanh),
                                  init_net(n, n, {8, 8}, 13, Activation::Tanh)};
    StepNets holder;
    holder.z_nets = z_nets;
    DbsdeGrads grads = zero_dbsde_grads(holder);
    const double u0 = 0.15;
    dbsde_loss(u0, z_nets, paths, p, drv, &grads);

    const double h = 1e-5;
    const double up = dbsde_loss(u0 + h, z_nets, paths, p, drv);
    const double dn = dbsde_loss(u0 - h, z_nets, paths, p, drv);
    CHECK(test::max_rel_err({grads.u0[0]}, {(up - dn) / (2.0 * h)}) < tol);

    for (std::size_t k = 0; k < z_nets.size(); ++k) {
      const auto loss = [&]() { return dbsde_loss(u0, z_nets, paths, p, drv); };
      const std::vector<double> fd = test::fd_param_grad(z_nets[k], loss);
      CHECK(test::max_rel_err(test::flatten_grads(grads.z[k]), fd) < tol);
    }
  }

  SUBCASE("dbdp1: U and V nets") {
    MlpNet u = init_net(n, 1, {8, 8}, 21, Activation::Tanh);
    MlpNet v = init_net(n, n, {8, 8}, 22, Activation::Tanh);
    const MlpNet u_next = init_net(n, 1, {8, 8}, 23, Activation::Tanh);
    StepGrads grads;
    grads.u = zero_gradients(u);
    grads.v = zero_gradients(v);
    dbdp_step_loss(u, &v, ValueFn::from_net(u_next), paths, p, drv, 1, &grads);
    const auto loss = [&]() {
      return dbdp_step_loss(u, &v, ValueFn::from_net(u_next), paths, p, drv, 1);
    };
    CHECK(test::max_rel_err(test::flatten_grads(grads.u), test::fd_param_grad(u, loss)) < tol);
    CHECK(test::max_rel_err(test::flatten_grads(grads.v), test::fd_param_grad(v, loss)) < tol);
  }

  SUBCASE("dbdp2: mixed second derivatives through the autodiff V") {
    for (const Activation act : {Activation::Tanh, Activation::Relu}) {
      CAPTURE(to_string(act));
      MlpNet u = init_net(n, 1, {8, 8}, 31, act);
      StepGrads grads;
      grads.u = zero_gradients(u);
      dbdp_step_loss(u, nullptr, ValueFn::terminal(p), paths, p, drv, 2, &grads);
      const auto loss = [&]() {
        return dbdp_step_loss(u, nullptr, ValueFn::terminal(p), paths, p, drv, 2);
      };
      CHECK(test::max_rel_err(test::flatten_grads(grads.u), test::fd_param_grad(u, loss)) < tol);
    }
  }

  SUBCASE("ds") {
    MlpNet u = init_net(n, 1, {8, 8}, 41, Activation::Tanh);
    const MlpNet u_next = init_net(n, 1, {8, 8}, 42, Activation::Tanh);
    StepGrads grads;
    grads.u = zero_gradients(u);
    ds_step_loss(u, ValueFn::from_net(u_next), paths, p, drv, 1, &grads);
    const auto loss = [&]() {
      return ds_step_loss(u, ValueFn::from_net(u_next), paths, p, drv, 1);
    };
    CHECK(test::max_rel_err(test::flatten_grads(grads.u), test::fd_param_grad(u, loss)) < tol);
  }

  SUBCASE("mdbdp") {
    MlpNet u = init_net(n, 1, {8, 8}, 51, Activation::Tanh);
    MlpNet v = init_net(n, n, {8, 8}, 52, Activation::Tanh);
    std::vector<MlpNet> uf, vf;
    for (std::size_t j = 0; j < 3; ++j) {
      uf.push_back(init_net(n, 1, {8, 8}, 60 + j, Activation::Tanh));
      vf.push_back(init_net(n, n, {8, 8}, 70 + j, Activation::Tanh));
    }
    StepGrads grads;
    grads.u = zero_gradients(u);
    grads.v = zero_gradients(v);
    mdbdp_step_loss(u, v, uf, vf, paths, p, drv, 0, &grads);
    const auto loss = [&]() { return mdbdp_step_loss(u, v, uf, vf, paths, p, drv, 0); };
    CHECK(test::max_rel_err(test::flatten_grads(grads.u), test::fd_param_grad(u, loss)) < tol);
    CHECK(test::max_rel_err(test::flatten_grads(grads.v), test::fd_param_grad(v, loss)) < tol);
  }
}
