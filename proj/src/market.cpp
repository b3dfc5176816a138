#include "dbb/market.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "dbb/rng.hpp"

namespace dbb {

void HestonParams::validate() const {
  if (d < 1) throw std::invalid_argument("market: d must be >= 1");
  if (!(s0 > 0.0)) throw std::invalid_argument("market: s0 must be positive");
  if (!(t_mat > 0.0)) throw std::invalid_argument("market: T must be positive");
  if (!(kappa > 0.0)) throw std::invalid_argument("market: kappa must be positive");
  if (nu0 < 0.0 || theta < 0.0 || xi < 0.0)
    throw std::invalid_argument("market: nu0, theta, xi must be nonnegative");
  if (std::abs(rho) > 1.0) throw std::invalid_argument("market: |rho| must be <= 1");
  if (!(moneyness > 0.0)) throw std::invalid_argument("market: moneyness must be positive");
}

bool feller_check(const HestonParams& p) {
  return 2.0 * p.kappa * p.theta > p.xi * p.xi;
}

std::vector<double> initial_state(const HestonParams& p) {
  std::vector<double> x(p.state_dim());
  for (std::size_t i = 0; i < p.d; ++i) {
    x[i] = p.s0;
    x[p.d + i] = p.nu0;
  }
  return x;
}

std::vector<double> drift(const HestonParams& p, double /*t*/, const std::vector<double>& state) {
  if (state.size() != p.state_dim()) throw std::invalid_argument("drift: bad state length");
  std::vector<double> mu(p.state_dim());
  for (std::size_t i = 0; i < p.d; ++i) {
    mu[i] = p.r * state[i];
    mu[p.d + i] = p.kappa * (p.theta - state[p.d + i]);
  }
  return mu;
}

std::vector<double> diffusion(const HestonParams& p, double /*t*/,
                              const std::vector<double>& state) {
  if (state.size() != p.state_dim()) throw std::invalid_argument("diffusion: bad state length");
  const std::size_t n = p.state_dim();
  std::vector<double> sig(n * n, 0.0);
  const double ortho = std::sqrt(1.0 - p.rho * p.rho);
  for (std::size_t i = 0; i < p.d; ++i) {
    const double vol = std::sqrt(std::max(state[p.d + i], 0.0));
    sig[i * n + i] = state[i] * vol;
    sig[(p.d + i) * n + i] = p.xi * p.rho * vol;
    sig[(p.d + i) * n + (p.d + i)] = p.xi * ortho * vol;
  }
  return sig;
}

void euler_step_single(const HestonParams& p, double dt, const double* x, const double* dw,
                       double* out) {
  const std::size_t d = p.d;
  const double ortho = std::sqrt(1.0 - p.rho * p.rho);
  for (std::size_t i = 0; i < d; ++i) {
    const double s = x[i];
    const double nu_plus = std::max(x[d + i], 0.0);
    const double vol = std::sqrt(nu_plus);
    out[i] = s + p.r * s * dt + s * vol * dw[i];
    out[d + i] = x[d + i] + p.kappa * (p.theta - nu_plus) * dt +
                 (p.xi * p.rho * vol * dw[i] + p.xi * ortho * vol * dw[d + i]);
  }
}

void euler_step(const HestonParams& p, double t, double dt, const Tensor& states,
                const Tensor& dw, Tensor& out) {
  const std::size_t n = p.state_dim();
  if (states.ndim() != 2 || states.dim(1) != n)
    throw std::invalid_argument("euler_step: states must be [batch, 2d]");
  dw.require_shape(states.shape(), "euler_step dw");
  if (!states.all_finite() || !dw.all_finite())
    throw std::invalid_argument("euler_step: non-finite input");
  (void)t;  // dynamics are time-homogeneous

  const std::size_t batch = states.dim(0);
  out = Tensor({batch, n});
  for (std::size_t b = 0; b < batch; ++b)
    euler_step_single(p, dt, states.data() + b * n, dw.data() + b * n, out.data() + b * n);
}

Tensor euler_step(const HestonParams& p, double t, double dt, const Tensor& states,
                  const Tensor& dw) {
  Tensor out;
  euler_step(p, t, dt, states, dw, out);
  return out;
}

void sigma_transpose_vec(const HestonParams& p, double /*t*/, const Tensor& states,
                         const Tensor& g, Tensor& out) {
  const std::size_t n = p.state_dim();
  const std::size_t batch = states.dim(0);
  g.require_shape({batch, n}, "sigma_transpose_vec g");
  out = Tensor({batch, n});
  const double ortho = std::sqrt(1.0 - p.rho * p.rho);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = states.data() + b * n;
    const double* gv = g.data() + b * n;
    double* ov = out.data() + b * n;
    for (std::size_t i = 0; i < p.d; ++i) {
      const double vol = std::sqrt(std::max(x[p.d + i], 0.0));
      ov[i] = x[i] * vol * gv[i] + p.xi * p.rho * vol * gv[p.d + i];
      ov[p.d + i] = p.xi * ortho * vol * gv[p.d + i];
    }
  }
}

void sigma_vec(const HestonParams& p, double /*t*/, const Tensor& states, const Tensor& c,
               Tensor& out) {
  const std::size_t n = p.state_dim();
  const std::size_t batch = states.dim(0);
  c.require_shape({batch, n}, "sigma_vec c");
  out = Tensor({batch, n});
  const double ortho = std::sqrt(1.0 - p.rho * p.rho);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = states.data() + b * n;
    const double* cv = c.data() + b * n;
    double* ov = out.data() + b * n;
    for (std::size_t i = 0; i < p.d; ++i) {
      const double vol = std::sqrt(std::max(x[p.d + i], 0.0));
      ov[i] = x[i] * vol * cv[i];
      ov[p.d + i] = p.xi * p.rho * vol * cv[i] + p.xi * ortho * vol * cv[p.d + i];
    }
  }
}

Tensor PathBatch::states_at(std::size_t step) const {
  const std::size_t n = states.dim(2);
  Tensor out({batch, n});
  for (std::size_t b = 0; b < batch; ++b)
    std::memcpy(out.data() + b * n, states.data() + (b * (n_steps + 1) + step) * n,
                n * sizeof(double));
  return out;
}

Tensor PathBatch::dw_at(std::size_t step) const {
  const std::size_t n = dw.dim(2);
  Tensor out({batch, n});
  for (std::size_t b = 0; b < batch; ++b)
    std::memcpy(out.data() + b * n, dw.data() + (b * n_steps + step) * n, n * sizeof(double));
  return out;
}

PathBatch simulate_paths(const HestonParams& p, std::size_t n_steps, std::size_t batch,
                         std::uint64_t seed) {
  p.validate();
  if (n_steps < 1 || batch < 1)
    throw std::invalid_argument("simulate_paths: n_steps and batch must be >= 1");

  const std::size_t n = p.state_dim();
  PathBatch pb;
  pb.batch = batch;
  pb.n_steps = n_steps;
  pb.dt = p.t_mat / static_cast<double>(n_steps);
  pb.states = Tensor({batch, n_steps + 1, n});
  pb.dw = Tensor({batch, n_steps, n});

  const std::vector<double> x0 = initial_state(p);
  const double sqrt_dt = std::sqrt(pb.dt);
  for (std::size_t b = 0; b < batch; ++b) {
    NormalStream normals(seed_mix(seed, b));
    double* path = pb.states.data() + b * (n_steps + 1) * n;
    double* noise = pb.dw.data() + b * n_steps * n;
    std::memcpy(path, x0.data(), n * sizeof(double));
    for (std::size_t i = 0; i < n_steps; ++i) {
      double* dwi = noise + i * n;
      for (std::size_t c = 0; c < n; ++c) dwi[c] = sqrt_dt * normals.next();
      euler_step_single(p, pb.dt, path + i * n, dwi, path + (i + 1) * n);
    }
  }
  return pb;
}

Tensor payoff(const HestonParams& p, const Tensor& terminal) {
  const std::size_t n = p.state_dim();
  if (terminal.ndim() != 2 || terminal.dim(1) != n)
    throw std::invalid_argument("payoff: terminal must be [batch, 2d]");
  const std::size_t batch = terminal.dim(0);
  Tensor out({batch, 1});
  for (std::size_t b = 0; b < batch; ++b) out[b] = payoff_scalar(p, terminal.data() + b * n);
  return out;
}

double payoff_scalar(const HestonParams& p, const double* state) {
  double best = state[0];
  for (std::size_t i = 1; i < p.d; ++i) best = std::max(best, state[i]);
  return std::max(best - p.strike(), 0.0);
}

Tensor payoff_gradient(const HestonParams& p, const Tensor& terminal) {
  const std::size_t n = p.state_dim();
  const std::size_t batch = terminal.dim(0);
  Tensor out({batch, n});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = terminal.data() + b * n;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < p.d; ++i)
      if (x[i] > x[arg]) arg = i;
    if (x[arg] - p.strike() > 0.0) out(b, arg) = 1.0;
  }
  return out;
}

Tensor driver_eval(const Driver& drv, double t, const Tensor& states, const Tensor& y,
                   const Tensor& z) {
  Tensor out;
  drv.eval(t, states, y, z, out);
  return out;
}

void DiscountDriver::eval(double /*t*/, const Tensor& states, const Tensor& y, const Tensor& z,
                          Tensor& out) const {
  const std::size_t batch = y.dim(0);
  y.require_shape({batch, 1}, "driver y");
  if (states.dim(0) != batch || z.dim(0) != batch)
    throw std::invalid_argument("driver: batch mismatch");
  out = Tensor({batch, 1});
  for (std::size_t b = 0; b < batch; ++b) out[b] = rate_ * y[b];
}

void DiscountDriver::partials(double /*t*/, const Tensor& states, const Tensor& y,
                              const Tensor& /*z*/, Tensor& dy, Tensor& dz) const {
  const std::size_t batch = y.dim(0);
  dy = Tensor::full({batch, 1}, rate_);
  dz = Tensor({batch, states.dim(1)});
}

}  // namespace dbb
