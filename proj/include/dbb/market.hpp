#pragma once

#include <cstdint>
#include <vector>

#include "dbb/tensor.hpp"

namespace dbb {

// Multi-asset Heston market under the risk-neutral measure. Assets are
// mutually independent copies of the one-asset model; rho correlates each
// asset's price and variance Brownians. State layout is
// [s_1..s_d, nu_1..nu_d], so the Markov state has dimension 2d.
struct HestonParams {
  std::size_t d = 20;       // number of underlying assets
  double s0 = 100.0;        // initial price per asset
  double r = 0.05;          // risk-free rate (1/year)
  double t_mat = 1.0;       // time to expiration (years)
  double nu0 = 0.1;         // initial variance
  double theta = 0.1;       // long-term variance
  double rho = 0.0;         // price/variance Brownian correlation
  double kappa = 2.0;       // variance mean-reversion rate (1/year)
  double xi = 0.1;          // vol of vol
  double moneyness = 1.2;   // M; strike is s0 / M

  double strike() const { return s0 / moneyness; }
  std::size_t state_dim() const { return 2 * d; }

  // Throws std::invalid_argument on hard invariant violations. A violated
  // Feller condition is a warning, not a rejection; query feller_check.
  void validate() const;
};

// True iff 2*kappa*theta > xi^2 (strictly), i.e. the variance process stays
// positive in the continuous model.
bool feller_check(const HestonParams& p);

std::vector<double> initial_state(const HestonParams& p);

// Risk-neutral drift mu(t, x): r*s_i for prices, kappa*(theta - nu_i) for
// variances.
std::vector<double> drift(const HestonParams& p, double t, const std::vector<double>& state);

// Diffusion sigma(t, x) as a dense 2d x 2d row-major matrix. Per asset i the
// nonzeros are
//   sigma[i, i]       = s_i * sqrt(nu_i+)
//   sigma[d+i, i]     = xi * rho * sqrt(nu_i+)
//   sigma[d+i, d+i]   = xi * sqrt(1 - rho^2) * sqrt(nu_i+)
// with nu+ = max(nu, 0).
std::vector<double> diffusion(const HestonParams& p, double t, const std::vector<double>& state);

// Full-truncation Euler step x + mu(t, x+)*dt + sigma(t, x+)*dw: drift and
// diffusion are evaluated at the state with variances clamped at zero, while
// the stored iterate keeps the raw (possibly negative) variance.
// states/dw/out are [batch, 2d].
void euler_step(const HestonParams& p, double t, double dt, const Tensor& states,
                const Tensor& dw, Tensor& out);
Tensor euler_step(const HestonParams& p, double t, double dt, const Tensor& states,
                  const Tensor& dw);

// Single-sample form of the same recurrence; state/dw/out point at 2d
// doubles. Shared by the path simulator and the streaming Monte Carlo pricer
// so all consumers see bit-identical iterates.
void euler_step_single(const HestonParams& p, double dt, const double* state, const double* dw,
                       double* out);

// sigma(t, x)^T g per sample, exploiting the per-asset block sparsity.
// states, g, out: [batch, 2d].
void sigma_transpose_vec(const HestonParams& p, double t, const Tensor& states, const Tensor& g,
                         Tensor& out);
// sigma(t, x) c per sample (adjoint of the above).
void sigma_vec(const HestonParams& p, double t, const Tensor& states, const Tensor& c,
               Tensor& out);

// Simulated Euler trajectories plus their Brownian increments; the common
// input to the solvers and the Monte Carlo pricer.
struct PathBatch {
  std::size_t batch = 0;
  std::size_t n_steps = 0;
  double dt = 0.0;
  Tensor states;  // [batch, n_steps + 1, 2d]
  Tensor dw;      // [batch, n_steps, 2d], increments N(0, dt) per coordinate

  Tensor states_at(std::size_t step) const;  // [batch, 2d]
  Tensor dw_at(std::size_t step) const;      // [batch, 2d]
};

// Deterministic given seed; each path's stream is derived from
// (seed, path index) so batches may be sharded across threads.
PathBatch simulate_paths(const HestonParams& p, std::size_t n_steps, std::size_t batch,
                         std::uint64_t seed);

// Best-of call payoff max(max_i s_i - K, 0); variance coordinates ignored.
// terminal: [batch, 2d] -> [batch, 1].
Tensor payoff(const HestonParams& p, const Tensor& terminal);
double payoff_scalar(const HestonParams& p, const double* state);

// a.e. gradient of the payoff wrt the state: 1 on the argmax price
// coordinate when in the money, else 0. [batch, 2d].
Tensor payoff_gradient(const HestonParams& p, const Tensor& terminal);

// Nonlinearity f(t, x, y, z) of the semilinear pricing PDE, with analytic
// partials in y and z so the solvers can backpropagate through it.
class Driver {
 public:
  virtual ~Driver() = default;
  // states [batch, 2d], y [batch, 1], z [batch, 2d] -> out [batch, 1]
  virtual void eval(double t, const Tensor& states, const Tensor& y, const Tensor& z,
                    Tensor& out) const = 0;
  // dy [batch, 1], dz [batch, 2d]
  virtual void partials(double t, const Tensor& states, const Tensor& y, const Tensor& z,
                        Tensor& dy, Tensor& dz) const = 0;
};

Tensor driver_eval(const Driver& drv, double t, const Tensor& states, const Tensor& y,
                   const Tensor& z);

// f = r*y: pure discounting, the Black-Scholes-type driver.
class DiscountDriver final : public Driver {
 public:
  explicit DiscountDriver(double rate) : rate_(rate) {}
  void eval(double t, const Tensor& states, const Tensor& y, const Tensor& z,
            Tensor& out) const override;
  void partials(double t, const Tensor& states, const Tensor& y, const Tensor& z, Tensor& dy,
                Tensor& dz) const override;
  double rate() const { return rate_; }

 private:
  double rate_;
};

}  // namespace dbb
