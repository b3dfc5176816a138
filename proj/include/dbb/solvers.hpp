#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbb/market.hpp"
#include "dbb/net.hpp"

namespace dbb {

enum class Method { DBSDE, DBDP1, DBDP2, DS, MDBDP };

Method method_from_string(const std::string& name);
std::string to_string(Method m);
bool is_backward(Method m);
const std::vector<Method>& all_methods();

struct SolverConfig {
  Method method = Method::DBSDE;
  std::size_t n_steps = 40;
  std::size_t batch = 64;
  std::size_t val_size = 2048;
  double lr = 0.01;
  std::size_t iters_forward = 8000;  // DBSDE budget
  std::size_t iters_first = 16000;   // backward schemes: step N-1
  std::size_t iters_rest = 3000;     // backward schemes: remaining steps
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {128, 128};
  Activation activation = Activation::Relu;
  bool lr_decay = false;      // DBSDE only: x0.1 at 50% and 75% of the budget
  std::size_t val_every = 100;

  void validate() const;
};

struct LossPoint {
  std::size_t iteration = 0;
  double loss = 0.0;
};

struct SolverRun {
  SolverConfig config;
  std::uint64_t seed = 0;
  double price = std::numeric_limits<double>::quiet_NaN();
  std::vector<LossPoint> loss_curve;
  double wall_time = 0.0;
  bool diverged = false;
  std::string note;  // diagnostic (failing step / iteration) when diverged
};

// Trainable functions per time step. The terminal condition is always the
// payoff itself, never a network.
struct StepNets {
  Method method = Method::DBSDE;
  Tensor u0;                    // DBSDE: trainable scalar, shape [1]
  std::vector<MlpNet> z_nets;   // DBSDE: 2d -> 2d per step
  std::vector<MlpNet> u_nets;   // backward schemes: 2d -> 1 per step
  std::vector<MlpNet> v_nets;   // DBDP1/MDBDP: 2d -> 2d per step
};

// Thrown when a loss evaluates non-finite; carries the first offending path.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t path)
      : std::runtime_error(what), path_index(path) {}
  std::size_t path_index;
};

// Frozen continuation value U_{i+1}: a trained net, or the payoff at
// maturity.
class ValueFn {
 public:
  static ValueFn from_net(const MlpNet& net) { return ValueFn(&net, nullptr); }
  static ValueFn terminal(const HestonParams& p) { return ValueFn(nullptr, &p); }

  Tensor value(const Tensor& x) const;
  // Input gradient [batch, 2d]; a.e. payoff gradient at maturity.
  Tensor input_grad(const Tensor& x) const;

 private:
  ValueFn(const MlpNet* net, const HestonParams* p) : net_(net), payoff_(p) {}
  const MlpNet* net_;
  const HestonParams* payoff_;
};

// Canonical residual target - u - f*dt - v.dw used by every backward-scheme
// loss so structurally equal cases match bit for bit.
inline double bsde_residual(double target, double u, double f, double dt, double v_dot_dw) {
  return target - u - f * dt - v_dot_dw;
}

struct DbsdeGrads {
  Tensor u0;                 // shape [1]
  std::vector<Gradients> z;  // one per step net
};
DbsdeGrads zero_dbsde_grads(const StepNets& nets);

struct StepGrads {
  Gradients u;
  Gradients v;
  bool has_v = false;
};

// Forward scheme objective E|Y_N - g(X_N)|^2 with
//   Y_{i+1} = Y_i + f(t_i, X_i, Y_i, Z_i(X_i)) dt + Z_i(X_i) . dW_i,
// differentiable in u0 and every Z_i parameter.
double dbsde_loss(double u0, const std::vector<MlpNet>& z_nets, const PathBatch& paths,
                  const HestonParams& p, const Driver& drv, DbsdeGrads* grads = nullptr);

// Backward induction objective
//   E|U_{i+1}(X_{i+1}) - U_i(X_i) - f(t_i, X_i, U_i, V_i) dt - V_i . dW_i|^2.
// v_i == nullptr selects the DBDP2 variant, where V_i is not a free network
// but sigma^T grad_x U_i computed via automatic differentiation (so the loss
// carries exact mixed second derivatives of U_i).
double dbdp_step_loss(const MlpNet& u_i, const MlpNet* v_i, const ValueFn& u_next,
                      const PathBatch& paths, const HestonParams& p, const Driver& drv,
                      std::size_t i, StepGrads* grads = nullptr);

// Splitting objective
//   E|U_{i+1}(X_{i+1}) - U_i(X_i) - f(t_i, X_{i+1}, U_{i+1}(X_{i+1}), V_{i+1}) dt|^2,
//   V_{i+1} = sigma^T(t_i, X_i) grad_x U_{i+1}(X_{i+1}).
// All f inputs come from the frozen step, so only U_i receives gradient.
double ds_step_loss(const MlpNet& u_i, const ValueFn& u_next, const PathBatch& paths,
                    const HestonParams& p, const Driver& drv, std::size_t i,
                    StepGrads* grads = nullptr);

// Multistep objective: residual
//   g(X_N) - sum_{j>i} [f(t_j, X_j, U_j, V_j) dt + V_j . dW_j]
//          - f(t_i, X_i, U_i, V_i) dt - V_i . dW_i - U_i(X_i)
// with all later-step networks frozen. u_frozen/v_frozen are indexed by step;
// entries at j <= i are ignored.
double mdbdp_step_loss(const MlpNet& u_i, const MlpNet& v_i,
                       const std::vector<MlpNet>& u_frozen, const std::vector<MlpNet>& v_frozen,
                       const PathBatch& paths, const HestonParams& p, const Driver& drv,
                       std::size_t i, StepGrads* grads = nullptr);

// Adam training of (u0, Z_0..Z_{N-1}) on fresh simulated batches; price is
// the trained u0.
SolverRun dbsde_train(const SolverConfig& cfg, const HestonParams& p, const Driver& drv,
                      StepNets* out_nets = nullptr);

// Trains steps N-1 down to 0; step N-1 runs iters_first iterations, later
// steps iters_rest, each warm-started from the previous step's weights.
// Price is U_0 at the initial state.
SolverRun backward_train(const SolverConfig& cfg, const HestonParams& p, const Driver& drv,
                         StepNets* out_nets = nullptr);

SolverRun solve(const SolverConfig& cfg, const HestonParams& p, const Driver& drv,
                StepNets* out_nets = nullptr);

double price_at_initial(const StepNets& nets, const HestonParams& p);

}  // namespace dbb
