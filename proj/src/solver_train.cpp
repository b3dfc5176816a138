#include <chrono>
#include <cmath>

#include "dbb/rng.hpp"
#include "dbb/solvers.hpp"

namespace dbb {

namespace {

// Stream ids for deriving independent child seeds from the run seed.
constexpr std::uint64_t kValStream = 1;
constexpr std::uint64_t kPilotStream = 2;
constexpr std::uint64_t kInitStream = 0x100;
constexpr std::uint64_t kBatchStream = 0x10000;

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor initial_state_row(const HestonParams& p) {
  const std::vector<double> x0 = initial_state(p);
  return Tensor({1, x0.size()}, x0);
}

}  // namespace

double price_at_initial(const StepNets& nets, const HestonParams& p) {
  if (nets.method == Method::DBSDE) return nets.u0[0];
  if (nets.u_nets.empty()) throw std::invalid_argument("price_at_initial: no trained networks");
  return mlp_forward(nets.u_nets[0], initial_state_row(p))[0];
}

SolverRun dbsde_train(const SolverConfig& cfg, const HestonParams& p, const Driver& drv,
                      StepNets* out_nets) {
  cfg.validate();
  p.validate();
  if (cfg.method != Method::DBSDE)
    throw std::invalid_argument("dbsde_train: config method is not DBSDE");

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t N = cfg.n_steps;
  const std::size_t n = p.state_dim();

  SolverRun run;
  run.config = cfg;
  run.seed = cfg.seed;

  StepNets nets;
  nets.method = Method::DBSDE;
  for (std::size_t i = 0; i < N; ++i)
    nets.z_nets.push_back(
        init_net(n, n, cfg.hidden, seed_mix(cfg.seed, kInitStream + i), cfg.activation));

  // u0 starts at the discounted mean payoff of a pilot batch, which strips
  // the large constant offset from early training.
  const PathBatch pilot = simulate_paths(p, N, cfg.val_size, seed_mix(cfg.seed, kPilotStream));
  const Tensor pilot_pay = payoff(p, pilot.states_at(N));
  double pilot_mean = 0.0;
  for (std::size_t b = 0; b < pilot_pay.size(); ++b) pilot_mean += pilot_pay[b];
  pilot_mean /= static_cast<double>(pilot_pay.size());
  nets.u0 = Tensor::scalar(std::exp(-p.r * p.t_mat) * pilot_mean);

  const PathBatch val = simulate_paths(p, N, cfg.val_size, seed_mix(cfg.seed, kValStream));

  std::vector<Tensor*> params;
  params.push_back(&nets.u0);
  for (auto& znet : nets.z_nets)
    for (Tensor* t : param_tensors(znet)) params.push_back(t);
  AdamState adam = make_adam({params.begin(), params.end()}, cfg.lr);

  DbsdeGrads grads = zero_dbsde_grads(nets);
  auto grad_list = [&grads]() {
    std::vector<const Tensor*> gs;
    gs.push_back(&grads.u0);
    for (const auto& zg : grads.z)
      for (const Tensor* t : grad_tensors(zg)) gs.push_back(t);
    return gs;
  };

  try {
    for (std::size_t it = 0; it < cfg.iters_forward; ++it) {
      if (it % cfg.val_every == 0) {
        const double vloss = dbsde_loss(nets.u0[0], nets.z_nets, val, p, drv);
        run.loss_curve.push_back({it, vloss});
      }
      if (cfg.lr_decay) {
        const double frac = static_cast<double>(it) / static_cast<double>(cfg.iters_forward);
        adam.lr = cfg.lr * (frac >= 0.75 ? 0.01 : frac >= 0.5 ? 0.1 : 1.0);
      }
      const PathBatch batch =
          simulate_paths(p, N, cfg.batch, seed_mix(cfg.seed, kBatchStream, it));
      grads.u0.fill(0.0);
      for (auto& zg : grads.z) {
        for (auto& t : zg.weights) t.fill(0.0);
        for (auto& t : zg.biases) t.fill(0.0);
      }
      dbsde_loss(nets.u0[0], nets.z_nets, batch, p, drv, &grads);
      adam_step(adam, params, grad_list());
    }
    const double vloss = dbsde_loss(nets.u0[0], nets.z_nets, val, p, drv);
    if (!std::isfinite(vloss)) throw DivergenceError("validation loss non-finite", 0);
    run.loss_curve.push_back({cfg.iters_forward, vloss});
  } catch (const DivergenceError& e) {
    run.diverged = true;
    run.note = std::string("DBSDE diverged: ") + e.what();
    run.wall_time = elapsed_s(t0);
    if (out_nets) *out_nets = std::move(nets);
    return run;
  }

  run.price = price_at_initial(nets, p);
  run.wall_time = elapsed_s(t0);
  if (out_nets) *out_nets = std::move(nets);
  return run;
}

SolverRun backward_train(const SolverConfig& cfg, const HestonParams& p, const Driver& drv,
                         StepNets* out_nets) {
  cfg.validate();
  p.validate();
  if (!is_backward(cfg.method))
    throw std::invalid_argument("backward_train: config method is DBSDE");

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t N = cfg.n_steps;
  const std::size_t n = p.state_dim();
  const bool has_v = cfg.method == Method::DBDP1 || cfg.method == Method::MDBDP;

  SolverRun run;
  run.config = cfg;
  run.seed = cfg.seed;

  StepNets nets;
  nets.method = cfg.method;
  nets.u_nets.resize(N);
  if (has_v) nets.v_nets.resize(N);

  const PathBatch val = simulate_paths(p, N, cfg.val_size, seed_mix(cfg.seed, kValStream));

  auto step_loss = [&](std::size_t i, const PathBatch& paths, StepGrads* grads) -> double {
    const ValueFn u_next =
        (i + 1 == N) ? ValueFn::terminal(p) : ValueFn::from_net(nets.u_nets[i + 1]);
    switch (cfg.method) {
      case Method::DBDP1:
        return dbdp_step_loss(nets.u_nets[i], &nets.v_nets[i], u_next, paths, p, drv, i, grads);
      case Method::DBDP2:
        return dbdp_step_loss(nets.u_nets[i], nullptr, u_next, paths, p, drv, i, grads);
      case Method::DS:
        return ds_step_loss(nets.u_nets[i], u_next, paths, p, drv, i, grads);
      case Method::MDBDP:
        return mdbdp_step_loss(nets.u_nets[i], nets.v_nets[i], nets.u_nets, nets.v_nets, paths,
                               p, drv, i, grads);
      default: throw std::logic_error("backward_train: unexpected method");
    }
  };

  std::size_t global_iter = 0;
  try {
    for (std::size_t step = N; step-- > 0;) {
      if (step == N - 1) {
        nets.u_nets[step] =
            init_net(n, 1, cfg.hidden, seed_mix(cfg.seed, kInitStream + step), cfg.activation);
        if (has_v)
          nets.v_nets[step] = init_net(
              n, n, cfg.hidden, seed_mix(cfg.seed, kInitStream + N + step), cfg.activation);
      } else {
        // Warm start from the step just trained.
        nets.u_nets[step] = nets.u_nets[step + 1];
        if (has_v) nets.v_nets[step] = nets.v_nets[step + 1];
      }

      std::vector<Tensor*> params = param_tensors(nets.u_nets[step]);
      if (has_v)
        for (Tensor* t : param_tensors(nets.v_nets[step])) params.push_back(t);
      AdamState adam = make_adam({params.begin(), params.end()}, cfg.lr);

      StepGrads grads;
      grads.u = zero_gradients(nets.u_nets[step]);
      if (has_v) grads.v = zero_gradients(nets.v_nets[step]);

      const std::size_t iters = (step == N - 1) ? cfg.iters_first : cfg.iters_rest;
      for (std::size_t it = 0; it < iters; ++it, ++global_iter) {
        if (global_iter % cfg.val_every == 0) {
          const double vloss = step_loss(step, val, nullptr);
          run.loss_curve.push_back({global_iter, vloss});
        }
        const PathBatch batch =
            simulate_paths(p, N, cfg.batch, seed_mix(cfg.seed, kBatchStream + step, it));
        for (auto& t : grads.u.weights) t.fill(0.0);
        for (auto& t : grads.u.biases) t.fill(0.0);
        if (has_v) {
          for (auto& t : grads.v.weights) t.fill(0.0);
          for (auto& t : grads.v.biases) t.fill(0.0);
        }
        try {
          step_loss(step, batch, &grads);
        } catch (const DivergenceError& e) {
          throw DivergenceError("step " + std::to_string(step) + ", iteration " +
                                    std::to_string(it) + ": " + e.what(),
                                e.path_index);
        }
        std::vector<const Tensor*> gs = grad_tensors(grads.u);
        if (has_v)
          for (const Tensor* t : grad_tensors(grads.v)) gs.push_back(t);
        adam_step(adam, params, gs);
      }
    }
    const double vloss = step_loss(0, val, nullptr);
    if (!std::isfinite(vloss)) throw DivergenceError("validation loss non-finite", 0);
    run.loss_curve.push_back({global_iter, vloss});
  } catch (const DivergenceError& e) {
    run.diverged = true;
    run.note = to_string(cfg.method) + " diverged: " + e.what();
    run.wall_time = elapsed_s(t0);
    if (out_nets) *out_nets = std::move(nets);
    return run;
  }

  run.price = price_at_initial(nets, p);
  run.wall_time = elapsed_s(t0);
  if (out_nets) *out_nets = std::move(nets);
  return run;
}

SolverRun solve(const SolverConfig& cfg, const HestonParams& p, const Driver& drv,
                StepNets* out_nets) {
  return cfg.method == Method::DBSDE ? dbsde_train(cfg, p, drv, out_nets)
                                     : backward_train(cfg, p, drv, out_nets);
}

}  // namespace dbb
