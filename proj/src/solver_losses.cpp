#include <cmath>

#include "dbb/rng.hpp"
#include "dbb/solvers.hpp"

namespace dbb {

Method method_from_string(const std::string& name) {
  if (name == "DBSDE") return Method::DBSDE;
  if (name == "DBDP1") return Method::DBDP1;
  if (name == "DBDP2") return Method::DBDP2;
  if (name == "DS") return Method::DS;
  if (name == "MDBDP") return Method::MDBDP;
  throw std::invalid_argument("unknown method '" + name +
                              "' (DBSDE, DBDP1, DBDP2, DS, MDBDP)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::DBSDE: return "DBSDE";
    case Method::DBDP1: return "DBDP1";
    case Method::DBDP2: return "DBDP2";
    case Method::DS: return "DS";
    case Method::MDBDP: return "MDBDP";
  }
  return "?";
}

bool is_backward(Method m) {
  return m != Method::DBSDE;
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {Method::DBSDE, Method::DBDP1, Method::DBDP2,
                                              Method::DS, Method::MDBDP};
  return methods;
}

void SolverConfig::validate() const {
  if (n_steps < 1) throw std::invalid_argument("solver: n_steps must be >= 1");
  if (batch < 1) throw std::invalid_argument("solver: batch must be >= 1");
  if (val_size < 1) throw std::invalid_argument("solver: val_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("solver: lr must be positive");
  if (val_every < 1) throw std::invalid_argument("solver: val_every must be >= 1");
  if (method == Method::DBSDE) {
    if (iters_forward < 1) throw std::invalid_argument("solver: iters_forward must be >= 1");
  } else {
    if (iters_first < 1 || iters_rest < 1)
      throw std::invalid_argument("solver: iters_first and iters_rest must be >= 1");
  }
  for (std::size_t h : hidden)
    if (h == 0) throw std::invalid_argument("solver: hidden widths must be positive");
}

Tensor ValueFn::value(const Tensor& x) const {
  if (net_) return mlp_forward(*net_, x);
  return payoff(*payoff_, x);
}

Tensor ValueFn::input_grad(const Tensor& x) const {
  if (net_) {
    ForwardTrace trace;
    mlp_forward(*net_, x, trace);
    return mlp_input_grad(*net_, trace, Tensor::full({x.dim(0), 1}, 1.0));
  }
  return payoff_gradient(*payoff_, x);
}

DbsdeGrads zero_dbsde_grads(const StepNets& nets) {
  DbsdeGrads g;
  g.u0 = Tensor({1});
  for (const auto& net : nets.z_nets) g.z.push_back(zero_gradients(net));
  return g;
}

namespace {

inline double dot_row(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t c = 0; c < n; ++c) s += a[c] * b[c];
  return s;
}

double mean_square_or_throw(const std::vector<double>& resid, const char* op) {
  double acc = 0.0;
  for (double r : resid) acc += r * r;
  const double loss = acc / static_cast<double>(resid.size());
  if (!std::isfinite(loss)) {
    std::size_t bad = 0;
    for (std::size_t b = 0; b < resid.size(); ++b)
      if (!std::isfinite(resid[b])) {
        bad = b;
        break;
      }
    throw DivergenceError(std::string(op) + ": non-finite loss (path " + std::to_string(bad) + ")",
                          bad);
  }
  return loss;
}

}  // namespace

double dbsde_loss(double u0, const std::vector<MlpNet>& z_nets, const PathBatch& paths,
                  const HestonParams& p, const Driver& drv, DbsdeGrads* grads) {
  const std::size_t N = paths.n_steps;
  const std::size_t B = paths.batch;
  const std::size_t n = p.state_dim();
  if (z_nets.size() != N)
    throw std::invalid_argument("dbsde_loss: expected one Z net per time step");

  const double dt = paths.dt;
  Tensor y = Tensor::full({B, 1}, u0);

  std::vector<Tensor> xs(N), zs(N), ys;
  std::vector<ForwardTrace> traces;
  if (grads) {
    ys.resize(N);
    traces.resize(N);
  }

  Tensor z, f;
  ForwardTrace scratch;
  for (std::size_t i = 0; i < N; ++i) {
    xs[i] = paths.states_at(i);
    ForwardTrace& trace = grads ? traces[i] : scratch;
    mlp_forward(z_nets[i], xs[i], trace);
    zs[i] = trace.output();
    if (grads) ys[i] = y;
    drv.eval(static_cast<double>(i) * dt, xs[i], y, zs[i], f);
    for (std::size_t b = 0; b < B; ++b) {
      const double* zrow = zs[i].data() + b * n;
      const double* wrow = paths.dw.data() + (b * N + i) * n;
      y[b] += f[b] * dt + dot_row(zrow, wrow, n);
    }
  }

  const Tensor g = payoff(p, paths.states_at(N));
  std::vector<double> resid(B);
  for (std::size_t b = 0; b < B; ++b) resid[b] = y[b] - g[b];
  const double loss = mean_square_or_throw(resid, "dbsde_loss");
  if (!grads) return loss;

  // Adjoint sweep: a_i = dL/dY_i obeys a_i = a_{i+1} (1 + df/dy dt); the
  // upstream on Z_i(X_i) is a_{i+1} (df/dz dt + dW_i).
  std::vector<double> adj(B);
  for (std::size_t b = 0; b < B; ++b) adj[b] = 2.0 * resid[b] / static_cast<double>(B);

  Tensor fy, fz;
  Tensor gz({B, n});
  for (std::size_t i = N; i-- > 0;) {
    drv.partials(static_cast<double>(i) * dt, xs[i], ys[i], zs[i], fy, fz);
    for (std::size_t b = 0; b < B; ++b) {
      const double* wrow = paths.dw.data() + (b * N + i) * n;
      const double* fzrow = fz.data() + b * n;
      double* grow = gz.data() + b * n;
      for (std::size_t c = 0; c < n; ++c) grow[c] = adj[b] * (fzrow[c] * dt + wrow[c]);
    }
    mlp_backward(z_nets[i], traces[i], gz, grads->z[i]);
    for (std::size_t b = 0; b < B; ++b) adj[b] *= 1.0 + fy[b] * dt;
  }
  double du0 = 0.0;
  for (std::size_t b = 0; b < B; ++b) du0 += adj[b];
  grads->u0[0] += du0;
  return loss;
}

double dbdp_step_loss(const MlpNet& u_i, const MlpNet* v_i, const ValueFn& u_next,
                      const PathBatch& paths, const HestonParams& p, const Driver& drv,
                      std::size_t i, StepGrads* grads) {
  const std::size_t B = paths.batch;
  const std::size_t n = p.state_dim();
  if (i >= paths.n_steps) throw std::invalid_argument("dbdp_step_loss: step out of range");

  const double dt = paths.dt;
  const double t_i = static_cast<double>(i) * dt;
  const Tensor x_i = paths.states_at(i);
  const Tensor dw_i = paths.dw_at(i);
  const Tensor target = u_next.value(paths.states_at(i + 1));

  ForwardTrace trace_u;
  mlp_forward(u_i, x_i, trace_u);
  const Tensor& y = trace_u.output();

  // V_i: free network (DBDP1) or sigma^T grad_x U_i via autodiff (DBDP2).
  Tensor v, grad_x_u;
  ForwardTrace trace_v;
  const bool v_is_net = (v_i != nullptr);
  if (v_is_net) {
    mlp_forward(*v_i, x_i, trace_v);
    v = trace_v.output();
  } else {
    grad_x_u = mlp_input_grad(u_i, trace_u, Tensor::full({B, 1}, 1.0));
    sigma_transpose_vec(p, t_i, x_i, grad_x_u, v);
  }

  Tensor f;
  drv.eval(t_i, x_i, y, v, f);
  std::vector<double> resid(B);
  for (std::size_t b = 0; b < B; ++b)
    resid[b] = bsde_residual(target[b], y[b], f[b], dt,
                             dot_row(v.data() + b * n, dw_i.data() + b * n, n));
  const double loss = mean_square_or_throw(resid, "dbdp_step_loss");
  if (!grads) return loss;

  Tensor fy, fz;
  drv.partials(t_i, x_i, y, v, fy, fz);
  Tensor up_y({B, 1});
  Tensor up_v({B, n});
  for (std::size_t b = 0; b < B; ++b) {
    const double rb = 2.0 * resid[b] / static_cast<double>(B);
    up_y[b] = rb * (-1.0 - fy[b] * dt);
    const double* fzrow = fz.data() + b * n;
    const double* wrow = dw_i.data() + b * n;
    double* urow = up_v.data() + b * n;
    for (std::size_t c = 0; c < n; ++c) urow[c] = rb * (-fzrow[c] * dt - wrow[c]);
  }

  if (v_is_net) {
    mlp_backward(u_i, trace_u, up_y, grads->u);
    mlp_backward(*v_i, trace_v, up_v, grads->v);
    grads->has_v = true;
  } else {
    // The upstream on grad_x U_i is sigma * up_v; fold it into a forward
    // tangent and backpropagate through the dual computation, which also
    // carries the primal upstream on U_i's output.
    Tensor w_bar;
    sigma_vec(p, t_i, x_i, up_v, w_bar);
    DualTrace dual;
    mlp_forward_dual(u_i, x_i, w_bar, dual);
    mlp_backward_dual(u_i, dual, up_y, Tensor::full({B, 1}, 1.0), grads->u);
    grads->has_v = false;
  }
  return loss;
}

double ds_step_loss(const MlpNet& u_i, const ValueFn& u_next, const PathBatch& paths,
                    const HestonParams& p, const Driver& drv, std::size_t i, StepGrads* grads) {
  const std::size_t B = paths.batch;
  const std::size_t n = p.state_dim();
  if (i >= paths.n_steps) throw std::invalid_argument("ds_step_loss: step out of range");

  const double dt = paths.dt;
  const double t_i = static_cast<double>(i) * dt;
  const Tensor x_i = paths.states_at(i);
  const Tensor x_next = paths.states_at(i + 1);

  // Everything in the driver term is frozen: the value and spatial gradient
  // of U_{i+1}, with sigma taken at (t_i, X_i).
  const Tensor target = u_next.value(x_next);
  const Tensor grad_next = u_next.input_grad(x_next);
  Tensor v_next;
  sigma_transpose_vec(p, t_i, x_i, grad_next, v_next);

  Tensor f;
  drv.eval(t_i, x_next, target, v_next, f);

  ForwardTrace trace_u;
  mlp_forward(u_i, x_i, trace_u);
  const Tensor& y = trace_u.output();

  std::vector<double> resid(B);
  for (std::size_t b = 0; b < B; ++b) resid[b] = bsde_residual(target[b], y[b], f[b], dt, 0.0);
  const double loss = mean_square_or_throw(resid, "ds_step_loss");
  if (!grads) return loss;

  Tensor up_y({B, 1});
  for (std::size_t b = 0; b < B; ++b) up_y[b] = -2.0 * resid[b] / static_cast<double>(B);
  mlp_backward(u_i, trace_u, up_y, grads->u);
  grads->has_v = false;
  return loss;
}

double mdbdp_step_loss(const MlpNet& u_i, const MlpNet& v_i, const std::vector<MlpNet>& u_frozen,
                       const std::vector<MlpNet>& v_frozen, const PathBatch& paths,
                       const HestonParams& p, const Driver& drv, std::size_t i,
                       StepGrads* grads) {
  const std::size_t B = paths.batch;
  const std::size_t N = paths.n_steps;
  const std::size_t n = p.state_dim();
  if (i >= N) throw std::invalid_argument("mdbdp_step_loss: step out of range");
  if (u_frozen.size() < N || v_frozen.size() < N)
    throw std::invalid_argument("mdbdp_step_loss: frozen nets must cover steps up to N-1");

  const double dt = paths.dt;
  const double t_i = static_cast<double>(i) * dt;

  // target = g(X_N) - sum_{j>i} [f(t_j, X_j, U_j, V_j) dt + V_j . dW_j],
  // evaluated with the frozen later-step networks.
  const Tensor g = payoff(p, paths.states_at(N));
  Tensor target({B, 1});
  for (std::size_t b = 0; b < B; ++b) target[b] = g[b];
  Tensor f_j;
  for (std::size_t j = i + 1; j < N; ++j) {
    const Tensor x_j = paths.states_at(j);
    const Tensor dw_j = paths.dw_at(j);
    const Tensor u_val = mlp_forward(u_frozen[j], x_j);
    const Tensor v_val = mlp_forward(v_frozen[j], x_j);
    drv.eval(static_cast<double>(j) * dt, x_j, u_val, v_val, f_j);
    for (std::size_t b = 0; b < B; ++b)
      target[b] -= f_j[b] * dt + dot_row(v_val.data() + b * n, dw_j.data() + b * n, n);
  }

  const Tensor x_i = paths.states_at(i);
  const Tensor dw_i = paths.dw_at(i);
  ForwardTrace trace_u, trace_v;
  mlp_forward(u_i, x_i, trace_u);
  mlp_forward(v_i, x_i, trace_v);
  const Tensor& y = trace_u.output();
  const Tensor& v = trace_v.output();

  Tensor f;
  drv.eval(t_i, x_i, y, v, f);
  std::vector<double> resid(B);
  for (std::size_t b = 0; b < B; ++b)
    resid[b] = bsde_residual(target[b], y[b], f[b], dt,
                             dot_row(v.data() + b * n, dw_i.data() + b * n, n));
  const double loss = mean_square_or_throw(resid, "mdbdp_step_loss");
  if (!grads) return loss;

  Tensor fy, fz;
  drv.partials(t_i, x_i, y, v, fy, fz);
  Tensor up_y({B, 1});
  Tensor up_v({B, n});
  for (std::size_t b = 0; b < B; ++b) {
    const double rb = 2.0 * resid[b] / static_cast<double>(B);
    up_y[b] = rb * (-1.0 - fy[b] * dt);
    const double* fzrow = fz.data() + b * n;
    const double* wrow = dw_i.data() + b * n;
    double* urow = up_v.data() + b * n;
    for (std::size_t c = 0; c < n; ++c) urow[c] = rb * (-fzrow[c] * dt - wrow[c]);
  }
  mlp_backward(u_i, trace_u, up_y, grads->u);
  mlp_backward(v_i, trace_v, up_v, grads->v);
  grads->has_v = true;
  return loss;
}

}  // namespace dbb
