#include "dbb/net.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dbb/rng.hpp"

namespace dbb {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using MapCM = Eigen::Map<const Mat>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using MapCV = Eigen::Map<const Eigen::VectorXd>;

MapCM mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return MapCM(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MapM mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapM(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

double act(Activation a, double x) {
  switch (a) {
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Identity: return x;
  }
  return x;
}

double act_d1(Activation a, double x) {
  switch (a) {
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

double act_d2(Activation a, double x) {
  switch (a) {
    case Activation::Relu: return 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::Identity: return 0.0;
  }
  return 0.0;
}

std::vector<std::size_t> layer_widths(const MlpNet& net) {
  std::vector<std::size_t> w;
  w.reserve(net.hidden.size() + 2);
  w.push_back(net.input_dim);
  for (std::size_t h : net.hidden) w.push_back(h);
  w.push_back(net.output_dim);
  return w;
}

void check_input(const MlpNet& net, const Tensor& x, const char* op) {
  if (x.ndim() != 2 || x.dim(1) != net.input_dim)
    throw std::invalid_argument(std::string(op) + ": input must be [batch, " +
                                std::to_string(net.input_dim) + "], got " + shape_str(x.shape()));
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity" || name == "linear") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + name + "' (relu, tanh, identity)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

std::size_t MlpNet::param_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

NamedTensors MlpNet::snapshot(const std::string& prefix) const {
  NamedTensors entries;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    entries.emplace_back(prefix + "w" + std::to_string(l), weights[l]);
    entries.emplace_back(prefix + "b" + std::to_string(l), biases[l]);
  }
  return entries;
}

void MlpNet::restore(const NamedTensors& entries, const std::string& prefix) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    bool got_w = false, got_b = false;
    for (const auto& [name, t] : entries) {
      if (name == prefix + "w" + std::to_string(l)) {
        t.require_shape(weights[l].shape(), "MlpNet::restore " + name);
        weights[l] = t;
        got_w = true;
      } else if (name == prefix + "b" + std::to_string(l)) {
        t.require_shape(biases[l].shape(), "MlpNet::restore " + name);
        biases[l] = t;
        got_b = true;
      }
    }
    if (!got_w || !got_b)
      throw std::invalid_argument("MlpNet::restore: missing layer " + std::to_string(l) +
                                  " under prefix '" + prefix + "'");
  }
}

MlpNet init_net(std::size_t input_dim, std::size_t output_dim,
                const std::vector<std::size_t>& hidden, std::uint64_t seed,
                Activation activation) {
  if (input_dim == 0 || output_dim == 0)
    throw std::invalid_argument("init_net: dimensions must be positive");
  for (std::size_t h : hidden)
    if (h == 0) throw std::invalid_argument("init_net: hidden widths must be positive");

  MlpNet net;
  net.input_dim = input_dim;
  net.output_dim = output_dim;
  net.hidden = hidden;
  net.activation = activation;

  std::mt19937_64 eng(seed);
  const auto widths = layer_widths(net);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    Tensor w({fan_in, fan_out});
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = (2.0 * u01(eng) - 1.0) * bound;
    net.weights.push_back(std::move(w));
    net.biases.push_back(Tensor({fan_out}));
  }
  return net;
}

Gradients zero_gradients(const MlpNet& net) {
  Gradients g;
  for (const auto& w : net.weights) g.weights.push_back(Tensor(w.shape()));
  for (const auto& b : net.biases) g.biases.push_back(Tensor(b.shape()));
  return g;
}

const Tensor& mlp_forward(const MlpNet& net, const Tensor& x, ForwardTrace& trace) {
  check_input(net, x, "mlp_forward");
  if (!x.all_finite()) throw std::invalid_argument("mlp_forward: non-finite input");

  const std::size_t batch = x.dim(0);
  const std::size_t L = net.n_layers();
  trace.input = &x;
  trace.batch = batch;
  trace.pre.assign(L, Tensor());
  trace.post.assign(L, Tensor());

  const Tensor* in = &x;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t fan_in = net.weights[l].dim(0), fan_out = net.weights[l].dim(1);
    Tensor& a = trace.pre[l];
    a = Tensor({batch, fan_out});
    mat(a, batch, fan_out).noalias() =
        mat(*in, batch, fan_in) * mat(net.weights[l], fan_in, fan_out);
    mat(a, batch, fan_out).rowwise() += MapCV(net.biases[l].data(), fan_out).transpose();
    if (l + 1 < L) {
      Tensor& z = trace.post[l];
      z = Tensor({batch, fan_out});
      for (std::size_t i = 0; i < a.size(); ++i) z[i] = act(net.activation, a[i]);
      in = &z;
    }
  }
  return trace.output();
}

Tensor mlp_forward(const MlpNet& net, const Tensor& x) {
  ForwardTrace trace;
  mlp_forward(net, x, trace);
  return trace.output();
}

void mlp_backward(const MlpNet& net, const ForwardTrace& trace, const Tensor& upstream,
                  Gradients& grads, bool want_input_grad) {
  const std::size_t batch = trace.batch;
  const std::size_t L = net.n_layers();
  upstream.require_shape({batch, net.output_dim}, "mlp_backward upstream");
  if (!upstream.all_finite()) throw std::invalid_argument("mlp_backward: non-finite upstream");

  Tensor delta = upstream;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t fan_in = net.weights[l].dim(0), fan_out = net.weights[l].dim(1);
    const Tensor& in = (l == 0) ? *trace.input : trace.post[l - 1];
    mat(grads.weights[l], fan_in, fan_out).noalias() +=
        mat(in, batch, fan_in).transpose() * mat(delta, batch, fan_out);
    // fixed-order reduction: Eigen's colwise().sum() vectorizes according to
    // runtime buffer alignment, which perturbs last bits between call sites
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < fan_out; ++o) grads.biases[l][o] += delta(b, o);
    if (l == 0) {
      if (want_input_grad) {
        grads.input = Tensor({batch, fan_in});
        mat(grads.input, batch, fan_in).noalias() =
            mat(delta, batch, fan_out) * mat(net.weights[l], fan_in, fan_out).transpose();
        grads.has_input = true;
      }
      break;
    }
    Tensor next({batch, fan_in});
    mat(next, batch, fan_in).noalias() =
        mat(delta, batch, fan_out) * mat(net.weights[l], fan_in, fan_out).transpose();
    const Tensor& a = trace.pre[l - 1];
    for (std::size_t i = 0; i < next.size(); ++i) next[i] *= act_d1(net.activation, a[i]);
    delta = std::move(next);
  }
}

Gradients mlp_backward(const MlpNet& net, const Tensor& x, const Tensor& upstream,
                       bool want_input_grad) {
  ForwardTrace trace;
  mlp_forward(net, x, trace);
  Gradients grads = zero_gradients(net);
  mlp_backward(net, trace, upstream, grads, want_input_grad);
  return grads;
}

Tensor mlp_input_grad(const MlpNet& net, const ForwardTrace& trace, const Tensor& upstream) {
  const std::size_t batch = trace.batch;
  const std::size_t L = net.n_layers();
  upstream.require_shape({batch, net.output_dim}, "mlp_input_grad upstream");

  Tensor delta = upstream;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t fan_in = net.weights[l].dim(0), fan_out = net.weights[l].dim(1);
    Tensor next({batch, fan_in});
    mat(next, batch, fan_in).noalias() =
        mat(delta, batch, fan_out) * mat(net.weights[l], fan_in, fan_out).transpose();
    if (l == 0) return next;
    const Tensor& a = trace.pre[l - 1];
    for (std::size_t i = 0; i < next.size(); ++i) next[i] *= act_d1(net.activation, a[i]);
    delta = std::move(next);
  }
  return delta;
}

const Tensor& mlp_forward_dual(const MlpNet& net, const Tensor& x, const Tensor& xdot,
                               DualTrace& trace) {
  check_input(net, x, "mlp_forward_dual");
  xdot.require_shape(x.shape(), "mlp_forward_dual tangent");

  const std::size_t batch = x.dim(0);
  const std::size_t L = net.n_layers();
  mlp_forward(net, x, trace.primal);
  trace.input_dot = &xdot;
  trace.pre_dot.assign(L, Tensor());
  trace.post_dot.assign(L, Tensor());

  const Tensor* in_dot = &xdot;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t fan_in = net.weights[l].dim(0), fan_out = net.weights[l].dim(1);
    Tensor& adot = trace.pre_dot[l];
    adot = Tensor({batch, fan_out});
    mat(adot, batch, fan_out).noalias() =
        mat(*in_dot, batch, fan_in) * mat(net.weights[l], fan_in, fan_out);
    if (l + 1 < L) {
      const Tensor& a = trace.primal.pre[l];
      Tensor& zdot = trace.post_dot[l];
      zdot = Tensor({batch, fan_out});
      for (std::size_t i = 0; i < adot.size(); ++i)
        zdot[i] = act_d1(net.activation, a[i]) * adot[i];
      in_dot = &zdot;
    }
  }
  return trace.output_dot();
}

void mlp_backward_dual(const MlpNet& net, const DualTrace& trace, const Tensor& upstream_primal,
                       const Tensor& upstream_dot, Gradients& grads) {
  const std::size_t batch = trace.primal.batch;
  const std::size_t L = net.n_layers();
  upstream_primal.require_shape({batch, net.output_dim}, "mlp_backward_dual upstream");
  upstream_dot.require_shape({batch, net.output_dim}, "mlp_backward_dual upstream_dot");

  // Reverse pass over the dual computation a = z W + b, adot = zdot W,
  // z' = act(a), zdot' = act'(a) * adot. The act'' term is what carries the
  // mixed second derivative; it vanishes for relu and identity.
  Tensor ga = upstream_primal;
  Tensor ga_dot = upstream_dot;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t fan_in = net.weights[l].dim(0), fan_out = net.weights[l].dim(1);
    const Tensor& in = (l == 0) ? *trace.primal.input : trace.primal.post[l - 1];
    const Tensor& in_dot = (l == 0) ? *trace.input_dot : trace.post_dot[l - 1];

    mat(grads.weights[l], fan_in, fan_out).noalias() +=
        mat(in, batch, fan_in).transpose() * mat(ga, batch, fan_out);
    mat(grads.weights[l], fan_in, fan_out).noalias() +=
        mat(in_dot, batch, fan_in).transpose() * mat(ga_dot, batch, fan_out);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < fan_out; ++o) grads.biases[l][o] += ga(b, o);
    if (l == 0) break;

    Tensor gz({batch, fan_in}), gz_dot({batch, fan_in});
    mat(gz, batch, fan_in).noalias() =
        mat(ga, batch, fan_out) * mat(net.weights[l], fan_in, fan_out).transpose();
    mat(gz_dot, batch, fan_in).noalias() =
        mat(ga_dot, batch, fan_out) * mat(net.weights[l], fan_in, fan_out).transpose();

    const Tensor& a = trace.primal.pre[l - 1];
    const Tensor& adot = trace.pre_dot[l - 1];
    Tensor na({batch, fan_in}), na_dot({batch, fan_in});
    for (std::size_t i = 0; i < na.size(); ++i) {
      const double d1 = act_d1(net.activation, a[i]);
      na[i] = d1 * gz[i] + act_d2(net.activation, a[i]) * adot[i] * gz_dot[i];
      na_dot[i] = d1 * gz_dot[i];
    }
    ga = std::move(na);
    ga_dot = std::move(na_dot);
  }
}

AdamState make_adam(const std::vector<const Tensor*>& params, double lr) {
  if (lr < 0.0) throw std::invalid_argument("make_adam: negative learning rate");
  AdamState s;
  s.lr = lr;
  for (const Tensor* p : params) {
    s.m.push_back(Tensor(p->shape()));
    s.v.push_back(Tensor(p->shape()));
  }
  return s;
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads) {
  if (params.size() != state.m.size() || grads.size() != params.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (!p.same_shape(state.m[k]) || !g.same_shape(p))
      throw std::invalid_argument("adam_step: shape mismatch at tensor " + std::to_string(k));
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

std::vector<Tensor*> param_tensors(MlpNet& net) {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    out.push_back(&net.weights[l]);
    out.push_back(&net.biases[l]);
  }
  return out;
}

std::vector<const Tensor*> param_tensors(const MlpNet& net) {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    out.push_back(&net.weights[l]);
    out.push_back(&net.biases[l]);
  }
  return out;
}

std::vector<const Tensor*> grad_tensors(const Gradients& grads) {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    out.push_back(&grads.weights[l]);
    out.push_back(&grads.biases[l]);
  }
  return out;
}

}  // namespace dbb
