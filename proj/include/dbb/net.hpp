#pragma once

#include <cstdint>
#include <vector>

#include "dbb/tensor.hpp"

namespace dbb {

enum class Activation { Relu, Tanh, Identity };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Fixed feedforward network: input -> hidden layers (activated) -> linear
// output. Weights are stored [fan_in, fan_out] so a batched forward pass is
// x * W + b on row-major data.
struct MlpNet {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::Relu;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t n_layers() const { return weights.size(); }
  std::size_t param_count() const;
  NamedTensors snapshot(const std::string& prefix = "") const;
  void restore(const NamedTensors& entries, const std::string& prefix = "");
};

// Deterministic init: weights uniform on +-sqrt(6/(fan_in+fan_out)), biases 0.
MlpNet init_net(std::size_t input_dim, std::size_t output_dim,
                const std::vector<std::size_t>& hidden, std::uint64_t seed,
                Activation activation = Activation::Relu);

// Per-layer activations retained for the backward pass.
struct ForwardTrace {
  std::vector<Tensor> pre;   // pre-activation a_l, one per layer
  std::vector<Tensor> post;  // post-activation z_l for hidden layers
  const Tensor* input = nullptr;
  std::size_t batch = 0;
  const Tensor& output() const { return pre.back(); }
};

// Primal plus a forward tangent xdot; ydot = (directional derivative of the
// output along xdot). Backpropagating through both gives exact mixed second
// derivatives d/dtheta (xdot . grad_x u).
struct DualTrace {
  ForwardTrace primal;
  std::vector<Tensor> pre_dot;
  std::vector<Tensor> post_dot;
  const Tensor* input_dot = nullptr;
  const Tensor& output_dot() const { return pre_dot.back(); }
};

struct Gradients {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Tensor input;  // [batch, input_dim], present iff requested
  bool has_input = false;
};

Gradients zero_gradients(const MlpNet& net);

Tensor mlp_forward(const MlpNet& net, const Tensor& x);
const Tensor& mlp_forward(const MlpNet& net, const Tensor& x, ForwardTrace& trace);

// Parameter gradients of sum(upstream * output); input gradient on request.
Gradients mlp_backward(const MlpNet& net, const Tensor& x, const Tensor& upstream,
                       bool want_input_grad = false);
void mlp_backward(const MlpNet& net, const ForwardTrace& trace, const Tensor& upstream,
                  Gradients& grads, bool want_input_grad = false);

// Input gradient only (no parameter gradients); upstream [batch, output_dim].
Tensor mlp_input_grad(const MlpNet& net, const ForwardTrace& trace, const Tensor& upstream);

const Tensor& mlp_forward_dual(const MlpNet& net, const Tensor& x, const Tensor& xdot,
                               DualTrace& trace);

// Accumulates parameter gradients of
//   sum(upstream_primal * y) + sum(upstream_dot * ydot)
// where y is the output and ydot its forward tangent along xdot.
void mlp_backward_dual(const MlpNet& net, const DualTrace& trace, const Tensor& upstream_primal,
                       const Tensor& upstream_dot, Gradients& grads);

// Adam over a flat list of parameter tensors with bias correction.
struct AdamState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

AdamState make_adam(const std::vector<const Tensor*>& params, double lr = 0.01);
void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads);

std::vector<Tensor*> param_tensors(MlpNet& net);
std::vector<const Tensor*> param_tensors(const MlpNet& net);
std::vector<const Tensor*> grad_tensors(const Gradients& grads);

}  // namespace dbb
