#pragma once

#include <Eigen/Core>

#include "mfsb/rng.hpp"

namespace mfsb {

// Two-hidden-layer SiLU MLP on [t; x] inputs:
//   out = W3 silu(W2 silu(W1 u + b1) + b2) + b3,  silu(z) = z / (1 + e^-z).
// Parameters are plain Eigen blocks; free functions below implement batched
// forward, exact spatial divergence, and hand-derived reverse-mode gradients
// (including the second-order path through the divergence).
struct Mlp {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  int in_dim() const { return int(w1.cols()); }
  int hidden_dim() const { return int(w1.rows()); }
  int out_dim() const { return int(w3.rows()); }
  long param_count() const;

  void set_zero();
  void axpy(double a, const Mlp& g);  // this += a * g
  double squared_norm() const;

  static Mlp zeros(int in, int hidden, int out);
  // Uniform He-style fan-in init, biases zero.
  static Mlp he_init(int in, int hidden, int out, Rng& rng);
};

Eigen::VectorXd flatten(const Mlp& p);
void unflatten(const Eigen::VectorXd& v, Mlp& p);

// Forward intermediates kept for gradient passes. `sig*` are the layer
// sigmoids, `d*` the SiLU derivatives; the div_* blocks hold the tangent
// sweeps behind the divergence and exist only after a divergence call.
struct MlpCache {
  Eigen::MatrixXd u;
  Eigen::MatrixXd a1, sig1, s1, d1;
  Eigen::MatrixXd a2, sig2, s2, d2;
  Eigen::MatrixXd out;
  bool has_div = false;
  Eigen::MatrixXd div_t1[2], div_a2t[2], div_t2[2];
  Eigen::VectorXd div;
};

// input is (1+d) x P with t in row 0 and x in rows 1..d.
Eigen::MatrixXd mlp_forward(const Mlp& p, const Eigen::MatrixXd& input);
const Eigen::MatrixXd& mlp_forward_cached(const Mlp& p,
                                          const Eigen::MatrixXd& input,
                                          MlpCache& cache);

// Exact divergence of the map x -> net(t, x); requires out_dim == d.
Eigen::VectorXd mlp_divergence(const Mlp& p, const Eigen::MatrixXd& input);
const Eigen::VectorXd& mlp_divergence_cached(const Mlp& p, MlpCache& cache);

// Parameter gradient of sum_cols(out_adjoint . out). Call after
// mlp_forward_cached on the same cache.
Mlp mlp_param_grad(const Mlp& p, const MlpCache& cache,
                   const Eigen::MatrixXd& out_adjoint);

// Parameter gradient of sum_cols(out_adjoint . out) + sum(div_adjoint . div).
// Call after mlp_divergence_cached.
Mlp mlp_param_grad_div(const Mlp& p, const MlpCache& cache,
                       const Eigen::MatrixXd& out_adjoint,
                       const Eigen::VectorXd& div_adjoint);

// d x P gradient of a scalar net's output w.r.t. x. Requires out_dim == 1
// and a cache filled by mlp_forward_cached.
Eigen::MatrixXd mlp_input_spatial_grad(const Mlp& p, const MlpCache& cache);

// Pointwise conveniences.
Eigen::VectorXd mlp_eval(const Mlp& p, double t, const Eigen::Vector2d& x);
double mlp_divergence_at(const Mlp& p, double t, const Eigen::Vector2d& x);

// Bias-corrected Adam.
struct AdamState {
  Mlp m, v;
  long steps = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const Mlp& p, double lr, double beta1,
                              double beta2, double eps);
};

void adam_step(Mlp& params, const Mlp& grad, AdamState& state);

// The five networks of the solver: forward/backward policies (out_dim = d),
// forward/backward value heads (out_dim = 1) and the flow-matching velocity
// field (out_dim = d), each with its own optimizer state.
struct NetBundle {
  Mlp z_fwd, z_bwd, y_fwd, y_bwd, vel;
  AdamState a_z_fwd, a_z_bwd, a_y_fwd, a_y_bwd, a_vel;

  static NetBundle init(int dim, int hidden, double lr, double beta1,
                        double beta2, double eps, const Rng& rng);
};

}  // namespace mfsb
