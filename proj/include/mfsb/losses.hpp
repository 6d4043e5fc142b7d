#pragma once

#include "mfsb/sde.hpp"

namespace mfsb {

// w_fm and w_pv are applied inside their losses (fm_policy_loss, pv_loss);
// w_ipf and w_td scale the respective losses when the trainer assembles the
// total objective. w_td covers the TD objective as a whole: the value-head
// gradient (td_loss_*) and the policy-side gradient through the target
// increments (td_policy_loss) are two components of one objective. w_tdp
// additionally scales only the policy-side component (the trainer applies
// w_td * w_tdp to it), so 1 keeps the plain objective gradient and 0 turns
// the policy-side route off without touching value-head training.
struct LossWeights {
  double w_ipf = 1.0;
  double w_td = 1.0;
  double w_fm = 0.1;
  double w_pv = 0.0;
  double w_tdp = 1.0;
};

enum class TdMode { Single, Multi };

// Cross-term convention in the TD increments. Asymmetric keeps each
// direction's own published form (forward side ||Zhat||^2, backward side
// Zhat^T Z); Cross uses the plain cross term on both sides; Cross2 doubles
// it.
enum class TdCross { Asymmetric, Cross, Cross2 };

// Drift-form convention in fm_policy_loss. BatchDirection builds the
// residual with the batch direction's drift form (trainee policy against the
// velocity field as the generator of the batch's own flow); TraineeDirection
// keys the form to the trainee's own transport direction instead (forward
// policies chase +u, backward policies chase -u).
enum class FmSign { BatchDirection, TraineeDirection };

// Every loss returns its scalar value and the gradient w.r.t. its trainee
// network (documented per function). All other fields are constants.
struct LossResult {
  double value = 0.0;
  Mlp grad;
};

// IPF drift-matching losses. theta trains the forward policy on backward
// paths, phi the backward policy on forward paths; the partner policy enters
// through the values stored in the batch.
LossResult ipf_loss_theta(const TrajectoryBatch& batch, const NetBundle& nets,
                          const ProblemSpec& spec);
LossResult ipf_loss_phi(const TrajectoryBatch& batch, const NetBundle& nets,
                        const ProblemSpec& spec);

// TD targets along a batch: backward batches produce targets for the forward
// value head, forward batches for the backward value head. target and head
// are n_samples x (n_steps+1); column 0 holds the boundary target. Targets
// are constants for gradient purposes.
struct TdTargets {
  Direction direction = Direction::Forward;
  TdMode mode = TdMode::Multi;
  TdCross cross = TdCross::Asymmetric;
  Eigen::MatrixXd target, head;
};

TdTargets td_targets(const TrajectoryBatch& batch, const NetBundle& nets,
                     const ProblemSpec& spec, TdMode mode,
                     TdCross cross = TdCross::Asymmetric);

// L1 value-head losses against fixed targets; theta trains the forward value
// head on backward paths, phi the backward head on forward paths.
LossResult td_loss_theta(const TrajectoryBatch& batch, const TdTargets& tgt,
                         const NetBundle& nets);
LossResult td_loss_phi(const TrajectoryBatch& batch, const TdTargets& tgt,
                       const NetBundle& nets);

// Policy-side gradient of the same TD objective. The target increments
// contain the trainee policy — its quadratic cost, divergence, cross term,
// and the martingale term against the stored noise — so the L1 residuals
// carry a subgradient with respect to that policy. Returns the identical
// scalar as the matching td_loss; the gradient flows into the trainee
// policy net only. With separately parameterized policy and value networks
// this is the route by which state costs reach the policies.
LossResult td_policy_loss(const TrajectoryBatch& batch, const TdTargets& tgt,
                          const NetBundle& nets);

// Endpoint couples in physical order (x0 at t=0, x1 at t=T).
struct PairSet {
  Mat2X x0, x1;
};

PairSet endpoint_couples(const TrajectoryBatch& batch);

// Conditional flow-matching regression on straight-line interpolants:
// mean over pairs of ||u(t_i, (1-t_i)x0 + t_i x1) - (x1 - x0)||^2.
LossResult fm_train_loss(const PairSet& pairs, const Eigen::VectorXd& times,
                         const Mlp& vel);
// Draws the interpolation times from rng, then evaluates fm_train_loss.
LossResult fm_train_step(const PairSet& pairs, const Mlp& vel, Rng& rng);

// Drift-consistency term against the velocity field, applied to the batch's
// opposite-direction policy (the half-stage trainee). Contributes exactly 0
// while the velocity net is untrained (optimizer step counter 0).
LossResult fm_policy_loss(const TrajectoryBatch& batch, const NetBundle& nets,
                          const ProblemSpec& spec, const LossWeights& weights,
                          FmSign sign = FmSign::BatchDirection);

// Policy-value coupling: penalizes the trainee policy's distance to
// sigma * grad_x of its own side's value head along the batch (value side
// constant). Enforces the defining relation between policies and value
// functions pointwise. Off by default: matching a policy to the spatial
// gradient of a partially trained network is unstable in practice, and the
// along-path coupling in td_policy_loss serves the same purpose.
LossResult pv_loss(const TrajectoryBatch& batch, const NetBundle& nets,
                   const ProblemSpec& spec, const LossWeights& weights);

}  // namespace mfsb
