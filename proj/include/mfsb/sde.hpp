#pragma once

#include <iosfwd>
#include <vector>

#include "mfsb/net.hpp"
#include "mfsb/rng.hpp"
#include "mfsb/scenario.hpp"

namespace mfsb {

enum class Direction { Forward, Backward };

const char* direction_name(Direction d);

// One simulated batch of controlled paths. Index k runs over the batch's own
// time grid (k = 0 is the batch's start: the source for forward batches, the
// target for backward ones). x and z have n_steps+1 entries, dw has n_steps;
// every entry is d x n_samples. z holds the generating policy evaluated along
// the path. The stored data satisfies the integrator identity
//   x[k+1] = x[k] + drift(x[k], t_k) * dt + sigma * dw[k]
// exactly, so trajectories can be replayed from (x[0], z, dw).
struct TrajectoryBatch {
  Direction direction = Direction::Forward;
  double dt = 0.0;
  double horizon = 0.0;
  double sigma = 0.0;
  int n_samples = 0;
  int n_steps = 0;
  long policy_version = 0;
  std::vector<Mat2X> x, z, dw;

  // Physical time of grid index k: forward batches march 0 -> T, backward
  // ones T -> 0. Networks are always queried at physical time.
  double physical_time(int k) const {
    return direction == Direction::Forward ? double(k) * dt
                                           : horizon - double(k) * dt;
  }
};

// Simulate n paths of the controlled SDE under the given policy net.
// The caller passes a call-unique rng stream; per-direction and per-sample
// substreams are derived internally, so forward and backward batches from the
// same stream use independent noise.
TrajectoryBatch simulate_forward(const ProblemSpec& spec, const Mlp& policy,
                                 int n, const Rng& rng, long policy_version = 0);
TrajectoryBatch simulate_backward(const ProblemSpec& spec, const Mlp& policy,
                                  int n, const Rng& rng, long policy_version = 0);

// Base drift evaluated on a whole state block, and its (spatial) divergence.
Mat2X base_drift_batch(const ProblemSpec& spec, const Mat2X& x, double t);

// Which policy divergences eval_fields_along must fill. Divergence needs two
// extra Jacobian sweeps over the whole batch, so callers that only ever read
// one side can skip the other; the skipped column block is zero-filled.
enum class DivNeed { Both, ForwardOnly, BackwardOnly };

// All network and cost fields evaluated along a batch, one column per step.
// Scalar fields are n_samples x (n_steps+1); vector fields follow batch.x.
// z/zhat are the *current* forward/backward policies (not the stored ones),
// f is the base drift, big_f the state cost F evaluated with
// log_rho_hat = y + yhat at the same points.
struct FieldEvals {
  Eigen::MatrixXd y, yhat, div_z, div_zhat, log_rho_hat, big_f;
  std::vector<Mat2X> z, zhat, f;
};

FieldEvals eval_fields_along(const TrajectoryBatch& batch,
                             const NetBundle& nets, const ProblemSpec& spec,
                             DivNeed div_need = DivNeed::Both);

// New batch holding the selected sample columns (duplicates allowed).
TrajectoryBatch subsample(const TrajectoryBatch& batch,
                          const std::vector<int>& indices);

// CSV export: header + one row per (sample, step) with columns
// direction,sample_id,step,t,x1,x2.
void export_csv(const TrajectoryBatch& batch, std::ostream& os);

}  // namespace mfsb
