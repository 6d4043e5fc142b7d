#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "mfsb/losses.hpp"
#include "mfsb/metrics.hpp"

namespace mfsb {

// Bounded FIFO of whole trajectory batches for off-policy draws. Whole
// trajectories are stored (not transitions) so multi-step value targets can
// be rebuilt from step 0 with current networks.
struct ReplayBuffer {
  Direction direction = Direction::Forward;
  std::size_t capacity = 10;
  std::deque<TrajectoryBatch> batches;
  std::uint64_t pushes = 0;
  std::uint64_t draws = 0;

  bool empty() const { return batches.empty(); }
  void push(TrajectoryBatch batch);
  // Uniform over stored batches; throws when empty.
  const TrajectoryBatch& sample(Rng& rng);
};

struct Buffers {
  ReplayBuffer forward{Direction::Forward};
  ReplayBuffer backward{Direction::Backward};
};

// Where the velocity field's training couples come from. Batch uses the
// fresh batch's own endpoints (the coupling induced by the current policy);
// Marginals draws X0 and X1 independently from the prescribed source and
// target, which gives the field its global transport signal even while the
// diffusion supports of the two marginals are far apart.
enum class FmCouples { Batch, Marginals };

// Which states the flow-matching policy-consistency term is evaluated on.
// Batch walks the subsampled trajectory states; Interpolants walks the
// straight-line interpolants of the step's couples across the time grid,
// which anchors the policies along the whole transport path even where
// simulation has not yet visited. The policies only ever train where this
// term is evaluated, so Interpolants is the choice that bootstraps problems
// whose source and target supports are far apart.
enum class FmStates { Batch, Interpolants };

struct TrainConfig {
  int stages = 20;           // alternating (forward, backward) stage pairs
  int steps_per_stage = 1000;  // optimizer steps per half-stage
  int k_samples = 250;       // fresh-batch trajectory count
  int onpolicy_batch = -1;   // per-step on-policy draw; -1 means k_samples
  int offpolicy_batch = -1;  // per-step off-policy draw; -1 means k_samples
  int buffer_capacity = 10;
  int eval_samples = 512;
  int hidden = 64;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  TdMode td_mode = TdMode::Multi;
  TdCross td_cross = TdCross::Asymmetric;
  FmSign fm_sign = FmSign::BatchDirection;
  FmCouples fm_couples = FmCouples::Batch;
  FmStates fm_states = FmStates::Batch;
  std::uint64_t seed = 0;

  int onpolicy_n() const { return onpolicy_batch > 0 ? onpolicy_batch : k_samples; }
  int offpolicy_n() const { return offpolicy_batch > 0 ? offpolicy_batch : k_samples; }
  void validate() const;
};

// Mean loss values over one half-stage's inner steps.
struct HalfStats {
  Direction half = Direction::Forward;
  double ipf = 0.0;
  double td = 0.0;
  double fm = 0.0;
  double pv = 0.0;
  double total = 0.0;
  int steps = 0;
};

struct StageRecord {
  int stage = 0;  // 0 is the untrained snapshot, k the state after k pairs
  HalfStats forward_half;
  HalfStats backward_half;
  Eigen::VectorXd mode_coverage;  // empty unless the target is a mixture
  double collision_rate = 0.0;    // forward trajectories
  double energy_distance = 0.0;   // forward terminal vs target draw
  double energy_distance_backward = 0.0;  // backward terminal vs source draw
  double wall_clock_s = 0.0;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string scenario;
  std::string config_hash;  // filled by the CLI layer
  std::vector<StageRecord> records;
};

// One half-stage: simulate a fresh on-policy batch with the half's own
// generating policy, push it to the matching buffer, then run the inner
// optimization on the opposite side's networks (policy + value head), with
// the velocity field refreshed each inner step from on-policy endpoint
// couples. `metrics_log` (optional) receives one NDJSON record per inner
// step. Throws on non-finite losses with a step diagnostic.
HalfStats run_stage(Direction half, NetBundle& nets, Buffers& buffers,
                    const ProblemSpec& spec, const TrainConfig& config,
                    const Rng& stage_rng, int stage_index,
                    std::ostream* metrics_log);

// Simulation-based metric snapshot of the current networks (no training).
StageRecord evaluate_model(const NetBundle& nets, const ProblemSpec& spec,
                           int n_samples, const Rng& rng);

struct TrainResult {
  NetBundle nets;
  RunReport report;
};

// Full alternating run. records[0] is the untrained evaluation; one record
// is appended after each (forward, backward) pair. When `out_dir` is
// non-empty, writes metrics.ndjson (one line per inner step) and per-stage
// checkpoints stage_<k>.ckpt into it.
TrainResult train(const ProblemSpec& spec, const TrainConfig& config,
                  const std::string& out_dir = "");

}  // namespace mfsb
