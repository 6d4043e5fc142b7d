#include "mfsb/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "mfsb/checkpoint.hpp"

namespace mfsb {

namespace {

int uniform_index(Rng& rng, int n) {
  return std::min(int(rng.uniform() * n), n - 1);
}

std::vector<int> draw_with_replacement(Rng& rng, int n_from, int n_draw) {
  std::vector<int> idx(n_draw);
  for (int& i : idx) i = uniform_index(rng, n_from);
  return idx;
}

std::string g17(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

}  // namespace

void ReplayBuffer::push(TrajectoryBatch batch) {
  if (batch.direction != direction)
    throw std::invalid_argument("ReplayBuffer: direction mismatch");
  batches.push_back(std::move(batch));
  ++pushes;
  while (batches.size() > capacity) batches.pop_front();
}

const TrajectoryBatch& ReplayBuffer::sample(Rng& rng) {
  if (batches.empty())
    throw std::runtime_error("ReplayBuffer: sample from empty buffer");
  ++draws;
  return batches[std::size_t(uniform_index(rng, int(batches.size())))];
}

void TrainConfig::validate() const {
  if (stages < 1) throw std::invalid_argument("TrainConfig: stages >= 1");
  if (steps_per_stage < 0)
    throw std::invalid_argument("TrainConfig: steps_per_stage >= 0");
  if (k_samples < 1) throw std::invalid_argument("TrainConfig: k_samples >= 1");
  if (onpolicy_batch != -1 && onpolicy_batch < 1)
    throw std::invalid_argument("TrainConfig: onpolicy_batch >= 1 or -1");
  if (offpolicy_batch != -1 && offpolicy_batch < 1)
    throw std::invalid_argument("TrainConfig: offpolicy_batch >= 1 or -1");
  if (buffer_capacity < 1)
    throw std::invalid_argument("TrainConfig: buffer_capacity >= 1");
  if (eval_samples < 2)
    throw std::invalid_argument("TrainConfig: eval_samples >= 2");
  if (hidden < 1) throw std::invalid_argument("TrainConfig: hidden >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr > 0");
}

HalfStats run_stage(Direction half, NetBundle& nets, Buffers& buffers,
                    const ProblemSpec& spec, const TrainConfig& config,
                    const Rng& stage_rng, int stage_index,
                    std::ostream* metrics_log) {
  const bool fwd_half = half == Direction::Forward;
  const Mlp& generator = fwd_half ? nets.z_fwd : nets.z_bwd;
  ReplayBuffer& buffer = fwd_half ? buffers.forward : buffers.backward;

  TrajectoryBatch fresh =
      fwd_half ? simulate_forward(spec, generator, config.k_samples,
                                  stage_rng.substream(41), stage_index)
               : simulate_backward(spec, generator, config.k_samples,
                                   stage_rng.substream(41), stage_index);
  buffer.push(fresh);

  Mlp& trainee_z = fwd_half ? nets.z_bwd : nets.z_fwd;
  Mlp& trainee_y = fwd_half ? nets.y_bwd : nets.y_fwd;
  AdamState& a_z = fwd_half ? nets.a_z_bwd : nets.a_z_fwd;
  AdamState& a_y = fwd_half ? nets.a_y_bwd : nets.a_y_fwd;

  Rng on_idx_rng = stage_rng.substream(42);
  Rng off_sel_rng = stage_rng.substream(43);
  Rng off_idx_rng = stage_rng.substream(44);
  Rng psi_rng = stage_rng.substream(45);
  Rng couple_rng = stage_rng.substream(46);

  HalfStats stats;
  stats.half = half;
  for (int step = 0; step < config.steps_per_stage; ++step) {
    const TrajectoryBatch sub_on = subsample(
        fresh, draw_with_replacement(on_idx_rng, fresh.n_samples,
                                     config.onpolicy_n()));
    const TrajectoryBatch& src = buffer.sample(off_sel_rng);
    const TrajectoryBatch sub_off = subsample(
        src, draw_with_replacement(off_idx_rng, src.n_samples,
                                   config.offpolicy_n()));

    // Velocity-field refresh, from the on-policy endpoint couples or from
    // fresh independent marginal draws. Skipped entirely at zero flow
    // weight so that an all-zero-weight stage leaves every parameter
    // untouched.
    double grad_vel_norm = 0.0;
    PairSet pairs;
    if (config.weights.w_fm != 0.0) {
      if (config.fm_couples == FmCouples::Batch) {
        pairs = endpoint_couples(sub_on);
      } else {
        pairs.x0 = sample_dist(spec.source, config.onpolicy_n(), couple_rng);
        pairs.x1 = sample_dist(spec.target, config.onpolicy_n(), couple_rng);
      }
      const LossResult fr = fm_train_step(pairs, nets.vel, psi_rng);
      grad_vel_norm = std::sqrt(fr.grad.squared_norm());
      adam_step(nets.vel, fr.grad, nets.a_vel);
    }

    const LossResult ipf = fwd_half ? ipf_loss_phi(sub_on, nets, spec)
                                    : ipf_loss_theta(sub_on, nets, spec);
    const TdTargets targets =
        td_targets(sub_off, nets, spec, config.td_mode, config.td_cross);
    const LossResult td = fwd_half ? td_loss_phi(sub_off, targets, nets)
                                   : td_loss_theta(sub_off, targets, nets);
    // Second gradient component of the same TD objective: through the
    // trainee policy inside the target increments. Its value is td.value.
    const LossResult tdp = td_policy_loss(sub_off, targets, nets);
    LossResult fm;
    if (config.fm_states == FmStates::Interpolants &&
        config.weights.w_fm != 0.0) {
      // Evaluate the policy/velocity consistency on the couples' straight
      // interpolants instead of the simulated states: same loss, different
      // state distribution.
      TrajectoryBatch interp = sub_on;
      for (int k = 0; k <= interp.n_steps; ++k) {
        const double tau = interp.physical_time(k) / spec.horizon;
        interp.x[size_t(k)] = (1.0 - tau) * pairs.x0 + tau * pairs.x1;
      }
      fm = fm_policy_loss(interp, nets, spec, config.weights, config.fm_sign);
    } else {
      fm = fm_policy_loss(sub_on, nets, spec, config.weights, config.fm_sign);
    }
    const LossResult pv = pv_loss(sub_on, nets, spec, config.weights);

    const double total = config.weights.w_ipf * ipf.value +
                         config.weights.w_td * td.value + fm.value + pv.value;
    if (!std::isfinite(total)) {
      char msg[256];
      std::snprintf(msg, sizeof msg,
                    "non-finite loss at stage=%d half=%s step=%d "
                    "(ipf=%g td=%g fm=%g pv=%g)",
                    stage_index, direction_name(half), step, ipf.value,
                    td.value, fm.value, pv.value);
      throw std::runtime_error(msg);
    }

    Mlp grad_z = Mlp::zeros(trainee_z.in_dim(), trainee_z.hidden_dim(),
                            trainee_z.out_dim());
    grad_z.axpy(config.weights.w_ipf, ipf.grad);
    grad_z.axpy(config.weights.w_td * config.weights.w_tdp, tdp.grad);
    grad_z.axpy(1.0, fm.grad);
    grad_z.axpy(1.0, pv.grad);
    Mlp grad_y = Mlp::zeros(trainee_y.in_dim(), trainee_y.hidden_dim(),
                            trainee_y.out_dim());
    grad_y.axpy(config.weights.w_td, td.grad);

    const double gz = std::sqrt(grad_z.squared_norm());
    const double gy = std::sqrt(grad_y.squared_norm());
    adam_step(trainee_z, grad_z, a_z);
    adam_step(trainee_y, grad_y, a_y);

    stats.ipf += ipf.value;
    stats.td += td.value;
    stats.fm += fm.value;
    stats.pv += pv.value;
    stats.total += total;
    ++stats.steps;

    if (metrics_log) {
      *metrics_log << "{\"stage\":" << stage_index << ",\"half\":\""
                   << direction_name(half) << "\",\"step\":" << step
                   << ",\"ipf\":" << g17(ipf.value) << ",\"td\":"
                   << g17(td.value) << ",\"fm\":" << g17(fm.value)
                   << ",\"pv\":" << g17(pv.value) << ",\"total\":"
                   << g17(total) << ",\"grad_z\":" << g17(gz)
                   << ",\"grad_y\":" << g17(gy) << ",\"grad_vel\":"
                   << g17(grad_vel_norm) << "}\n";
    }
  }

  if (stats.steps > 0) {
    stats.ipf /= stats.steps;
    stats.td /= stats.steps;
    stats.fm /= stats.steps;
    stats.pv /= stats.steps;
    stats.total /= stats.steps;
  }
  return stats;
}

StageRecord evaluate_model(const NetBundle& nets, const ProblemSpec& spec,
                           int n_samples, const Rng& rng) {
  StageRecord rec;
  const TrajectoryBatch fwd =
      simulate_forward(spec, nets.z_fwd, n_samples, rng.substream(31));
  const TrajectoryBatch bwd =
      simulate_backward(spec, nets.z_bwd, n_samples, rng.substream(32));
  Rng tgt_rng = rng.substream(33);
  Rng src_rng = rng.substream(34);
  const Mat2X tgt = sample_dist(spec.target, n_samples, tgt_rng);
  const Mat2X src = sample_dist(spec.source, n_samples, src_rng);
  rec.collision_rate = collision_rate(fwd, spec);
  rec.energy_distance = energy_distance(fwd.x.back(), tgt);
  rec.energy_distance_backward = energy_distance(bwd.x.back(), src);
  if (!spec.target.is_gaussian())
    rec.mode_coverage = mode_coverage(fwd.x.back(), spec);
  return rec;
}

TrainResult train(const ProblemSpec& spec, const TrainConfig& config,
                  const std::string& out_dir) {
  spec.validate();
  config.validate();
  const Rng master(config.seed);

  TrainResult out{
      NetBundle::init(spec.dim, config.hidden, config.lr, config.adam_beta1,
                      config.adam_beta2, config.adam_eps,
                      master.substream(3)),
      {}};
  out.report.seed = config.seed;
  out.report.scenario = spec.label;

  Buffers buffers;
  buffers.forward.capacity = std::size_t(config.buffer_capacity);
  buffers.backward.capacity = std::size_t(config.buffer_capacity);

  std::ofstream metrics_file;
  std::ostream* metrics_log = nullptr;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    metrics_file.open(out_dir + "/metrics.ndjson",
                      std::ios::out | std::ios::trunc);
    if (!metrics_file)
      throw std::runtime_error("train: cannot open metrics log in " + out_dir);
    metrics_log = &metrics_file;
  }

  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  StageRecord rec0 = evaluate_model(out.nets, spec, config.eval_samples,
                                    master.substream(0x5000));
  rec0.stage = 0;
  rec0.wall_clock_s = std::chrono::duration<double>(clock::now() - t0).count();
  out.report.records.push_back(std::move(rec0));

  for (int s = 0; s < config.stages; ++s) {
    const auto ts = clock::now();
    const HalfStats hf =
        run_stage(Direction::Forward, out.nets, buffers, spec, config,
                  master.substream(0x100 + 2 * std::uint64_t(s)), s,
                  metrics_log);
    const HalfStats hb =
        run_stage(Direction::Backward, out.nets, buffers, spec, config,
                  master.substream(0x100 + 2 * std::uint64_t(s) + 1), s,
                  metrics_log);
    StageRecord rec = evaluate_model(out.nets, spec, config.eval_samples,
                                     master.substream(0x5001 + std::uint64_t(s)));
    rec.stage = s + 1;
    rec.forward_half = hf;
    rec.backward_half = hb;
    rec.wall_clock_s =
        std::chrono::duration<double>(clock::now() - ts).count();
    out.report.records.push_back(std::move(rec));

    if (!out_dir.empty()) {
      CheckpointMeta meta;
      meta.scenario = spec.label;
      meta.seed = config.seed;
      meta.stage = s + 1;
      meta.dim = spec.dim;
      meta.hidden = config.hidden;
      save_checkpoint(out_dir + "/stage_" + std::to_string(s + 1) + ".ckpt",
                      out.nets, meta);
    }
  }
  return out;
}

}  // namespace mfsb
