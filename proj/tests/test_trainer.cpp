#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "mfsb/checkpoint.hpp"
#include "mfsb/trainer.hpp"

using namespace mfsb;

namespace {

// Tiny problem + budget so every trainer test runs in milliseconds.
ProblemSpec tiny_spec() {
  ProblemSpec spec = make_gmm_spec();
  spec.dt = 0.25;
  return spec;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.stages = 2;
  cfg.steps_per_stage = 3;
  cfg.k_samples = 8;
  cfg.eval_samples = 4;
  cfg.hidden = 8;
  cfg.lr = 1e-3;
  cfg.seed = 99;
  return cfg;
}

Eigen::VectorXd all_params(const NetBundle& nets) {
  Eigen::VectorXd v(nets.z_fwd.param_count() * 2 +
                    nets.y_fwd.param_count() * 2 + nets.vel.param_count());
  long at = 0;
  for (const Mlp* m :
       {&nets.z_fwd, &nets.z_bwd, &nets.y_fwd, &nets.y_bwd, &nets.vel}) {
    v.segment(at, m->param_count()) = flatten(*m);
    at += m->param_count();
  }
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("replay buffer is a bounded fifo with direction checking") {
  ProblemSpec spec = tiny_spec();
  Rng rng(5);
  Mlp policy = Mlp::zeros(3, 4, 2);
  ReplayBuffer buf;
  buf.direction = Direction::Forward;
  buf.capacity = 3;

  CHECK_THROWS_AS(buf.sample(rng), std::runtime_error);
  for (int v = 0; v < 5; ++v)
    buf.push(simulate_forward(spec, policy, 2, rng.substream(v), v));
  CHECK(buf.pushes == 5);
  CHECK(buf.batches.size() == 3);
  // Oldest two evicted: versions 2,3,4 remain in push order.
  CHECK(buf.batches[0].policy_version == 2);
  CHECK(buf.batches[1].policy_version == 3);
  CHECK(buf.batches[2].policy_version == 4);

  CHECK_THROWS_AS(
      buf.push(simulate_backward(spec, policy, 2, rng.substream(9), 9)),
      std::invalid_argument);

  Rng pick(7);
  for (int i = 0; i < 20; ++i) {
    const TrajectoryBatch& b = buf.sample(pick);
    CHECK(b.policy_version >= 2);
    CHECK(b.policy_version <= 4);
  }
  CHECK(buf.draws == 20);
}

TEST_CASE("config validation") {
  TrainConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.steps_per_stage = 0;
  CHECK_NOTHROW(cfg.validate());  // zero inner iterations is a valid no-op
  cfg.stages = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.k_samples = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.buffer_capacity = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.onpolicy_batch = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(tiny_config().onpolicy_n() == 8);
  TrainConfig cfg2 = tiny_config();
  cfg2.offpolicy_batch = 5;
  CHECK(cfg2.offpolicy_n() == 5);
}

TEST_CASE("zero inner iterations push one batch and touch nothing") {
  ProblemSpec spec = tiny_spec();
  TrainConfig cfg = tiny_config();
  cfg.steps_per_stage = 0;
  Rng rng(11);
  NetBundle nets = NetBundle::init(2, cfg.hidden, cfg.lr, 0.9, 0.999, 1e-8,
                                   rng.substream(3));
  const Eigen::VectorXd before = all_params(nets);
  Buffers buffers;
  HalfStats stats = run_stage(Direction::Forward, nets, buffers, spec, cfg,
                              rng.substream(50), 0, nullptr);
  CHECK(stats.steps == 0);
  CHECK(buffers.forward.batches.size() == 1);
  CHECK(buffers.backward.batches.empty());
  CHECK((all_params(nets).array() == before.array()).all());
}

TEST_CASE("all-zero loss weights leave every parameter unchanged") {
  ProblemSpec spec = tiny_spec();
  TrainConfig cfg = tiny_config();
  cfg.stages = 1;
  cfg.weights.w_ipf = 0.0;
  cfg.weights.w_td = 0.0;
  cfg.weights.w_fm = 0.0;
  cfg.weights.w_pv = 0.0;
  TrainResult res = train(spec, cfg);

  Rng master(cfg.seed);
  NetBundle init = NetBundle::init(2, cfg.hidden, cfg.lr, cfg.adam_beta1,
                                   cfg.adam_beta2, cfg.adam_eps,
                                   master.substream(3));
  CHECK((all_params(res.nets).array() == all_params(init).array()).all());
  // The optimizer still ran (zero gradients), so the budget counters tick.
  CHECK(res.nets.a_z_bwd.steps == cfg.steps_per_stage);
  CHECK(res.nets.a_z_fwd.steps == cfg.steps_per_stage);
  CHECK(res.nets.a_vel.steps == 0);  // velocity refresh skipped at w_fm == 0
}

TEST_CASE("one half-stage trains only the opposite side plus the velocity") {
  ProblemSpec spec = tiny_spec();
  TrainConfig cfg = tiny_config();
  Rng rng(13);
  NetBundle nets = NetBundle::init(2, cfg.hidden, cfg.lr, 0.9, 0.999, 1e-8,
                                   rng.substream(3));
  const Eigen::VectorXd z_fwd0 = flatten(nets.z_fwd);
  const Eigen::VectorXd y_fwd0 = flatten(nets.y_fwd);
  const Eigen::VectorXd z_bwd0 = flatten(nets.z_bwd);
  const Eigen::VectorXd y_bwd0 = flatten(nets.y_bwd);
  const Eigen::VectorXd vel0 = flatten(nets.vel);

  Buffers buffers;
  run_stage(Direction::Forward, nets, buffers, spec, cfg, rng.substream(60),
            0, nullptr);
  CHECK((flatten(nets.z_fwd).array() == z_fwd0.array()).all());
  CHECK((flatten(nets.y_fwd).array() == y_fwd0.array()).all());
  CHECK((flatten(nets.z_bwd) - z_bwd0).norm() > 0.0);
  CHECK((flatten(nets.y_bwd) - y_bwd0).norm() > 0.0);
  CHECK((flatten(nets.vel) - vel0).norm() > 0.0);

  const Eigen::VectorXd z_bwd1 = flatten(nets.z_bwd);
  const Eigen::VectorXd y_bwd1 = flatten(nets.y_bwd);
  run_stage(Direction::Backward, nets, buffers, spec, cfg, rng.substream(61),
            0, nullptr);
  CHECK((flatten(nets.z_bwd).array() == z_bwd1.array()).all());
  CHECK((flatten(nets.y_bwd).array() == y_bwd1.array()).all());
  CHECK((flatten(nets.z_fwd) - z_fwd0).norm() > 0.0);
  CHECK((flatten(nets.y_fwd) - y_fwd0).norm() > 0.0);
  CHECK(buffers.forward.batches.size() == 1);
  CHECK(buffers.backward.batches.size() == 1);
}

TEST_CASE("training is bitwise deterministic and keeps the step budget") {
  ProblemSpec spec = tiny_spec();
  TrainConfig cfg = tiny_config();
  TrainResult a = train(spec, cfg);
  TrainResult b = train(spec, cfg);
  CHECK((all_params(a.nets).array() == all_params(b.nets).array()).all());
  REQUIRE(a.report.records.size() == std::size_t(cfg.stages) + 1);
  REQUIRE(b.report.records.size() == a.report.records.size());
  for (std::size_t i = 0; i < a.report.records.size(); ++i) {
    CHECK(a.report.records[i].collision_rate ==
          b.report.records[i].collision_rate);
    CHECK(a.report.records[i].energy_distance ==
          b.report.records[i].energy_distance);
    CHECK(a.report.records[i].energy_distance_backward ==
          b.report.records[i].energy_distance_backward);
  }

  // Exactly stages x steps optimizer steps per trainee network.
  const long want = long(cfg.stages) * cfg.steps_per_stage;
  CHECK(a.nets.a_z_fwd.steps == want);
  CHECK(a.nets.a_z_bwd.steps == want);
  CHECK(a.nets.a_y_fwd.steps == want);
  CHECK(a.nets.a_y_bwd.steps == want);
  CHECK(a.nets.a_vel.steps == 2 * want);  // refreshed in both halves

  // Untrained snapshot first, then one record per stage pair.
  CHECK(a.report.records[0].stage == 0);
  CHECK(a.report.records[0].forward_half.steps == 0);
  CHECK(a.report.records[1].forward_half.steps == cfg.steps_per_stage);
  CHECK(a.report.records.back().stage == cfg.stages);
  CHECK(a.report.scenario == spec.label);
  CHECK(a.report.seed == cfg.seed);
}

TEST_CASE("metrics log and checkpoints are written and byte-stable") {
  namespace fs = std::filesystem;
  ProblemSpec spec = tiny_spec();
  TrainConfig cfg = tiny_config();
  const std::string dir_a = "trainer_out_a";
  const std::string dir_b = "trainer_out_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  TrainResult a = train(spec, cfg, dir_a);
  TrainResult b = train(spec, cfg, dir_b);

  const std::string log_a = slurp(dir_a + "/metrics.ndjson");
  CHECK(log_a == slurp(dir_b + "/metrics.ndjson"));
  // One NDJSON record per inner step, two halves per stage.
  const long lines = std::count(log_a.begin(), log_a.end(), '\n');
  CHECK(lines == 2L * cfg.stages * cfg.steps_per_stage);
  CHECK(log_a.find("\"half\":\"forward\"") != std::string::npos);
  CHECK(log_a.find("\"half\":\"backward\"") != std::string::npos);
  CHECK(log_a.find("\"grad_z\":") != std::string::npos);

  for (int s = 1; s <= cfg.stages; ++s) {
    const std::string name = "/stage_" + std::to_string(s) + ".ckpt";
    CHECK(slurp(dir_a + name) == slurp(dir_b + name));
  }

  // The last checkpoint round-trips to the final parameters.
  NetBundle loaded;
  CheckpointMeta meta = load_checkpoint(
      dir_a + "/stage_" + std::to_string(cfg.stages) + ".ckpt", loaded);
  CHECK(meta.scenario == spec.label);
  CHECK(meta.seed == cfg.seed);
  CHECK(meta.stage == cfg.stages);
  CHECK(meta.hidden == cfg.hidden);
  CHECK((all_params(loaded).array() == all_params(a.nets).array()).all());
  CHECK(loaded.a_z_fwd.steps == a.nets.a_z_fwd.steps);

  // Corruption is detected.
  std::string bytes = slurp(dir_a + "/stage_1.ckpt");
  bytes[bytes.size() / 2] ^= 0x40;
  {
    std::ofstream out(dir_a + "/stage_1.ckpt", std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
  }
  NetBundle scratch;
  CHECK_THROWS_AS(load_checkpoint(dir_a + "/stage_1.ckpt", scratch),
                  std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(dir_a + "/missing.ckpt", scratch),
                  std::runtime_error);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("non-finite losses abort the stage with a diagnostic") {
  ProblemSpec spec = tiny_spec();
  TrainConfig cfg = tiny_config();
  cfg.stages = 1;
  cfg.steps_per_stage = 4;
  cfg.lr = 1e30;  // first update catapults the parameters out of range
  bool threw = false;
  try {
    train(spec, cfg);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("evaluation snapshot reports the configured metric set") {
  ProblemSpec gmm = tiny_spec();
  Rng rng(17);
  NetBundle nets = NetBundle::init(2, 8, 1e-3, 0.9, 0.999, 1e-8,
                                   rng.substream(3));
  StageRecord rec = evaluate_model(nets, gmm, 16, rng.substream(70));
  CHECK(rec.mode_coverage.size() == 8);
  CHECK(rec.collision_rate >= 0.0);
  CHECK(rec.collision_rate <= 1.0);
  // Untrained nets end far from the ring of modes.
  CHECK(rec.energy_distance > 1.0);
  CHECK(rec.energy_distance_backward > 1.0);

  ProblemSpec vneck = make_vneck_spec();
  vneck.dt = 0.25;
  StageRecord rec2 = evaluate_model(nets, vneck, 16, rng.substream(71));
  CHECK(rec2.mode_coverage.size() == 0);  // single-Gaussian target
}
