#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfsb/checkpoint.hpp"
#include "mfsb/config.hpp"
#include "mfsb/svg.hpp"
#include "mfsb/trainer.hpp"

namespace {

using nlohmann::ordered_json;

std::string hash_hex(std::uint64_t h) {
  char b[24];
  std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(h));
  return b;
}

std::string fmt17(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

ordered_json half_json(const mfsb::HalfStats& h) {
  return ordered_json{{"steps", h.steps}, {"ipf", h.ipf},   {"td", h.td},
                      {"fm", h.fm},       {"pv", h.pv},     {"total", h.total}};
}

ordered_json record_json(const mfsb::StageRecord& r) {
  ordered_json j;
  j["stage"] = r.stage;
  j["collision_rate"] = r.collision_rate;
  j["energy_distance"] = r.energy_distance;
  j["energy_distance_backward"] = r.energy_distance_backward;
  if (r.mode_coverage.size() > 0) {
    std::vector<double> mc(r.mode_coverage.data(),
                           r.mode_coverage.data() + r.mode_coverage.size());
    j["mode_coverage"] = mc;
  }
  j["forward_half"] = half_json(r.forward_half);
  j["backward_half"] = half_json(r.backward_half);
  j["wall_clock_s"] = r.wall_clock_s;
  return j;
}

void write_report(const std::string& path, const mfsb::RunReport& report) {
  ordered_json j;
  j["seed"] = report.seed;
  j["scenario"] = report.scenario;
  j["config_hash"] = report.config_hash;
  j["records"] = ordered_json::array();
  for (const auto& r : report.records) j["records"].push_back(record_json(r));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

void export_eval_artifacts(const mfsb::NetBundle& nets,
                           const mfsb::ProblemSpec& spec, int n,
                           std::uint64_t seed, const std::string& out_dir) {
  // Same stream the metric snapshot uses, so plots match the numbers.
  const mfsb::TrajectoryBatch fwd = mfsb::simulate_forward(
      spec, nets.z_fwd, n, mfsb::Rng(seed).substream(31));
  mfsb::export_plots(fwd, spec, out_dir);
  std::ofstream csv(out_dir + "/trajectories.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write trajectories.csv");
  mfsb::export_csv(fwd, csv);
}

int cmd_train(const mfsb::RunSettings& settings, const std::string& out_dir) {
  const mfsb::ProblemSpec spec = settings.make_spec();
  settings.train.validate();
  std::cout << mfsb::canonical_echo(settings);
  const std::string hash = hash_hex(mfsb::settings_hash(settings));
  std::cout << "config_hash = " << hash << "\n";

  mfsb::TrainResult res = mfsb::train(spec, settings.train, out_dir);
  res.report.config_hash = hash;

  const mfsb::StageRecord& last = res.report.records.back();
  std::cout << "final collision_rate = " << fmt17(last.collision_rate)
            << "\nfinal energy_distance = " << fmt17(last.energy_distance)
            << "\nfinal energy_distance_backward = "
            << fmt17(last.energy_distance_backward) << "\n";

  if (!out_dir.empty()) {
    write_report(out_dir + "/report.json", res.report);
    export_eval_artifacts(res.nets, spec, settings.train.eval_samples,
                          settings.train.seed + 0x5000, out_dir + "/plots");
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, std::string scenario,
             const std::string& config_path, int n, std::uint64_t seed,
             const std::string& out_dir) {
  mfsb::NetBundle nets;
  const mfsb::CheckpointMeta meta = mfsb::load_checkpoint(ckpt, nets);
  mfsb::RunSettings settings;
  settings.scenario = scenario.empty() ? meta.scenario : scenario;
  if (!config_path.empty())
    settings = mfsb::parse_config_file(config_path, settings);
  const mfsb::ProblemSpec spec = settings.make_spec();

  const mfsb::StageRecord rec =
      mfsb::evaluate_model(nets, spec, n, mfsb::Rng(seed));
  ordered_json j = record_json(rec);
  j.erase("stage");
  j.erase("forward_half");
  j.erase("backward_half");
  j.erase("wall_clock_s");
  j["checkpoint"] = ckpt;
  j["scenario"] = settings.scenario;
  j["stage"] = meta.stage;
  j["n"] = n;
  j["seed"] = seed;
  std::cout << j.dump(2) << "\n";

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir + "/metrics.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write metrics.json");
    out << j.dump(2) << "\n";
    export_eval_artifacts(nets, spec, n, seed, out_dir);
  }
  return 0;
}

int cmd_inspect(const std::string& ckpt) {
  mfsb::NetBundle nets;
  const mfsb::CheckpointMeta meta = mfsb::load_checkpoint(ckpt, nets);
  std::cout << "scenario: " << meta.scenario << "\n"
            << "seed: " << meta.seed << "\n"
            << "stage: " << meta.stage << "\n"
            << "dim: " << meta.dim << "\n"
            << "hidden: " << meta.hidden << "\n"
            << "policy net params: " << nets.z_fwd.param_count() << "\n"
            << "value net params: " << nets.y_fwd.param_count() << "\n"
            << "velocity net params: " << nets.vel.param_count() << "\n"
            << "optimizer steps: z_fwd=" << nets.a_z_fwd.steps
            << " z_bwd=" << nets.a_z_bwd.steps
            << " y_fwd=" << nets.a_y_fwd.steps
            << " y_bwd=" << nets.a_y_bwd.steps << " vel=" << nets.a_vel.steps
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field Schrodinger bridge solver"};
  app.require_subcommand(1);

  auto* t = app.add_subcommand("train", "Train a model on a scenario");
  std::string t_scenario, t_config, t_out;
  int t_stages = 0, t_steps = 0, t_k = 0, t_hidden = 0, t_eval = 0;
  std::uint64_t t_seed = 0;
  double t_lr = 0.0;
  auto* o_scenario = t->add_option("--scenario", t_scenario, "gmm|vneck");
  auto* o_stages = t->add_option("--stages", t_stages, "alternating stage pairs");
  auto* o_steps = t->add_option("--steps", t_steps, "optimizer steps per half-stage");
  auto* o_k = t->add_option("--k", t_k, "trajectories per fresh batch");
  auto* o_seed = t->add_option("--seed", t_seed, "run seed");
  auto* o_hidden = t->add_option("--hidden", t_hidden, "hidden width");
  auto* o_lr = t->add_option("--lr", t_lr, "learning rate");
  auto* o_eval = t->add_option("--eval-samples", t_eval, "evaluation sample count");
  t->add_option("--config", t_config, "key = value config file");
  t->add_option("--out", t_out, "output directory");

  auto* e = app.add_subcommand("eval", "Evaluate a trained checkpoint");
  std::string e_ckpt, e_scenario, e_config, e_out;
  int e_n = 512;
  std::uint64_t e_seed = 1000;
  e->add_option("--ckpt", e_ckpt, "checkpoint file")->required();
  e->add_option("--scenario", e_scenario, "override the checkpoint scenario");
  e->add_option("--config", e_config, "key = value config file");
  e->add_option("--n", e_n, "simulation sample count");
  e->add_option("--seed", e_seed, "evaluation seed");
  e->add_option("--out", e_out, "output directory");

  auto* i = app.add_subcommand("inspect", "Print checkpoint metadata");
  std::string i_ckpt;
  i->add_option("--ckpt", i_ckpt, "checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) {
      mfsb::RunSettings settings;
      if (!t_config.empty()) settings = mfsb::parse_config_file(t_config);
      if (o_scenario->count())
        mfsb::apply_setting(settings, "scenario", t_scenario);
      if (o_stages->count())
        mfsb::apply_setting(settings, "stages", std::to_string(t_stages));
      if (o_steps->count())
        mfsb::apply_setting(settings, "steps_per_stage",
                            std::to_string(t_steps));
      if (o_k->count())
        mfsb::apply_setting(settings, "k_samples", std::to_string(t_k));
      if (o_seed->count())
        mfsb::apply_setting(settings, "seed", std::to_string(t_seed));
      if (o_hidden->count())
        mfsb::apply_setting(settings, "hidden", std::to_string(t_hidden));
      if (o_lr->count()) mfsb::apply_setting(settings, "lr", fmt17(t_lr));
      if (o_eval->count())
        mfsb::apply_setting(settings, "eval_samples", std::to_string(t_eval));
      return cmd_train(settings, t_out);
    }
    if (e->parsed())
      return cmd_eval(e_ckpt, e_scenario, e_config, e_n, e_seed, e_out);
    if (i->parsed()) return cmd_inspect(i_ckpt);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
