#pragma once

#include <string>

#include "mfsb/trainer.hpp"

namespace mfsb {

// A run's complete configuration: which scenario plus training settings and
// optional overrides of the scenario's physical constants (NaN = keep the
// scenario default).
struct RunSettings {
  std::string scenario = "gmm";
  TrainConfig train;
  double sigma_override = std::numeric_limits<double>::quiet_NaN();
  double dt_override = std::numeric_limits<double>::quiet_NaN();
  double horizon_override = std::numeric_limits<double>::quiet_NaN();
  double obstacle_weight_override = std::numeric_limits<double>::quiet_NaN();
  double entropy_weight_override = std::numeric_limits<double>::quiet_NaN();

  // Builds the scenario's ProblemSpec with the overrides applied.
  ProblemSpec make_spec() const;
};

// Applies one key/value pair; throws std::invalid_argument on unknown keys
// or unparseable values. Keys mirror the TrainConfig fields (stages,
// steps_per_stage, k_samples, onpolicy_batch, offpolicy_batch,
// buffer_capacity, eval_samples, hidden, lr, adam_beta1, adam_beta2,
// adam_eps, seed, w_ipf, w_td, w_fm, w_pv, w_tdp, td_mode, td_cross,
// fm_sign, fm_couples) plus
// scenario and the physical-constant overrides (sigma, dt, horizon,
// obstacle_weight, entropy_weight).
void apply_setting(RunSettings& settings, const std::string& key,
                   const std::string& value);

// Parses `key = value` lines ('#' starts a comment, blank lines ignored)
// and applies them in order. Throws on unreadable files or malformed lines.
RunSettings parse_config_file(const std::string& path,
                              const RunSettings& base = RunSettings{});

// Deterministic key=value dump of the fully resolved settings (including the
// scenario's physical constants), one per line, fixed order.
std::string canonical_echo(const RunSettings& settings);

// FNV-1a hash of the canonical echo; identifies a configuration.
std::uint64_t settings_hash(const RunSettings& settings);

}  // namespace mfsb
