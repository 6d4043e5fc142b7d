#include "mfsb/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "mfsb/checkpoint.hpp"

namespace mfsb {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  }
  if (trim(v.substr(pos)) != "")
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  return x;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
  if (trim(v.substr(pos)) != "")
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  return x;
}

// Shortest representation that parses back exactly.
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  if (std::stod(buf) == v) return buf;
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* td_mode_name(TdMode m) {
  return m == TdMode::Single ? "single" : "multi";
}

const char* td_cross_name(TdCross c) {
  switch (c) {
    case TdCross::Asymmetric: return "asymmetric";
    case TdCross::Cross: return "cross";
    default: return "cross2";
  }
}

const char* fm_sign_name(FmSign s) {
  return s == FmSign::BatchDirection ? "batch" : "trainee";
}

const char* fm_couples_name(FmCouples c) {
  return c == FmCouples::Batch ? "batch" : "marginals";
}

}  // namespace

ProblemSpec RunSettings::make_spec() const {
  ProblemSpec spec;
  if (scenario == "gmm")
    spec = make_gmm_spec();
  else if (scenario == "vneck")
    spec = make_vneck_spec();
  else
    throw std::invalid_argument("unknown scenario: " + scenario);
  if (!std::isnan(sigma_override)) spec.sigma = sigma_override;
  if (!std::isnan(dt_override)) spec.dt = dt_override;
  if (!std::isnan(horizon_override)) spec.horizon = horizon_override;
  if (!std::isnan(obstacle_weight_override))
    spec.obstacle_weight = obstacle_weight_override;
  if (!std::isnan(entropy_weight_override))
    spec.entropy_weight = entropy_weight_override;
  spec.validate();
  return spec;
}

void apply_setting(RunSettings& s, const std::string& key,
                   const std::string& value) {
  TrainConfig& t = s.train;
  if (key == "scenario") {
    if (value != "gmm" && value != "vneck")
      throw std::invalid_argument("unknown scenario: " + value);
    s.scenario = value;
  } else if (key == "stages") {
    t.stages = int(parse_int(key, value));
  } else if (key == "steps_per_stage") {
    t.steps_per_stage = int(parse_int(key, value));
  } else if (key == "k_samples") {
    t.k_samples = int(parse_int(key, value));
  } else if (key == "onpolicy_batch") {
    t.onpolicy_batch = int(parse_int(key, value));
  } else if (key == "offpolicy_batch") {
    t.offpolicy_batch = int(parse_int(key, value));
  } else if (key == "buffer_capacity") {
    t.buffer_capacity = int(parse_int(key, value));
  } else if (key == "eval_samples") {
    t.eval_samples = int(parse_int(key, value));
  } else if (key == "hidden") {
    t.hidden = int(parse_int(key, value));
  } else if (key == "lr") {
    t.lr = parse_double(key, value);
  } else if (key == "adam_beta1") {
    t.adam_beta1 = parse_double(key, value);
  } else if (key == "adam_beta2") {
    t.adam_beta2 = parse_double(key, value);
  } else if (key == "adam_eps") {
    t.adam_eps = parse_double(key, value);
  } else if (key == "seed") {
    t.seed = std::uint64_t(parse_int(key, value));
  } else if (key == "w_ipf") {
    t.weights.w_ipf = parse_double(key, value);
  } else if (key == "w_td") {
    t.weights.w_td = parse_double(key, value);
  } else if (key == "w_fm") {
    t.weights.w_fm = parse_double(key, value);
  } else if (key == "w_pv") {
    t.weights.w_pv = parse_double(key, value);
  } else if (key == "w_tdp") {
    t.weights.w_tdp = parse_double(key, value);
  } else if (key == "td_mode") {
    if (value == "single")
      t.td_mode = TdMode::Single;
    else if (value == "multi")
      t.td_mode = TdMode::Multi;
    else
      throw std::invalid_argument("config: td_mode must be single|multi");
  } else if (key == "td_cross") {
    if (value == "asymmetric")
      t.td_cross = TdCross::Asymmetric;
    else if (value == "cross")
      t.td_cross = TdCross::Cross;
    else if (value == "cross2")
      t.td_cross = TdCross::Cross2;
    else
      throw std::invalid_argument(
          "config: td_cross must be asymmetric|cross|cross2");
  } else if (key == "fm_sign") {
    if (value == "batch")
      t.fm_sign = FmSign::BatchDirection;
    else if (value == "trainee")
      t.fm_sign = FmSign::TraineeDirection;
    else
      throw std::invalid_argument("config: fm_sign must be batch|trainee");
  } else if (key == "fm_couples") {
    if (value == "batch")
      t.fm_couples = FmCouples::Batch;
    else if (value == "marginals")
      t.fm_couples = FmCouples::Marginals;
    else
      throw std::invalid_argument("config: fm_couples must be batch|marginals");
  } else if (key == "sigma") {
    s.sigma_override = parse_double(key, value);
  } else if (key == "dt") {
    s.dt_override = parse_double(key, value);
  } else if (key == "horizon") {
    s.horizon_override = parse_double(key, value);
  } else if (key == "obstacle_weight") {
    s.obstacle_weight_override = parse_double(key, value);
  } else if (key == "entropy_weight") {
    s.entropy_weight_override = parse_double(key, value);
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

RunSettings parse_config_file(const std::string& path,
                              const RunSettings& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  RunSettings s = base;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: malformed line " +
                                  std::to_string(lineno) + " in " + path +
                                  ": " + line);
    apply_setting(s, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return s;
}

std::string canonical_echo(const RunSettings& s) {
  const ProblemSpec spec = s.make_spec();
  const TrainConfig& t = s.train;
  std::string out;
  auto kv = [&out](const char* k, const std::string& v) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  };
  kv("scenario", s.scenario);
  kv("stages", std::to_string(t.stages));
  kv("steps_per_stage", std::to_string(t.steps_per_stage));
  kv("k_samples", std::to_string(t.k_samples));
  kv("onpolicy_batch", std::to_string(t.onpolicy_n()));
  kv("offpolicy_batch", std::to_string(t.offpolicy_n()));
  kv("buffer_capacity", std::to_string(t.buffer_capacity));
  kv("eval_samples", std::to_string(t.eval_samples));
  kv("hidden", std::to_string(t.hidden));
  kv("lr", fmt_double(t.lr));
  kv("adam_beta1", fmt_double(t.adam_beta1));
  kv("adam_beta2", fmt_double(t.adam_beta2));
  kv("adam_eps", fmt_double(t.adam_eps));
  kv("seed", std::to_string(t.seed));
  kv("w_ipf", fmt_double(t.weights.w_ipf));
  kv("w_td", fmt_double(t.weights.w_td));
  kv("w_fm", fmt_double(t.weights.w_fm));
  kv("w_pv", fmt_double(t.weights.w_pv));
  kv("w_tdp", fmt_double(t.weights.w_tdp));
  kv("td_mode", td_mode_name(t.td_mode));
  kv("td_cross", td_cross_name(t.td_cross));
  kv("fm_sign", fm_sign_name(t.fm_sign));
  kv("fm_couples", fm_couples_name(t.fm_couples));
  kv("sigma", fmt_double(spec.sigma));
  kv("horizon", fmt_double(spec.horizon));
  kv("dt", fmt_double(spec.dt));
  kv("n_steps", std::to_string(spec.n_steps()));
  kv("obstacle_weight", fmt_double(spec.obstacle_weight));
  kv("entropy_weight", fmt_double(spec.entropy_weight));
  return out;
}

std::uint64_t settings_hash(const RunSettings& s) {
  const std::string echo = canonical_echo(s);
  return fnv1a(echo.data(), echo.size());
}

}  // namespace mfsb
