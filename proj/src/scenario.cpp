#include "mfsb/scenario.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mfsb {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double gaussian_log_density(const Vec2& x, const Vec2& mean, double cov_scale) {
  const double r2 = (x - mean).squaredNorm();
  return -std::log(kTwoPi * cov_scale) - 0.5 * r2 / cov_scale;
}
}  // namespace

DistributionSpec DistributionSpec::gaussian(const Vec2& mean,
                                            double cov_scale) {
  DistributionSpec d;
  d.components.push_back({1.0, mean, cov_scale});
  d.validate();
  return d;
}

DistributionSpec DistributionSpec::mixture(
    std::vector<MixtureComponent> components) {
  DistributionSpec d;
  d.components = std::move(components);
  d.validate();
  return d;
}

void DistributionSpec::validate() const {
  if (components.empty()) {
    throw std::invalid_argument("DistributionSpec: no components");
  }
  double wsum = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0)) {
      throw std::invalid_argument("DistributionSpec: weights must be positive");
    }
    if (!(c.cov_scale > 0.0)) {
      throw std::invalid_argument(
          "DistributionSpec: cov_scale must be positive");
    }
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw std::invalid_argument("DistributionSpec: weights must sum to 1");
  }
}

int ProblemSpec::n_steps() const {
  const double ratio = horizon / dt;
  const int n = int(std::lround(ratio));
  if (n < 1 || std::abs(ratio - double(n)) > 1e-9) {
    throw std::invalid_argument(
        "ProblemSpec: horizon must be an integer multiple of dt");
  }
  return n;
}

void ProblemSpec::validate() const {
  if (dim != 2) throw std::invalid_argument("ProblemSpec: dim must be 2");
  if (!(dt > 0.0)) throw std::invalid_argument("ProblemSpec: dt must be > 0");
  if (!(horizon > 0.0)) {
    throw std::invalid_argument("ProblemSpec: horizon must be > 0");
  }
  if (sigma < 0.0) {
    throw std::invalid_argument("ProblemSpec: sigma must be >= 0");
  }
  (void)n_steps();
  if (obstacle_weight < 0.0) {
    throw std::invalid_argument("ProblemSpec: obstacle_weight must be >= 0");
  }
  source.validate();
  target.validate();
  if (obstacles.kind == ObstacleSet::Kind::Circles) {
    for (const auto& c : obstacles.circles) {
      if (!(c.radius > 0.0)) {
        throw std::invalid_argument("ObstacleSet: radius must be > 0");
      }
    }
  } else {
    if (!(obstacles.c_sq > 0.0) || !(obstacles.alpha > 0.0)) {
      throw std::invalid_argument("ObstacleSet: c_sq and alpha must be > 0");
    }
  }
}

ProblemSpec make_gmm_spec() {
  ProblemSpec spec;
  spec.label = "gmm";
  spec.source = DistributionSpec::gaussian(Vec2::Zero(), 1.0);

  std::vector<MixtureComponent> comps;
  const int k = 8;
  const double radius = 16.0;
  for (int i = 1; i <= k; ++i) {
    const double angle = kTwoPi * double(i) / double(k);
    comps.push_back(
        {1.0 / k, Vec2(radius * std::cos(angle), radius * std::sin(angle)),
         1.0});
  }
  spec.target = DistributionSpec::mixture(std::move(comps));

  spec.obstacles.kind = ObstacleSet::Kind::Circles;
  spec.obstacles.circles = {{Vec2(6.0, 6.0), 1.5},
                            {Vec2(6.0, -6.0), 1.5},
                            {Vec2(-6.0, -6.0), 1.5}};
  spec.validate();
  return spec;
}

ProblemSpec make_vneck_spec() {
  ProblemSpec spec;
  spec.label = "vneck";
  spec.source = DistributionSpec::gaussian(Vec2(-7.0, 0.0), 0.2);
  spec.target = DistributionSpec::gaussian(Vec2(7.0, 0.0), 0.2);
  spec.obstacles.kind = ObstacleSet::Kind::VNeck;
  spec.obstacles.c_sq = 0.36;
  spec.obstacles.alpha = 5.0;
  spec.validate();
  return spec;
}

double log_density(const DistributionSpec& dist, const Vec2& x) {
  // Log-sum-exp over components; exact for a single Gaussian.
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : dist.components) {
    const double lg = std::log(c.weight) + gaussian_log_density(x, c.mean, c.cov_scale);
    if (lg > best) best = lg;
  }
  double acc = 0.0;
  for (const auto& c : dist.components) {
    const double lg = std::log(c.weight) + gaussian_log_density(x, c.mean, c.cov_scale);
    acc += std::exp(lg - best);
  }
  return best + std::log(acc);
}

Vec2 sample_point(const DistributionSpec& dist, Rng& rng) {
  // Fixed draw order (component u, then two gaussians) so per-sample
  // substreams replay exactly.
  std::size_t idx = 0;
  if (dist.components.size() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    idx = dist.components.size() - 1;
    for (std::size_t i = 0; i < dist.components.size(); ++i) {
      acc += dist.components[i].weight;
      if (u < acc) {
        idx = i;
        break;
      }
    }
  }
  const auto& c = dist.components[idx];
  const double g0 = rng.gaussian();
  const double g1 = rng.gaussian();
  return c.mean + std::sqrt(c.cov_scale) * Vec2(g0, g1);
}

Mat2X sample_dist(const DistributionSpec& dist, int n, Rng& rng) {
  Mat2X out(2, n);
  for (int i = 0; i < n; ++i) out.col(i) = sample_point(dist, rng);
  return out;
}

bool in_blocked_region(const ObstacleSet& obstacles, const Vec2& x) {
  if (obstacles.kind == ObstacleSet::Kind::Circles) {
    for (const auto& c : obstacles.circles) {
      if ((x - c.center).squaredNorm() < c.radius * c.radius) return true;
    }
    return false;
  }
  return x[1] * x[1] > obstacles.alpha * x[0] * x[0] + obstacles.c_sq;
}

double obstacle_penalty(const ObstacleSet& obstacles, const Vec2& x) {
  if (obstacles.form == ObstacleSet::PenaltyForm::Indicator) {
    return in_blocked_region(obstacles, x) ? 1.0 : 0.0;
  }
  // Squared hinge on the boundary margin: zero outside, smooth inside.
  if (obstacles.kind == ObstacleSet::Kind::Circles) {
    double acc = 0.0;
    for (const auto& c : obstacles.circles) {
      const double h = c.radius - (x - c.center).norm();
      if (h > 0.0) acc += h * h;
    }
    return acc;
  }
  const double edge = std::sqrt(obstacles.alpha * x[0] * x[0] + obstacles.c_sq);
  const double h = std::abs(x[1]) - edge;
  return h > 0.0 ? h * h : 0.0;
}

double mf_cost(const ProblemSpec& spec, const Vec2& x, double log_rho) {
  return spec.obstacle_weight * obstacle_penalty(spec.obstacles, x) +
         spec.entropy_weight * log_rho;
}

Vec2 base_drift(const ProblemSpec& spec, const Vec2& x, double /*t*/,
                double /*log_rho*/) {
  switch (spec.drift_kind) {
    case DriftKind::Zero:
      return Vec2::Zero();
    case DriftKind::Linear:
      return spec.drift_scale * x;
  }
  return Vec2::Zero();
}

double base_drift_divergence(const ProblemSpec& spec, const Vec2& /*x*/,
                             double /*t*/) {
  switch (spec.drift_kind) {
    case DriftKind::Zero:
      return 0.0;
    case DriftKind::Linear:
      return 2.0 * spec.drift_scale;
  }
  return 0.0;
}

}  // namespace mfsb
