#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "mfsb/rng.hpp"

namespace mfsb {

using Vec2 = Eigen::Vector2d;
using Mat2X = Eigen::Matrix2Xd;

// One Gaussian component with isotropic covariance cov_scale * I.
struct MixtureComponent {
  double weight = 1.0;
  Vec2 mean = Vec2::Zero();
  double cov_scale = 1.0;
};

// A Gaussian (single component) or Gaussian mixture on R^2.
struct DistributionSpec {
  std::vector<MixtureComponent> components;

  static DistributionSpec gaussian(const Vec2& mean, double cov_scale);
  static DistributionSpec mixture(std::vector<MixtureComponent> components);

  bool is_gaussian() const { return components.size() == 1; }
  void validate() const;
};

struct Circle {
  Vec2 center = Vec2::Zero();
  double radius = 1.0;
};

// Blocked regions: a list of circular discs, or the V-neck complement
// { x : x2^2 > alpha * x1^2 + c_sq }. An empty circle list means free space.
struct ObstacleSet {
  enum class Kind { Circles, VNeck };
  // Indicator is the hard occupancy penalty; SmoothHinge is a squared hinge
  // on the boundary margin for experiments that want a differentiable cost.
  enum class PenaltyForm { Indicator, SmoothHinge };

  Kind kind = Kind::Circles;
  std::vector<Circle> circles;
  double c_sq = 0.36;
  double alpha = 5.0;
  PenaltyForm form = PenaltyForm::Indicator;
};

enum class DriftKind { Zero, Linear };

// Full problem description: marginals, dynamics constants, obstacle layout
// and the mean-field cost weights.
struct ProblemSpec {
  std::string label = "custom";
  int dim = 2;
  double sigma = 1.0;
  double horizon = 1.0;
  double dt = 0.01;
  DistributionSpec source;
  DistributionSpec target;
  ObstacleSet obstacles;
  double obstacle_weight = 1500.0;  // lambda_obs
  double entropy_weight = 0.0;      // lambda_ent
  DriftKind drift_kind = DriftKind::Zero;
  double drift_scale = 0.0;  // base drift f(x) = drift_scale * x when Linear

  int n_steps() const;
  void validate() const;
};

// Built-in crowd-navigation benchmarks.
ProblemSpec make_gmm_spec();
ProblemSpec make_vneck_spec();

// Density / sampling.
double log_density(const DistributionSpec& dist, const Vec2& x);
Vec2 sample_point(const DistributionSpec& dist, Rng& rng);
Mat2X sample_dist(const DistributionSpec& dist, int n, Rng& rng);

// Obstacles and state cost. in_blocked_region is the geometric test and is
// independent of the penalty form; obstacle_penalty is the configured cost.
bool in_blocked_region(const ObstacleSet& obstacles, const Vec2& x);
double obstacle_penalty(const ObstacleSet& obstacles, const Vec2& x);

// Mean-field cost F(x, rho) = lambda_obs * penalty(x) + lambda_ent * log rho.
double mf_cost(const ProblemSpec& spec, const Vec2& x, double log_rho);

// Base drift hook. The density argument keeps the signature mean-field-aware
// for extensions; the built-in drifts ignore it.
Vec2 base_drift(const ProblemSpec& spec, const Vec2& x, double t,
                double log_rho = 0.0);
double base_drift_divergence(const ProblemSpec& spec, const Vec2& x, double t);

}  // namespace mfsb
