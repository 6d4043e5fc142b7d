#pragma once

#include "mfsb/sde.hpp"

namespace mfsb {

// Fraction of samples assigned to each target-mixture component. A sample is
// assigned to the nearest component mean when within `radius` of it and is
// otherwise unassigned, so the fractions sum to at most 1. The target must be
// a mixture (at least two components).
Eigen::VectorXd mode_coverage(const Mat2X& samples, const ProblemSpec& spec,
                              double radius = 3.0);

// Fraction of all (sample, step) states inside a blocked region.
double collision_rate(const TrajectoryBatch& batch, const ProblemSpec& spec);

// Energy distance 2 E||A-B|| - E||A-A'|| - E||B-B'|| with exact pairwise
// sums (V-statistic: diagonals included, so identical sets give exactly 0).
double energy_distance(const Mat2X& a, const Mat2X& b);

}  // namespace mfsb
