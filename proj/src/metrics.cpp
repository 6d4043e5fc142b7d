#include "mfsb/metrics.hpp"

#include <stdexcept>

namespace mfsb {

Eigen::VectorXd mode_coverage(const Mat2X& samples, const ProblemSpec& spec,
                              double radius) {
  const auto& comps = spec.target.components;
  if (comps.size() < 2)
    throw std::invalid_argument(
        "mode_coverage: target must be a mixture of modes");
  if (samples.cols() == 0)
    throw std::invalid_argument("mode_coverage: no samples");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(long(comps.size()));
  for (long i = 0; i < samples.cols(); ++i) {
    long best = -1;
    double best_d = radius;
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const double d = (samples.col(i) - comps[c].mean).norm();
      if (d <= best_d) {
        best_d = d;
        best = long(c);
      }
    }
    if (best >= 0) counts(best) += 1.0;
  }
  return counts / double(samples.cols());
}

double collision_rate(const TrajectoryBatch& batch, const ProblemSpec& spec) {
  long hits = 0;
  long total = 0;
  for (const Mat2X& xk : batch.x) {
    for (long i = 0; i < xk.cols(); ++i)
      hits += in_blocked_region(spec.obstacles, xk.col(i)) ? 1 : 0;
    total += xk.cols();
  }
  return total == 0 ? 0.0 : double(hits) / double(total);
}

namespace {

double mean_pairwise(const Mat2X& a, const Mat2X& b) {
  double sum = 0.0;
  for (long j = 0; j < b.cols(); ++j)
    sum += (a.colwise() - b.col(j)).colwise().norm().sum();
  return sum / (double(a.cols()) * double(b.cols()));
}

}  // namespace

double energy_distance(const Mat2X& a, const Mat2X& b) {
  if (a.cols() < 1 || b.cols() < 1)
    throw std::invalid_argument("energy_distance: empty sample set");
  return 2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) -
         mean_pairwise(b, b);
}

}  // namespace mfsb
