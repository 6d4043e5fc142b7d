#include "mfsb/sde.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mfsb {

const char* direction_name(Direction d) {
  return d == Direction::Forward ? "forward" : "backward";
}

Mat2X base_drift_batch(const ProblemSpec& spec, const Mat2X& x, double t) {
  if (spec.drift_kind == DriftKind::Zero) return Mat2X::Zero(2, x.cols());
  (void)t;
  return spec.drift_scale * x;
}

namespace {

TrajectoryBatch simulate(const ProblemSpec& spec, const Mlp& policy, int n,
                         const Rng& rng, Direction dir, long policy_version) {
  if (n < 1) throw std::invalid_argument("simulate: need n >= 1");
  if (policy.out_dim() != spec.dim || policy.in_dim() != spec.dim + 1)
    throw std::invalid_argument("simulate: policy dims do not match spec");
  spec.validate();

  const int N = spec.n_steps();
  TrajectoryBatch b;
  b.direction = dir;
  b.dt = spec.dt;
  b.horizon = spec.horizon;
  b.sigma = spec.sigma;
  b.n_samples = n;
  b.n_steps = N;
  b.policy_version = policy_version;
  b.x.assign(N + 1, Mat2X(2, n));
  b.z.assign(N + 1, Mat2X(2, n));
  b.dw.assign(N, Mat2X(2, n));

  const DistributionSpec& start =
      dir == Direction::Forward ? spec.source : spec.target;
  const Rng dir_rng = rng.substream(dir == Direction::Forward ? 1 : 2);
  const double root_dt = std::sqrt(spec.dt);
  for (int i = 0; i < n; ++i) {
    Rng s = dir_rng.substream(std::uint64_t(i));
    b.x[0].col(i) = sample_point(start, s);
    for (int k = 0; k < N; ++k) {
      b.dw[k](0, i) = root_dt * s.gaussian();
      b.dw[k](1, i) = root_dt * s.gaussian();
    }
  }

  Eigen::MatrixXd u(3, n);
  const double drift_sign = dir == Direction::Forward ? 1.0 : -1.0;
  for (int k = 0; k <= N; ++k) {
    const double t = b.physical_time(k);
    u.row(0).setConstant(t);
    u.bottomRows(2) = b.x[k];
    b.z[k] = mlp_forward(policy, u);
    if (k == N) break;
    Mat2X drift = drift_sign * base_drift_batch(spec, b.x[k], t) +
                  spec.sigma * b.z[k];
    b.x[k + 1] = b.x[k] + spec.dt * drift + spec.sigma * b.dw[k];
    if (!b.x[k + 1].allFinite()) {
      for (int i = 0; i < n; ++i)
        if (!b.x[k + 1].col(i).allFinite()) {
          std::ostringstream msg;
          msg << "simulation diverged: non-finite state, direction="
              << direction_name(dir) << " step=" << k + 1 << " sample=" << i;
          throw std::runtime_error(msg.str());
        }
    }
  }
  return b;
}

}  // namespace

TrajectoryBatch simulate_forward(const ProblemSpec& spec, const Mlp& policy,
                                 int n, const Rng& rng, long policy_version) {
  return simulate(spec, policy, n, rng, Direction::Forward, policy_version);
}

TrajectoryBatch simulate_backward(const ProblemSpec& spec, const Mlp& policy,
                                  int n, const Rng& rng, long policy_version) {
  return simulate(spec, policy, n, rng, Direction::Backward, policy_version);
}

FieldEvals eval_fields_along(const TrajectoryBatch& batch,
                             const NetBundle& nets, const ProblemSpec& spec,
                             DivNeed div_need) {
  const int n = batch.n_samples;
  const int N = batch.n_steps;
  const long P = long(n) * (N + 1);

  Eigen::MatrixXd u_all(3, P);
  for (int k = 0; k <= N; ++k) {
    u_all.block(0, long(k) * n, 1, n).setConstant(batch.physical_time(k));
    u_all.block(1, long(k) * n, 2, n) = batch.x[k];
  }

  FieldEvals fe;
  const Eigen::MatrixXd y_all = mlp_forward(nets.y_fwd, u_all);
  const Eigen::MatrixXd yhat_all = mlp_forward(nets.y_bwd, u_all);
  const Eigen::MatrixXd z_all = mlp_forward(nets.z_fwd, u_all);
  const Eigen::MatrixXd zhat_all = mlp_forward(nets.z_bwd, u_all);
  const bool want_fwd_div = div_need != DivNeed::BackwardOnly;
  const bool want_bwd_div = div_need != DivNeed::ForwardOnly;
  const Eigen::VectorXd div_z_all =
      want_fwd_div ? mlp_divergence(nets.z_fwd, u_all)
                   : Eigen::VectorXd(Eigen::VectorXd::Zero(P));
  const Eigen::VectorXd div_zhat_all =
      want_bwd_div ? mlp_divergence(nets.z_bwd, u_all)
                   : Eigen::VectorXd(Eigen::VectorXd::Zero(P));

  fe.y.resize(n, N + 1);
  fe.yhat.resize(n, N + 1);
  fe.div_z.resize(n, N + 1);
  fe.div_zhat.resize(n, N + 1);
  fe.z.assign(N + 1, Mat2X(2, n));
  fe.zhat.assign(N + 1, Mat2X(2, n));
  fe.f.assign(N + 1, Mat2X(2, n));
  for (int k = 0; k <= N; ++k) {
    const long off = long(k) * n;
    fe.y.col(k) = y_all.middleCols(off, n).transpose();
    fe.yhat.col(k) = yhat_all.middleCols(off, n).transpose();
    fe.div_z.col(k) = div_z_all.segment(off, n);
    fe.div_zhat.col(k) = div_zhat_all.segment(off, n);
    fe.z[k] = z_all.middleCols(off, n);
    fe.zhat[k] = zhat_all.middleCols(off, n);
    fe.f[k] = base_drift_batch(spec, batch.x[k], batch.physical_time(k));
  }
  fe.log_rho_hat = fe.y + fe.yhat;
  fe.big_f.resize(n, N + 1);
  for (int k = 0; k <= N; ++k)
    for (int i = 0; i < n; ++i)
      fe.big_f(i, k) =
          mf_cost(spec, batch.x[k].col(i), fe.log_rho_hat(i, k));
  return fe;
}

TrajectoryBatch subsample(const TrajectoryBatch& batch,
                          const std::vector<int>& indices) {
  TrajectoryBatch out;
  out.direction = batch.direction;
  out.dt = batch.dt;
  out.horizon = batch.horizon;
  out.sigma = batch.sigma;
  out.n_samples = int(indices.size());
  out.n_steps = batch.n_steps;
  out.policy_version = batch.policy_version;
  auto pick = [&](const std::vector<Mat2X>& src) {
    std::vector<Mat2X> dst(src.size(), Mat2X(2, long(indices.size())));
    for (size_t k = 0; k < src.size(); ++k)
      for (size_t j = 0; j < indices.size(); ++j)
        dst[k].col(j) = src[k].col(indices[j]);
    return dst;
  };
  out.x = pick(batch.x);
  out.z = pick(batch.z);
  out.dw = pick(batch.dw);
  return out;
}

void export_csv(const TrajectoryBatch& batch, std::ostream& os) {
  os << "direction,sample_id,step,t,x1,x2\n";
  char buf[160];
  for (int i = 0; i < batch.n_samples; ++i)
    for (int k = 0; k <= batch.n_steps; ++k) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.17g,%.17g,%.17g\n",
                    direction_name(batch.direction), i, k,
                    batch.physical_time(k), batch.x[k](0, i),
                    batch.x[k](1, i));
      os << buf;
    }
}

}  // namespace mfsb
