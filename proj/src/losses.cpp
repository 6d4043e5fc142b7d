#include "mfsb/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace mfsb {

namespace {

void require_direction(const TrajectoryBatch& batch, Direction want,
                       const char* who) {
  if (batch.direction != want)
    throw std::invalid_argument(std::string(who) + ": needs a " +
                                direction_name(want) + " batch");
}

// Stacked (t; x) inputs over steps k = 0..n_keep-1, n_samples columns per
// step (step k occupies columns k*n .. k*n+n-1).
Eigen::MatrixXd stack_inputs(const TrajectoryBatch& b, int n_keep) {
  const int n = b.n_samples;
  Eigen::MatrixXd u(3, long(n_keep) * n);
  for (int k = 0; k < n_keep; ++k) {
    u.block(0, long(k) * n, 1, n).setConstant(b.physical_time(k));
    u.block(1, long(k) * n, 2, n) = b.x[k];
  }
  return u;
}

Eigen::MatrixXd stack_steps(const std::vector<Mat2X>& v, int n_keep) {
  const long n = v.empty() ? 0 : v[0].cols();
  Eigen::MatrixXd m(2, long(n_keep) * n);
  for (int k = 0; k < n_keep; ++k) m.middleCols(long(k) * n, n) = v[k];
  return m;
}

LossResult ipf_impl(const TrajectoryBatch& batch, const Mlp& trainee,
                    const ProblemSpec& spec, double f_sign) {
  const int n = batch.n_samples;
  const int N = batch.n_steps;
  const long P = long(N) * n;
  const double scale = batch.dt / double(n);

  const Eigen::MatrixXd u = stack_inputs(batch, N);
  const Eigen::MatrixXd partner = stack_steps(batch.z, N);
  MlpCache cache;
  const Eigen::MatrixXd& out = mlp_forward_cached(trainee, u, cache);
  const Eigen::VectorXd& div = mlp_divergence_cached(trainee, cache);
  // Both built-in drift kinds have state-independent divergence.
  const double f_div =
      f_sign * base_drift_divergence(spec, Vec2::Zero(), 0.0);

  LossResult res;
  res.value = scale * (0.5 * out.squaredNorm() +
                       (out.array() * partner.array()).sum() +
                       batch.sigma * div.sum() + f_div * double(P));
  const Eigen::MatrixXd out_adj = scale * (out + partner);
  const Eigen::VectorXd div_adj =
      Eigen::VectorXd::Constant(P, scale * batch.sigma);
  res.grad = mlp_param_grad_div(trainee, cache, out_adj, div_adj);
  return res;
}

}  // namespace

LossResult ipf_loss_theta(const TrajectoryBatch& batch, const NetBundle& nets,
                          const ProblemSpec& spec) {
  require_direction(batch, Direction::Backward, "ipf_loss_theta");
  return ipf_impl(batch, nets.z_fwd, spec, +1.0);
}

LossResult ipf_loss_phi(const TrajectoryBatch& batch, const NetBundle& nets,
                        const ProblemSpec& spec) {
  require_direction(batch, Direction::Forward, "ipf_loss_phi");
  return ipf_impl(batch, nets.z_bwd, spec, -1.0);
}

TdTargets td_targets(const TrajectoryBatch& batch, const NetBundle& nets,
                     const ProblemSpec& spec, TdMode mode, TdCross cross) {
  const int n = batch.n_samples;
  const int N = batch.n_steps;
  const bool fwd = batch.direction == Direction::Forward;
  // Only the trained head's side of the divergence enters the increments.
  const FieldEvals fe = eval_fields_along(
      batch, nets, spec, fwd ? DivNeed::BackwardOnly : DivNeed::ForwardOnly);

  TdTargets out;
  out.direction = batch.direction;
  out.mode = mode;
  out.cross = cross;
  out.target.resize(n, N + 1);
  out.head = fwd ? fe.yhat : fe.y;

  // Boundary target anchors the trained head to the prescribed marginal at
  // the batch's own start: log rho minus the partner head.
  const DistributionSpec& start = fwd ? spec.source : spec.target;
  Eigen::VectorXd boundary(n);
  for (int i = 0; i < n; ++i)
    boundary(i) = log_density(start, batch.x[0].col(i));
  out.target.col(0) =
      boundary - (fwd ? fe.y.col(0) : fe.yhat.col(0));

  const double f_div = base_drift_divergence(spec, Vec2::Zero(), 0.0);
  for (int k = 0; k < N; ++k) {
    const Mat2X& p = fwd ? fe.zhat[k] : fe.z[k];
    const Mat2X& q = fwd ? fe.z[k] : fe.zhat[k];
    const Eigen::ArrayXd half_sq = 0.5 * p.colwise().squaredNorm().transpose().array();
    Eigen::ArrayXd div_term(n);
    if (fwd)
      div_term = batch.sigma * fe.div_zhat.col(k).array() - f_div;
    else
      div_term = batch.sigma * fe.div_z.col(k).array() + f_div;
    Eigen::ArrayXd cross_term(n);
    switch (cross) {
      case TdCross::Asymmetric:
        if (fwd)
          cross_term = 2.0 * half_sq;
        else
          cross_term = (p.array() * q.array()).colwise().sum().transpose();
        break;
      case TdCross::Cross:
        cross_term = (p.array() * q.array()).colwise().sum().transpose();
        break;
      case TdCross::Cross2:
        cross_term =
            2.0 * ((p.array() * q.array()).colwise().sum().transpose());
        break;
    }
    const Eigen::ArrayXd noise =
        (p.array() * batch.dw[k].array()).colwise().sum().transpose();
    const Eigen::VectorXd inc =
        ((half_sq + div_term + cross_term - fe.big_f.col(k).array()) * batch.dt +
         noise)
            .matrix();
    out.target.col(k + 1) =
        (mode == TdMode::Single ? out.head.col(k) : out.target.col(k)) + inc;
  }
  return out;
}

namespace {

LossResult td_impl(const TrajectoryBatch& batch, const TdTargets& tgt,
                   const Mlp& head) {
  if (tgt.direction != batch.direction)
    throw std::invalid_argument("td_loss: targets built on other direction");
  const int n = batch.n_samples;
  const int N = batch.n_steps;
  if (tgt.target.rows() != n || tgt.target.cols() != N + 1)
    throw std::invalid_argument("td_loss: target shape mismatch");
  const double scale = batch.dt / double(n);

  const Eigen::MatrixXd u = stack_inputs(batch, N);
  MlpCache cache;
  const Eigen::MatrixXd& out = mlp_forward_cached(head, u, cache);

  Eigen::MatrixXd adj(1, out.cols());
  LossResult res;
  for (int k = 0; k < N; ++k)
    for (int i = 0; i < n; ++i) {
      const double r = out(0, long(k) * n + i) - tgt.target(i, k);
      res.value += scale * std::abs(r);
      adj(0, long(k) * n + i) = scale * (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0));
    }
  res.grad = mlp_param_grad(head, cache, adj);
  return res;
}

}  // namespace

LossResult td_loss_theta(const TrajectoryBatch& batch, const TdTargets& tgt,
                         const NetBundle& nets) {
  require_direction(batch, Direction::Backward, "td_loss_theta");
  return td_impl(batch, tgt, nets.y_fwd);
}

LossResult td_loss_phi(const TrajectoryBatch& batch, const TdTargets& tgt,
                       const NetBundle& nets) {
  require_direction(batch, Direction::Forward, "td_loss_phi");
  return td_impl(batch, tgt, nets.y_bwd);
}

LossResult td_policy_loss(const TrajectoryBatch& batch, const TdTargets& tgt,
                          const NetBundle& nets) {
  if (tgt.direction != batch.direction)
    throw std::invalid_argument(
        "td_policy_loss: targets built on other direction");
  const int n = batch.n_samples;
  const int N = batch.n_steps;
  if (tgt.target.rows() != n || tgt.target.cols() != N + 1 ||
      tgt.head.rows() != n || tgt.head.cols() != N + 1)
    throw std::invalid_argument("td_policy_loss: target shape mismatch");
  const bool fwd = batch.direction == Direction::Forward;
  const Mlp& trainee = fwd ? nets.z_bwd : nets.z_fwd;
  const Mlp& partner = fwd ? nets.z_fwd : nets.z_bwd;
  const double scale = batch.dt / double(n);

  // L1 subgradient signs of the residuals over steps 0..N-1, matching the
  // value-head loss exactly.
  LossResult res;
  Eigen::MatrixXd sgn(n, N);
  for (int k = 0; k < N; ++k)
    for (int i = 0; i < n; ++i) {
      const double r = tgt.head(i, k) - tgt.target(i, k);
      res.value += scale * std::abs(r);
      sgn(i, k) = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    }

  // Weight on increment j: minus the scaled signs of every residual whose
  // target contains that increment — the next residual in single-step mode,
  // the whole remaining suffix in multi-step mode. The final increment
  // never enters a residual in either mode.
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, N);
  if (tgt.mode == TdMode::Single) {
    for (int j = 0; j + 1 < N; ++j) w.col(j) = -scale * sgn.col(j + 1);
  } else {
    Eigen::VectorXd suffix = Eigen::VectorXd::Zero(n);
    for (int j = N - 2; j >= 0; --j) {
      suffix += sgn.col(j + 1);
      w.col(j) = -scale * suffix;
    }
  }

  // d(inc)/d(policy): (a_p * p + a_q * q) * dt from the quadratic and cross
  // terms, the stored noise from the martingale term, and sigma * dt through
  // the divergence channel.
  double a_p = 1.0, a_q = 0.0;
  switch (tgt.cross) {
    case TdCross::Asymmetric:
      if (fwd)
        a_p += 2.0;
      else
        a_q += 1.0;
      break;
    case TdCross::Cross:
      a_q += 1.0;
      break;
    case TdCross::Cross2:
      a_q += 2.0;
      break;
  }

  const Eigen::MatrixXd u = stack_inputs(batch, N);
  MlpCache cache;
  const Eigen::MatrixXd& p = mlp_forward_cached(trainee, u, cache);
  mlp_divergence_cached(trainee, cache);
  const Eigen::MatrixXd q = mlp_forward(partner, u);

  Eigen::MatrixXd out_adj(2, p.cols());
  Eigen::VectorXd div_adj(p.cols());
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < n; ++i) {
      const long c = long(j) * n + i;
      const double wij = w(i, j);
      out_adj.col(c) =
          wij * (batch.dt * (a_p * p.col(c) + a_q * q.col(c)) +
                 batch.dw[j].col(i));
      div_adj(c) = wij * batch.sigma * batch.dt;
    }
  res.grad = mlp_param_grad_div(trainee, cache, out_adj, div_adj);
  return res;
}

PairSet endpoint_couples(const TrajectoryBatch& batch) {
  PairSet p;
  if (batch.direction == Direction::Forward) {
    p.x0 = batch.x.front();
    p.x1 = batch.x.back();
  } else {
    p.x0 = batch.x.back();
    p.x1 = batch.x.front();
  }
  return p;
}

LossResult fm_train_loss(const PairSet& pairs, const Eigen::VectorXd& times,
                         const Mlp& vel) {
  const long n = pairs.x0.cols();
  if (n == 0 || pairs.x1.cols() != n || times.size() != n)
    throw std::invalid_argument("fm_train_loss: empty or mismatched pairs");
  Eigen::MatrixXd u(3, n);
  u.row(0) = times.transpose();
  u.bottomRows(2) =
      (pairs.x0.array().rowwise() * (1.0 - times.transpose().array()) +
       pairs.x1.array().rowwise() * times.transpose().array())
          .matrix();
  MlpCache cache;
  const Eigen::MatrixXd& out = mlp_forward_cached(vel, u, cache);
  const Eigen::MatrixXd diff = out - (pairs.x1 - pairs.x0);
  LossResult res;
  res.value = diff.squaredNorm() / double(n);
  res.grad = mlp_param_grad(vel, cache, (2.0 / double(n)) * diff);
  return res;
}

LossResult fm_train_step(const PairSet& pairs, const Mlp& vel, Rng& rng) {
  Eigen::VectorXd times(pairs.x0.cols());
  for (long i = 0; i < times.size(); ++i) times(i) = rng.uniform();
  return fm_train_loss(pairs, times, vel);
}

LossResult fm_policy_loss(const TrajectoryBatch& batch, const NetBundle& nets,
                          const ProblemSpec& spec, const LossWeights& weights,
                          FmSign sign) {
  const bool fwd_batch = batch.direction == Direction::Forward;
  const Mlp& trainee = fwd_batch ? nets.z_bwd : nets.z_fwd;
  LossResult res;
  res.grad = Mlp::zeros(trainee.in_dim(), trainee.hidden_dim(),
                        trainee.out_dim());
  if (weights.w_fm == 0.0 || nets.a_vel.steps == 0) return res;

  const int n = batch.n_samples;
  const int N = batch.n_steps;
  const double scale = weights.w_fm * batch.dt / double(n);

  const Eigen::MatrixXd u = stack_inputs(batch, N);
  MlpCache cache;
  const Eigen::MatrixXd& pol = mlp_forward_cached(trainee, u, cache);
  const Eigen::MatrixXd u_vel = mlp_forward(nets.vel, u);
  Eigen::MatrixXd f(2, u.cols());
  for (int k = 0; k < N; ++k)
    f.middleCols(long(k) * n, n) =
        base_drift_batch(spec, batch.x[k], batch.physical_time(k));

  // BatchDirection keys the drift/velocity signs to the batch direction,
  // TraineeDirection to the trainee's own direction (the batch's opposite).
  const bool drift_fwd =
      sign == FmSign::BatchDirection ? fwd_batch : !fwd_batch;
  Eigen::MatrixXd r = drift_fwd ? (f + batch.sigma * pol - u_vel).eval()
                                : (-f + batch.sigma * pol + u_vel).eval();
  res.value = scale * r.squaredNorm();
  res.grad = mlp_param_grad(trainee, cache, (2.0 * scale * batch.sigma) * r);
  return res;
}

LossResult pv_loss(const TrajectoryBatch& batch, const NetBundle& nets,
                   const ProblemSpec& spec, const LossWeights& weights) {
  (void)spec;
  const bool fwd_batch = batch.direction == Direction::Forward;
  const Mlp& trainee = fwd_batch ? nets.z_bwd : nets.z_fwd;
  const Mlp& value = fwd_batch ? nets.y_bwd : nets.y_fwd;
  LossResult res;
  res.grad = Mlp::zeros(trainee.in_dim(), trainee.hidden_dim(),
                        trainee.out_dim());
  if (weights.w_pv == 0.0) return res;

  const int n = batch.n_samples;
  const int N = batch.n_steps;
  const double scale = weights.w_pv * batch.dt / double(n);

  const Eigen::MatrixXd u = stack_inputs(batch, N);
  MlpCache vcache;
  mlp_forward_cached(value, u, vcache);
  const Eigen::MatrixXd target = batch.sigma * mlp_input_spatial_grad(value, vcache);
  MlpCache pcache;
  const Eigen::MatrixXd& pol = mlp_forward_cached(trainee, u, pcache);
  const Eigen::MatrixXd r = pol - target;
  res.value = scale * r.squaredNorm();
  res.grad = mlp_param_grad(trainee, pcache, (2.0 * scale) * r);
  return res;
}

}  // namespace mfsb
