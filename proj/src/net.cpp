#include "mfsb/net.hpp"

#include <cmath>
#include <stdexcept>

namespace mfsb {

namespace {

// Elementwise sigmoid, SiLU, and its first two derivatives expressed through
// the cached sigmoid:
//   silu(z)   = z s,           s = sigmoid(z)
//   silu'(z)  = s (1 + z (1 - s))
//   silu''(z) = s (1 - s) (2 + z (1 - 2 s))
Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

Eigen::MatrixXd silu_d2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& sig) {
  return (sig.array() * (1.0 - sig.array()) *
          (2.0 + a.array() * (1.0 - 2.0 * sig.array())))
      .matrix();
}

void check_input(const Mlp& p, const Eigen::MatrixXd& input) {
  if (input.rows() != p.in_dim())
    throw std::invalid_argument("mlp: input row count does not match in_dim");
}

}  // namespace

long Mlp::param_count() const {
  return long(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() +
              b3.size());
}

void Mlp::set_zero() {
  w1.setZero();
  b1.setZero();
  w2.setZero();
  b2.setZero();
  w3.setZero();
  b3.setZero();
}

void Mlp::axpy(double a, const Mlp& g) {
  w1 += a * g.w1;
  b1 += a * g.b1;
  w2 += a * g.w2;
  b2 += a * g.b2;
  w3 += a * g.w3;
  b3 += a * g.b3;
}

double Mlp::squared_norm() const {
  return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() +
         b2.squaredNorm() + w3.squaredNorm() + b3.squaredNorm();
}

Mlp Mlp::zeros(int in, int hidden, int out) {
  Mlp p;
  p.w1 = Eigen::MatrixXd::Zero(hidden, in);
  p.b1 = Eigen::VectorXd::Zero(hidden);
  p.w2 = Eigen::MatrixXd::Zero(hidden, hidden);
  p.b2 = Eigen::VectorXd::Zero(hidden);
  p.w3 = Eigen::MatrixXd::Zero(out, hidden);
  p.b3 = Eigen::VectorXd::Zero(out);
  return p;
}

Mlp Mlp::he_init(int in, int hidden, int out, Rng& rng) {
  Mlp p = zeros(in, hidden, out);
  auto fill = [&rng](Eigen::MatrixXd& w) {
    const double bound = std::sqrt(6.0 / double(w.cols()));
    for (long c = 0; c < w.cols(); ++c)
      for (long r = 0; r < w.rows(); ++r)
        w(r, c) = bound * (2.0 * rng.uniform() - 1.0);
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.w3);
  return p;
}

Eigen::VectorXd flatten(const Mlp& p) {
  Eigen::VectorXd v(p.param_count());
  long off = 0;
  auto put = [&](const Eigen::MatrixXd& b) {
    v.segment(off, b.size()) = Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());
    off += b.size();
  };
  put(p.w1);
  put(p.b1);
  put(p.w2);
  put(p.b2);
  put(p.w3);
  put(p.b3);
  return v;
}

void unflatten(const Eigen::VectorXd& v, Mlp& p) {
  if (v.size() != p.param_count())
    throw std::invalid_argument("unflatten: size mismatch");
  long off = 0;
  auto take = [&](Eigen::MatrixXd& b) {
    Eigen::Map<Eigen::VectorXd>(b.data(), b.size()) = v.segment(off, b.size());
    off += b.size();
  };
  auto take_v = [&](Eigen::VectorXd& b) {
    b = v.segment(off, b.size());
    off += b.size();
  };
  take(p.w1);
  take_v(p.b1);
  take(p.w2);
  take_v(p.b2);
  take(p.w3);
  take_v(p.b3);
}

Eigen::MatrixXd mlp_forward(const Mlp& p, const Eigen::MatrixXd& input) {
  check_input(p, input);
  // Same operation order as the cached pass so both are bitwise identical.
  Eigen::MatrixXd a1 = (p.w1 * input).colwise() + p.b1;
  a1 = (a1.array() * (1.0 / (1.0 + (-a1.array()).exp()))).matrix();
  Eigen::MatrixXd a2 = (p.w2 * a1).colwise() + p.b2;
  a2 = (a2.array() * (1.0 / (1.0 + (-a2.array()).exp()))).matrix();
  return (p.w3 * a2).colwise() + p.b3;
}

const Eigen::MatrixXd& mlp_forward_cached(const Mlp& p,
                                          const Eigen::MatrixXd& input,
                                          MlpCache& cache) {
  check_input(p, input);
  cache.u = input;
  cache.a1 = (p.w1 * input).colwise() + p.b1;
  cache.sig1 = sigmoid(cache.a1);
  cache.s1 = (cache.a1.array() * cache.sig1.array()).matrix();
  cache.d1 = (cache.sig1.array() *
              (1.0 + cache.a1.array() * (1.0 - cache.sig1.array())))
                 .matrix();
  cache.a2 = (p.w2 * cache.s1).colwise() + p.b2;
  cache.sig2 = sigmoid(cache.a2);
  cache.s2 = (cache.a2.array() * cache.sig2.array()).matrix();
  cache.d2 = (cache.sig2.array() *
              (1.0 + cache.a2.array() * (1.0 - cache.sig2.array())))
                 .matrix();
  cache.out = (p.w3 * cache.s2).colwise() + p.b3;
  cache.has_div = false;
  return cache.out;
}

const Eigen::VectorXd& mlp_divergence_cached(const Mlp& p, MlpCache& cache) {
  const int d = p.in_dim() - 1;
  if (d != 2 || p.out_dim() != d)
    throw std::invalid_argument("mlp_divergence: needs out_dim == spatial dim == 2");
  const long n = cache.u.cols();
  cache.div = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < d; ++j) {
    // Tangent sweep for input direction e_{1+j}; the j-th output tangent is
    // this coordinate's contribution to the divergence.
    cache.div_t1[j] =
        (cache.d1.array().colwise() * p.w1.col(1 + j).array()).matrix();
    cache.div_a2t[j] = p.w2 * cache.div_t1[j];
    cache.div_t2[j] =
        (cache.d2.array() * cache.div_a2t[j].array()).matrix();
    cache.div.noalias() += cache.div_t2[j].transpose() * p.w3.row(j).transpose();
  }
  cache.has_div = true;
  return cache.div;
}

Eigen::VectorXd mlp_divergence(const Mlp& p, const Eigen::MatrixXd& input) {
  MlpCache cache;
  mlp_forward_cached(p, input, cache);
  return mlp_divergence_cached(p, cache);
}

Mlp mlp_param_grad(const Mlp& p, const MlpCache& cache,
                   const Eigen::MatrixXd& out_adjoint) {
  Mlp g = Mlp::zeros(p.in_dim(), p.hidden_dim(), p.out_dim());
  g.w3.noalias() = out_adjoint * cache.s2.transpose();
  g.b3 = out_adjoint.rowwise().sum();
  Eigen::MatrixXd ga2 =
      ((p.w3.transpose() * out_adjoint).array() * cache.d2.array()).matrix();
  g.w2.noalias() = ga2 * cache.s1.transpose();
  g.b2 = ga2.rowwise().sum();
  Eigen::MatrixXd ga1 =
      ((p.w2.transpose() * ga2).array() * cache.d1.array()).matrix();
  g.w1.noalias() = ga1 * cache.u.transpose();
  g.b1 = ga1.rowwise().sum();
  return g;
}

Mlp mlp_param_grad_div(const Mlp& p, const MlpCache& cache,
                       const Eigen::MatrixXd& out_adjoint,
                       const Eigen::VectorXd& div_adjoint) {
  if (!cache.has_div)
    throw std::invalid_argument("mlp_param_grad_div: cache has no divergence sweep");
  const int d = p.in_dim() - 1;
  Mlp g = Mlp::zeros(p.in_dim(), p.hidden_dim(), p.out_dim());

  g.w3.noalias() = out_adjoint * cache.s2.transpose();
  g.b3 = out_adjoint.rowwise().sum();

  // Adjoints of the SiLU-derivative fields; they re-enter the activation
  // chain through silu''.
  Eigen::MatrixXd gd1 = Eigen::MatrixXd::Zero(cache.d1.rows(), cache.d1.cols());
  Eigen::MatrixXd gd2 = Eigen::MatrixXd::Zero(cache.d2.rows(), cache.d2.cols());

  for (int j = 0; j < d; ++j) {
    g.w3.row(j).noalias() += (cache.div_t2[j] * div_adjoint).transpose();
    Eigen::MatrixXd gt2 = p.w3.row(j).transpose() * div_adjoint.transpose();
    gd2.array() += gt2.array() * cache.div_a2t[j].array();
    Eigen::MatrixXd ga2t = (gt2.array() * cache.d2.array()).matrix();
    g.w2.noalias() += ga2t * cache.div_t1[j].transpose();
    Eigen::MatrixXd gt1 = p.w2.transpose() * ga2t;
    gd1.array() += gt1.array().colwise() * p.w1.col(1 + j).array();
    g.w1.col(1 + j) += (gt1.array() * cache.d1.array()).matrix().rowwise().sum();
  }

  Eigen::MatrixXd ga2 =
      ((p.w3.transpose() * out_adjoint).array() * cache.d2.array() +
       gd2.array() * silu_d2(cache.a2, cache.sig2).array())
          .matrix();
  g.w2.noalias() += ga2 * cache.s1.transpose();
  g.b2 = ga2.rowwise().sum();
  Eigen::MatrixXd ga1 =
      ((p.w2.transpose() * ga2).array() * cache.d1.array() +
       gd1.array() * silu_d2(cache.a1, cache.sig1).array())
          .matrix();
  g.w1.noalias() += ga1 * cache.u.transpose();
  g.b1 = ga1.rowwise().sum();
  return g;
}

Eigen::MatrixXd mlp_input_spatial_grad(const Mlp& p, const MlpCache& cache) {
  if (p.out_dim() != 1)
    throw std::invalid_argument("mlp_input_spatial_grad: needs out_dim == 1");
  Eigen::MatrixXd x2 =
      (cache.d2.array().colwise() * p.w3.row(0).transpose().array()).matrix();
  Eigen::MatrixXd x1 =
      ((p.w2.transpose() * x2).array() * cache.d1.array()).matrix();
  Eigen::MatrixXd gin = p.w1.transpose() * x1;
  return gin.bottomRows(p.in_dim() - 1);
}

Eigen::VectorXd mlp_eval(const Mlp& p, double t, const Eigen::Vector2d& x) {
  Eigen::MatrixXd u(3, 1);
  u << t, x.x(), x.y();
  return mlp_forward(p, u).col(0);
}

double mlp_divergence_at(const Mlp& p, double t, const Eigen::Vector2d& x) {
  Eigen::MatrixXd u(3, 1);
  u << t, x.x(), x.y();
  return mlp_divergence(p, u)(0);
}

AdamState AdamState::for_params(const Mlp& p, double lr, double beta1,
                                double beta2, double eps) {
  AdamState s;
  s.m = Mlp::zeros(p.in_dim(), p.hidden_dim(), p.out_dim());
  s.v = Mlp::zeros(p.in_dim(), p.hidden_dim(), p.out_dim());
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void adam_step(Mlp& params, const Mlp& grad, AdamState& st) {
  st.steps += 1;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.steps));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.steps));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = (st.beta2 * v.array() + (1.0 - st.beta2) * g.array().square()).matrix();
    p.array() -= st.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + st.eps);
  };
  update(params.w1, grad.w1, st.m.w1, st.v.w1);
  update(params.b1, grad.b1, st.m.b1, st.v.b1);
  update(params.w2, grad.w2, st.m.w2, st.v.w2);
  update(params.b2, grad.b2, st.m.b2, st.v.b2);
  update(params.w3, grad.w3, st.m.w3, st.v.w3);
  update(params.b3, grad.b3, st.m.b3, st.v.b3);
}

NetBundle NetBundle::init(int dim, int hidden, double lr, double beta1,
                          double beta2, double eps, const Rng& rng) {
  NetBundle b;
  auto make = [&](int out, std::uint64_t tag) {
    Rng sub = rng.substream(tag);
    return Mlp::he_init(1 + dim, hidden, out, sub);
  };
  b.z_fwd = make(dim, 11);
  b.z_bwd = make(dim, 12);
  b.y_fwd = make(1, 13);
  b.y_bwd = make(1, 14);
  b.vel = make(dim, 15);
  b.a_z_fwd = AdamState::for_params(b.z_fwd, lr, beta1, beta2, eps);
  b.a_z_bwd = AdamState::for_params(b.z_bwd, lr, beta1, beta2, eps);
  b.a_y_fwd = AdamState::for_params(b.y_fwd, lr, beta1, beta2, eps);
  b.a_y_bwd = AdamState::for_params(b.y_bwd, lr, beta1, beta2, eps);
  b.a_vel = AdamState::for_params(b.vel, lr, beta1, beta2, eps);
  return b;
}

}  // namespace mfsb
