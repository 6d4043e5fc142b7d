#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mfsb/losses.hpp"
#include "mfsb/sde.hpp"

using namespace mfsb;

namespace {

Mlp random_policy(std::uint64_t seed) {
  Rng rng(seed);
  return Mlp::he_init(3, 16, 2, rng);
}

NetBundle zero_bundle(int hidden = 4) {
  Rng rng(0);
  NetBundle b = NetBundle::init(2, hidden, 1e-3, 0.9, 0.999, 1e-8, rng);
  b.z_fwd.set_zero();
  b.z_bwd.set_zero();
  b.y_fwd.set_zero();
  b.y_bwd.set_zero();
  b.vel.set_zero();
  return b;
}

}  // namespace

TEST_CASE("brownian variance and convolution covariance") {
  ProblemSpec spec = make_gmm_spec();
  Mlp zero = Mlp::zeros(3, 4, 2);
  Rng rng(11);
  const int n = 100000;

  // Near-deterministic start: Var(X_T) per coordinate ~ sigma^2 T = 1.
  ProblemSpec pinched = spec;
  pinched.source = DistributionSpec::gaussian(Vec2::Zero(), 1e-12);
  TrajectoryBatch a = simulate_forward(pinched, zero, n, rng);
  for (int j = 0; j < 2; ++j) {
    const Eigen::ArrayXd row = a.x.back().row(j).transpose().array();
    const double var = (row - row.mean()).square().sum() / double(n - 1);
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
  }

  // Unit-variance start: terminal covariance (1 + sigma^2 T) I = 2 I.
  TrajectoryBatch b = simulate_forward(spec, zero, n, rng.substream(99));
  Eigen::ArrayXd r0 = b.x.back().row(0).transpose().array();
  Eigen::ArrayXd r1 = b.x.back().row(1).transpose().array();
  r0 -= r0.mean();
  r1 -= r1.mean();
  CHECK(r0.square().sum() / double(n - 1) == doctest::Approx(2.0).epsilon(0.03));
  CHECK(r1.square().sum() / double(n - 1) == doctest::Approx(2.0).epsilon(0.03));
  CHECK(std::abs((r0 * r1).sum() / double(n - 1)) < 0.03);
}

TEST_CASE("frozen dynamics when sigma = 0") {
  ProblemSpec spec = make_gmm_spec();
  spec.sigma = 0.0;
  Mlp policy = random_policy(3);
  Rng rng(4);
  TrajectoryBatch b = simulate_forward(spec, policy, 16, rng);
  for (int k = 0; k <= b.n_steps; ++k)
    CHECK((b.x[k].array() == b.x[0].array()).all());
}

TEST_CASE("grid bookkeeping: 101 states, 100 noises, physical time") {
  ProblemSpec spec = make_gmm_spec();
  Mlp zero = Mlp::zeros(3, 4, 2);
  Rng rng(5);
  TrajectoryBatch f = simulate_forward(spec, zero, 3, rng);
  CHECK(f.n_steps == 100);
  CHECK(f.x.size() == 101);
  CHECK(f.z.size() == 101);
  CHECK(f.dw.size() == 100);
  CHECK(f.physical_time(0) == 0.0);
  CHECK(f.physical_time(100) == 1.0);
  TrajectoryBatch g = simulate_backward(spec, zero, 3, rng);
  CHECK(g.physical_time(0) == 1.0);
  CHECK(g.physical_time(100) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("backward zero-drift diffusion preserves the target mean") {
  ProblemSpec spec = make_vneck_spec();
  Mlp zero = Mlp::zeros(3, 4, 2);
  Rng rng(21);
  const int n = 100000;
  TrajectoryBatch b = simulate_backward(spec, zero, n, rng);
  const Vec2 mean = b.x.back().rowwise().mean();
  CHECK(std::abs(mean.x() - 7.0) < 0.05);
  CHECK(std::abs(mean.y() - 0.0) < 0.05);
}

TEST_CASE("forward and backward noise streams are independent") {
  ProblemSpec spec = make_gmm_spec();
  Mlp zero = Mlp::zeros(3, 4, 2);
  Rng rng(31);
  const int n = 1000;
  TrajectoryBatch f = simulate_forward(spec, zero, n, rng);
  TrajectoryBatch g = simulate_backward(spec, zero, n, rng);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int k = 0; k < f.n_steps; ++k) {
    dot += (f.dw[k].array() * g.dw[k].array()).sum();
    na += f.dw[k].squaredNorm();
    nb += g.dw[k].squaredNorm();
  }
  const double corr = dot / std::sqrt(na * nb);
  CHECK(std::abs(corr) < 3.0 / std::sqrt(double(n) * f.n_steps));
}

TEST_CASE("replay exactness from stored (x, z, dw)") {
  ProblemSpec spec = make_gmm_spec();
  Mlp policy = random_policy(8);
  Rng rng(9);
  TrajectoryBatch f = simulate_forward(spec, policy, 8, rng);
  for (int k = 0; k < f.n_steps; ++k) {
    Mat2X pred =
        f.x[k] + f.dt * (f.sigma * f.z[k]) + f.sigma * f.dw[k];  // f == 0
    CHECK((pred - f.x[k + 1]).cwiseAbs().maxCoeff() < 1e-12);
  }
  TrajectoryBatch g = simulate_backward(spec, policy, 8, rng);
  for (int k = 0; k < g.n_steps; ++k) {
    Mat2X pred = g.x[k] + g.dt * (g.sigma * g.z[k]) + g.sigma * g.dw[k];
    CHECK((pred - g.x[k + 1]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bitwise determinism and substream position independence") {
  ProblemSpec spec = make_vneck_spec();
  Mlp policy = random_policy(12);
  Rng rng(77);
  TrajectoryBatch a = simulate_forward(spec, policy, 5, rng);
  TrajectoryBatch b = simulate_forward(spec, policy, 5, rng);
  for (int k = 0; k <= a.n_steps; ++k) {
    CHECK((a.x[k].array() == b.x[k].array()).all());
    CHECK((a.z[k].array() == b.z[k].array()).all());
  }
  for (int k = 0; k < a.n_steps; ++k)
    CHECK((a.dw[k].array() == b.dw[k].array()).all());

  // Sample i's starting draw and noises depend only on its own substream,
  // not on the batch width. (Full states may differ at ULP level because
  // GEMM kernels contract differently for different widths.)
  TrajectoryBatch c = simulate_forward(spec, policy, 3, rng);
  CHECK((a.x[0].leftCols(3).array() == c.x[0].array()).all());
  for (int k = 0; k < a.n_steps; ++k)
    CHECK((a.dw[k].leftCols(3).array() == c.dw[k].array()).all());
  for (int k = 0; k <= a.n_steps; ++k)
    CHECK((a.x[k].leftCols(3) - c.x[k]).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("non-finite rollout aborts with a diagnostic") {
  ProblemSpec spec = make_gmm_spec();
  // One huge step, then the activation chain overflows to inf and the zero
  // w3 row turns it into NaN.
  Mlp policy = Mlp::zeros(3, 4, 2);
  policy.b3.setConstant(1e300);
  policy.w1(0, 1) = 1e8;
  policy.w2(0, 0) = 1e8;
  Rng rng(2);
  CHECK_THROWS_AS(simulate_forward(spec, policy, 2, rng), std::runtime_error);
  CHECK_THROWS_AS(simulate_forward(spec, policy, 0, rng),
                  std::invalid_argument);
  Mlp bad_dims = Mlp::zeros(3, 4, 1);
  CHECK_THROWS_AS(simulate_forward(spec, bad_dims, 2, rng),
                  std::invalid_argument);
}

TEST_CASE("eval_fields_along with zero nets") {
  // Hand-built two-step batch whose states cover blocked and free points.
  ProblemSpec spec = make_gmm_spec();
  TrajectoryBatch b;
  b.direction = Direction::Forward;
  b.dt = 0.5;
  b.horizon = 1.0;
  b.sigma = 1.0;
  b.n_samples = 2;
  b.n_steps = 2;
  b.x.assign(3, Mat2X(2, 2));
  b.z.assign(3, Mat2X::Zero(2, 2));
  b.dw.assign(2, Mat2X::Zero(2, 2));
  b.x[0] << 0.0, 6.0, 0.0, 6.0;   // (0,0) free, (6,6) blocked
  b.x[1] << 6.0, 0.0, -6.0, 0.0;  // (6,-6) blocked, (0,0) free
  b.x[2] << -6.0, 9.0, 6.0, 9.0;  // (-6,6) free, (9,9) free

  NetBundle nets = zero_bundle();
  FieldEvals fe = eval_fields_along(b, nets, spec);
  CHECK(fe.y.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fe.yhat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fe.div_z.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fe.div_zhat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fe.log_rho_hat.cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k <= 2; ++k) {
    CHECK(fe.z[k].cwiseAbs().maxCoeff() == 0.0);
    CHECK(fe.zhat[k].cwiseAbs().maxCoeff() == 0.0);
    CHECK(fe.f[k].cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(fe.big_f(0, 0) == 0.0);
  CHECK(fe.big_f(1, 0) == 1500.0);
  CHECK(fe.big_f(0, 1) == 1500.0);
  CHECK(fe.big_f(1, 1) == 0.0);
  CHECK(fe.big_f(0, 2) == 0.0);
  CHECK(fe.big_f(1, 2) == 0.0);

  // Entropy-only cost with zero nets: log rho_hat = 0 makes F vanish.
  ProblemSpec ent = spec;
  ent.obstacle_weight = 0.0;
  ent.entropy_weight = 1.0;
  FieldEvals fe2 = eval_fields_along(b, nets, ent);
  CHECK(fe2.big_f.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eval_fields_along recomputation with random nets") {
  ProblemSpec spec = make_vneck_spec();
  spec.entropy_weight = 0.7;
  Rng nrng(55);
  NetBundle nets = NetBundle::init(2, 12, 1e-3, 0.9, 0.999, 1e-8, nrng);
  Rng rng(56);
  TrajectoryBatch b = simulate_backward(spec, nets.z_bwd, 4, rng);
  FieldEvals fe = eval_fields_along(b, nets, spec);
  for (int k = 0; k <= b.n_steps; k += 17) {
    const double t = b.physical_time(k);
    for (int i = 0; i < 4; ++i) {
      const Vec2 x = b.x[k].col(i);
      CHECK(fe.y(i, k) == doctest::Approx(mlp_eval(nets.y_fwd, t, x)(0))
                              .epsilon(1e-14));
      CHECK(fe.div_z(i, k) ==
            doctest::Approx(mlp_divergence_at(nets.z_fwd, t, x)).epsilon(1e-12));
      CHECK(fe.div_zhat(i, k) ==
            doctest::Approx(mlp_divergence_at(nets.z_bwd, t, x)).epsilon(1e-12));
      const double lr = fe.y(i, k) + fe.yhat(i, k);
      CHECK(fe.log_rho_hat(i, k) == doctest::Approx(lr).epsilon(1e-14));
      const double f_ref = spec.obstacle_weight *
                               obstacle_penalty(spec.obstacles, x) +
                           spec.entropy_weight * lr;
      CHECK(fe.big_f(i, k) == doctest::Approx(f_ref).epsilon(1e-12));
      CHECK((fe.zhat[k].col(i) - mlp_eval(nets.z_bwd, t, x)).cwiseAbs().maxCoeff() <
            1e-14);
    }
  }
  // The generating policy's stored values match the current evals, since the
  // nets have not changed since simulation.
  for (int k = 0; k <= b.n_steps; k += 25)
    CHECK((fe.zhat[k] - b.z[k]).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("csv export and subsample") {
  ProblemSpec spec = make_gmm_spec();
  Mlp policy = random_policy(14);
  Rng rng(15);
  TrajectoryBatch b = simulate_forward(spec, policy, 4, rng);

  std::ostringstream os;
  export_csv(b, os);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "direction,sample_id,step,t,x1,x2");
  int rows = 0;
  std::string first_row;
  while (std::getline(is, line)) {
    if (rows == 0) first_row = line;
    ++rows;
  }
  CHECK(rows == 4 * 101);
  // Round-trip the first data row.
  {
    std::istringstream row(first_row);
    std::string dir, sid, step, t, x1, x2;
    std::getline(row, dir, ',');
    std::getline(row, sid, ',');
    std::getline(row, step, ',');
    std::getline(row, t, ',');
    std::getline(row, x1, ',');
    std::getline(row, x2, ',');
    CHECK(dir == "forward");
    CHECK(sid == "0");
    CHECK(step == "0");
    CHECK(std::stod(x1) == b.x[0](0, 0));
    CHECK(std::stod(x2) == b.x[0](1, 0));
  }

  TrajectoryBatch s = subsample(b, {2, 0, 2});
  CHECK(s.n_samples == 3);
  CHECK(s.policy_version == b.policy_version);
  for (int k = 0; k <= b.n_steps; ++k) {
    CHECK((s.x[k].col(0).array() == b.x[k].col(2).array()).all());
    CHECK((s.x[k].col(1).array() == b.x[k].col(0).array()).all());
    CHECK((s.x[k].col(2).array() == b.x[k].col(2).array()).all());
  }
  CHECK((s.dw[7].col(0).array() == b.dw[7].col(2).array()).all());
  CHECK((s.z[3].col(1).array() == b.z[3].col(0).array()).all());
}
