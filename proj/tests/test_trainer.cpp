#include "gdlab/lab/data.hpp"
#include "gdlab/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace gdlab;

namespace {

NetworkConfig make_config(Arch arch, int depth, Index width, Index channels,
                          Activation act = Activation::softplus(), std::uint64_t seed = 1) {
  NetworkConfig c;
  c.arch = arch;
  c.depth = depth;
  c.width = width;
  c.channels = channels;
  c.activation = act;
  c.seed = seed;
  c.with_default_c_sigma();
  return c;
}

bool same(const Params& a, const Params& b) {
  for (std::size_t h = 0; h < a.W.size(); ++h) {
    if (a.W[h] != b.W[h]) return false;
  }
  return a.a == b.a;
}

}  // namespace

TEST_CASE("zero step size and zero residual leave parameters unchanged") {
  const NetworkConfig c = make_config(Arch::fully_connected, 2, 16, 3);
  Dataset data = lab::gen_data(4, 3, 1, 2);
  const Params p0 = init_params(c);
  Params p = p0;
  gd_step(p, c, data, 0.0);
  CHECK(same(p, p0));
  data.labels = forward(p0, c, data).u;
  gd_step(p, c, data, 0.3);
  CHECK(same(p, p0));
}

TEST_CASE("linear model steps follow closed-form gradient descent") {
  const Index m = 5, d = 3, n = 4;
  const NetworkConfig c = make_config(Arch::fully_connected, 1, m, d, Activation::identity());
  const Dataset data = lab::gen_data(n, d, 1, 9);
  Params p = init_params(c);
  Matrix W = p.W[0];
  Vector a = p.a.col(0);
  const Matrix X = data.inputs;
  const double s = 1.0 / std::sqrt(static_cast<double>(m));
  const double eta = 0.05;
  for (int k = 0; k < 20; ++k) {
    const Vector r = s * (X.transpose() * (W.transpose() * a)) - data.labels;
    const Matrix gW = s * a * (X * r).transpose();
    const Vector ga = s * W * (X * r);
    W -= eta * gW;
    a -= eta * ga;
    gd_step(p, c, data, eta);
    CHECK((p.W[0] - W).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((p.a.col(0) - a).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("linear model dynamics defect is the bilinear cross term") {
  const Index m = 6, d = 3, n = 4;
  const NetworkConfig c = make_config(Arch::fully_connected, 1, m, d, Activation::identity(), 3);
  const Dataset data = lab::gen_data(n, d, 1, 4);
  const Params p = init_params(c);
  const Matrix& W = p.W[0];
  const Vector a = p.a.col(0);
  const double s = 1.0 / std::sqrt(static_cast<double>(m));
  const Vector r = s * (data.inputs.transpose() * (W.transpose() * a)) - data.labels;
  const Matrix dW = s * a * (data.inputs * r).transpose();
  const Vector da = s * W * (data.inputs * r);
  for (double eta : {0.0, 1e-3, 0.1}) {
    const Vector cross = eta * eta * s * (data.inputs.transpose() * (dW.transpose() * da));
    CHECK(residual_dynamics_check(p, c, data, eta) ==
          doctest::Approx(cross.norm()).epsilon(1e-8).scale(1e-14));
  }
}

TEST_CASE("dynamics defect is second order in the step size") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const NetworkConfig c = make_config(Arch::fully_connected, 2, 32, 4, Activation::softplus(),
                                        seed);
    const Dataset data = lab::gen_data(4, 4, 1, seed + 10);
    const Params p = init_params(c);
    const double big = residual_dynamics_check(p, c, data, 1e-3);
    const double small = residual_dynamics_check(p, c, data, 5e-4);
    CHECK(big / small >= 3.5);
    CHECK(residual_dynamics_check(p, c, data, 0.0) == 0.0);
  }
}

TEST_CASE("auto step size") {
  const NetworkConfig c = make_config(Arch::fully_connected, 2, 64, 4);
  Dataset data = lab::gen_data(5, 4, 1, 3);
  const Params p = init_params(c);
  const ForwardTrace t = forward(p, c, data);
  const double eta = auto_step_size(p, t, c);
  const Matrix g = gram_layer_H(t, p, c).matrix.matrix() + gram_output(t).matrix.matrix();
  CHECK(eta == doctest::Approx(1.0 / (2.0 * sym_eig_max(SymMatrix(g)))));
  data.labels *= 7.0;
  CHECK(auto_step_size(p, forward(p, c, data), c) == eta);
}

TEST_CASE("train records checkpoints and converges on a small problem") {
  const NetworkConfig c = make_config(Arch::fully_connected, 2, 256, 4);
  const Dataset data = lab::gen_data(4, 4, 1, 6);
  Params p = init_params(c);
  TrainConfig tc;
  tc.iterations = 120;
  const MetricsLog log = train(p, c, tc, data);
  CHECK(log.loss.size() == 121);
  CHECK_FALSE(log.diverged);
  CHECK(log.monotone_decreasing());
  CHECK(log.envelope_violations() == 0);
  CHECK(log.rows.front().iteration == 0);
  CHECK(log.rows.front().gram_drift_fro == 0.0);
  CHECK(log.rows.back().iteration == 120);
  CHECK(log.rows.size() == 51 + 7);
  CHECK(log.log_loss_slope() < 0.0);
  CHECK(log.rows.back().weight_drift.size() == 2);
}

TEST_CASE("train edge cases") {
  const NetworkConfig c = make_config(Arch::resnet, 3, 32, 3);
  Dataset data = lab::gen_data(3, 3, 1, 1);
  TrainConfig tc;
  tc.iterations = 0;
  Params p = init_params(c);
  MetricsLog log = train(p, c, tc, data);
  CHECK(log.loss.size() == 1);
  CHECK(log.rows.size() == 1);

  data.labels = forward(p, c, data).u;
  tc.iterations = 5;
  const Params before = p;
  log = train(p, c, tc, data);
  CHECK(log.loss.front() == 0.0);
  CHECK(same(p, before));
}

TEST_CASE("oversized step size is flagged as divergence") {
  const NetworkConfig c = make_config(Arch::resnet, 3, 128, 4);
  const Dataset data = lab::gen_data(6, 4, 1, 2);
  Params p = init_params(c);
  TrainConfig tc;
  tc.iterations = 300;
  tc.eta_scale = 10.0;
  const MetricsLog log = train(p, c, tc, data);
  CHECK(log.diverged);
  CHECK(log.diverged_at > 0);
  CHECK(log.loss.size() == static_cast<std::size_t>(log.diverged_at + 1));
}

TEST_CASE("training is deterministic") {
  const NetworkConfig c = make_config(Arch::resnet, 2, 64, 3);
  const Dataset data = lab::gen_data(4, 3, 1, 5);
  TrainConfig tc;
  tc.iterations = 30;
  Params p1 = init_params(c), p2 = init_params(c);
  const MetricsLog a = train(p1, c, tc, data);
  const MetricsLog b = train(p2, c, tc, data);
  CHECK(a.loss == b.loss);
  CHECK(same(p1, p2));
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.iterations = -1;
  CHECK_THROWS(tc.validate());
  tc = TrainConfig{};
  tc.eta = -0.1;
  CHECK_THROWS(tc.validate());
  tc = TrainConfig{};
  CHECK(tc.is_checkpoint(0));
  CHECK(tc.is_checkpoint(50));
  CHECK_FALSE(tc.is_checkpoint(51));
  CHECK(tc.is_checkpoint(60));
}

TEST_CASE("envelope") {
  MetricsLog log;
  log.eta = 0.1;
  log.lambda0 = 2.0;
  log.lambda_margin = 0.5;
  log.loss = {1.0, 0.95, 0.9};
  CHECK(log.envelope(2) == doctest::Approx(0.95 * 0.95));
  CHECK(log.envelope_violations() == 0);
  log.loss[2] = 0.91;
  CHECK(log.envelope_violations() == 1);
}
