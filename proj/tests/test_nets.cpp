#include "gdlab/lab/data.hpp"
#include "gdlab/nets.hpp"

#include <doctest.h>

#include <cmath>

using namespace gdlab;

namespace {

NetworkConfig make_config(Arch arch, int depth, Index width, Index channels, Index pixels = 1,
                          Index filter = 1, std::uint64_t seed = 1) {
  NetworkConfig c;
  c.arch = arch;
  c.depth = depth;
  c.width = width;
  c.channels = channels;
  c.pixels = pixels;
  c.filter = filter;
  c.seed = seed;
  c.with_default_c_sigma();
  return c;
}

}  // namespace

TEST_CASE("patchify worked example") {
  Matrix x(2, 4);
  x << 1, 2, 3, 4,
       5, 6, 7, 8;
  const Matrix p = patchify(x, 3);
  REQUIRE(p.rows() == 6);
  REQUIRE(p.cols() == 4);
  Matrix expected(6, 4);
  expected << 0, 1, 2, 3,
              1, 2, 3, 4,
              2, 3, 4, 0,
              0, 5, 6, 7,
              5, 6, 7, 8,
              6, 7, 8, 0;
  CHECK(p == expected);
  CHECK(patchify(x, 1) == x);
}

TEST_CASE("patchify rejects bad filters") {
  const Matrix x = Matrix::Ones(2, 3);
  CHECK_THROWS_AS(patchify(x, 2), std::invalid_argument);
  CHECK_THROWS_AS(patchify(x, 7), std::invalid_argument);
  CHECK_NOTHROW(patchify(x, 5));
}

TEST_CASE("patchify adjoint identity on batches") {
  Rng rng(8);
  const Index c = 3, p = 5, n = 4, q = 3;
  const Matrix x = gaussian_matrix(c, n * p, rng);
  const Matrix y = gaussian_matrix(c * q, n * p, rng);
  const double lhs = patchify(x, q, p).cwiseProduct(y).sum();
  const double rhs = x.cwiseProduct(patchify_adjoint(y, q, p)).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
  // Batched patches never leak across sample boundaries.
  const Matrix batched = patchify(x, q, p);
  for (Index i = 0; i < n; ++i) {
    CHECK(batched.middleCols(i * p, p) == patchify(x.middleCols(i * p, p), q));
  }
}

TEST_CASE("patch norm sandwich") {
  Rng rng(19);
  for (int t = 0; t < 200; ++t) {
    const Index q = 1 + 2 * (t % 3);
    const Matrix x = gaussian_matrix(2, 6, rng);
    const double n = patchify(x, q).norm();
    CHECK(n >= x.norm() - 1e-12);
    CHECK(n <= std::sqrt(static_cast<double>(q)) * x.norm() + 1e-12);
  }
}

TEST_CASE("config validation names the field") {
  NetworkConfig c = make_config(Arch::fully_connected, 2, 8, 4);
  CHECK_NOTHROW(c.validate());
  c.depth = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("depth"), std::invalid_argument);
  c = make_config(Arch::conv_resnet, 2, 8, 4, 4, 2);
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("filter"), std::invalid_argument);
  c = make_config(Arch::fully_connected, 2, 0, 4);
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("width"), std::invalid_argument);
}

TEST_CASE("arch names round-trip") {
  for (Arch a : {Arch::fully_connected, Arch::resnet, Arch::conv_resnet}) {
    CHECK(arch_from_name(arch_name(a)) == a);
  }
  CHECK_THROWS(arch_from_name("mlp"));
}

TEST_CASE("layer scales") {
  const NetworkConfig fc = make_config(Arch::fully_connected, 3, 100, 4);
  CHECK(fc.layer_scale(2) == doctest::Approx(std::sqrt(fc.c_sigma / 100.0)));
  NetworkConfig rn = make_config(Arch::resnet, 4, 100, 4);
  rn.c_res = 0.5;
  CHECK(rn.layer_scale(1) == doctest::Approx(std::sqrt(rn.c_sigma / 100.0)));
  CHECK(rn.layer_scale(3) == doctest::Approx(0.5 / (4.0 * 10.0)));
  const NetworkConfig cv = make_config(Arch::conv_resnet, 2, 6, 3, 4, 3);
  CHECK(cv.fan_in(1) == 9);
  CHECK(cv.fan_in(2) == 18);
}

TEST_CASE("init is deterministic and parameter shapes match") {
  const NetworkConfig c = make_config(Arch::conv_resnet, 3, 6, 2, 4, 3, 7);
  const Params a = init_params(c);
  const Params b = init_params(c);
  REQUIRE(a.depth() == 3);
  for (int h = 0; h < 3; ++h) CHECK(a.W[h] == b.W[h]);
  CHECK(a.a == b.a);
  CHECK(a.W[0].rows() == 6);
  CHECK(a.W[0].cols() == 6);
  CHECK(a.W[1].cols() == 18);
  CHECK(a.a.rows() == 6);
  CHECK(a.a.cols() == 4);
  CHECK(a.parameter_count() == static_cast<std::size_t>(36 + 108 + 108 + 24));
  NetworkConfig other = c;
  other.seed = 8;
  CHECK(init_params(other).W[0] != a.W[0]);
}

TEST_CASE("single-sample forward by hand") {
  NetworkConfig c = make_config(Arch::fully_connected, 1, 3, 2);
  Params p = init_params(c);
  Matrix x(2, 1);
  x << 0.6, 0.8;
  const ForwardTrace t = forward(p, c, x);
  const Activation sp = Activation::softplus();
  double u = 0.0;
  for (Index r = 0; r < 3; ++r) {
    const double z = p.W[0](r, 0) * 0.6 + p.W[0](r, 1) * 0.8;
    u += p.a(r, 0) * std::sqrt(c.c_sigma / 3.0) * sp.value(z);
  }
  CHECK(t.u(0) == doctest::Approx(u).epsilon(1e-14));
}

TEST_CASE("streaming forward equals materialized forward") {
  for (Arch arch : {Arch::fully_connected, Arch::resnet, Arch::conv_resnet}) {
    const Index pixels = arch == Arch::conv_resnet ? 4 : 1;
    const Index filter = arch == Arch::conv_resnet ? 3 : 1;
    const NetworkConfig c = make_config(arch, 3, 37, 3, pixels, filter, 5);
    const Dataset data = lab::gen_data(5, 3, pixels, 11);
    const ForwardTrace full = forward(init_params(c), c, data);
    Matrix a;
    const ForwardTrace streamed = forward_at_init_streaming(c, data, &a, 8);
    CHECK(a == init_params(c).a);
    CHECK((full.u - streamed.u).cwiseAbs().maxCoeff() < 1e-12);
    for (int h = 1; h <= 3; ++h) {
      CHECK((full.x[h] - streamed.x[h]).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((full.J[h] - streamed.J[h]).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("gradients match central differences") {
  struct Case {
    Arch arch;
    int depth;
    Index pixels, filter;
  };
  for (const Case& k : {Case{Arch::fully_connected, 1, 1, 1}, Case{Arch::fully_connected, 3, 1, 1},
                        Case{Arch::resnet, 2, 1, 1}, Case{Arch::resnet, 4, 1, 1},
                        Case{Arch::conv_resnet, 3, 4, 3}}) {
    for (std::uint64_t seed : {1u, 2u}) {
      const NetworkConfig c = make_config(k.arch, k.depth, 12, 3, k.pixels, k.filter, seed);
      const Dataset data = lab::gen_data(4, 3, k.pixels, seed + 100);
      const GradCheckReport r = grad_check(init_params(c), c, data);
      INFO(arch_name(k.arch), " H=", k.depth, " seed=", seed, " worst=", r.worst_parameter);
      CHECK(r.max_rel_error <= 1e-6);
      CHECK(r.checked == init_params(c).parameter_count());
    }
  }
}

TEST_CASE("backward of the squared loss is linear in the residual") {
  const NetworkConfig c = make_config(Arch::resnet, 2, 10, 3);
  const Dataset data = lab::gen_data(4, 3, 1, 3);
  const Params p = init_params(c);
  const ForwardTrace t = forward(p, c, data);
  Vector r = Vector::LinSpaced(4, -1.0, 2.0);
  const Params g1 = backward(p, c, t, r);
  const Params g2 = backward(p, c, t, 2.0 * r);
  CHECK((g2.W[1] - 2.0 * g1.W[1]).norm() < 1e-12);
  const Params g0 = backward(p, c, t, Vector::Zero(4));
  CHECK(g0.a.norm() == 0.0);
}

TEST_CASE("loss") {
  ForwardTrace t;
  t.u = Vector::Ones(3);
  Vector y(3);
  y << 1, 2, 3;
  CHECK(loss(t, y) == doctest::Approx(0.5 * (0 + 1 + 4)));
}
