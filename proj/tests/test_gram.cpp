#include "gdlab/gram.hpp"
#include "gdlab/lab/data.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace gdlab;

namespace {

NetworkConfig make_config(Arch arch, int depth, Index width, Index channels, Index pixels = 1,
                          Index filter = 1, std::uint64_t seed = 1,
                          Activation act = Activation::softplus()) {
  NetworkConfig c;
  c.arch = arch;
  c.depth = depth;
  c.width = width;
  c.channels = channels;
  c.pixels = pixels;
  c.filter = filter;
  c.seed = seed;
  c.activation = act;
  c.with_default_c_sigma();
  return c;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// Closed-form relu recursion (arc-cosine kernels), independent of quadrature.
Matrix relu_fc_kernel(const Dataset& data, int depth) {
  const Index n = data.size();
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) k(i, j) = data.inner(i, j);
  const double pi = std::numbers::pi;
  auto angle = [&](const Matrix& m, Index i, Index j) {
    return std::acos(std::clamp(m(i, j) / std::sqrt(m(i, i) * m(j, j)), -1.0, 1.0));
  };
  for (int h = 1; h < depth; ++h) {
    Matrix next(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const double t = angle(k, i, j);
        next(i, j) = std::sqrt(k(i, i) * k(j, j)) * (std::sin(t) + (pi - t) * std::cos(t)) / pi;
      }
    k = next;
  }
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) out(i, j) = 2.0 * k(i, j) * (pi - angle(k, i, j)) / (2.0 * pi);
  return out;
}

// Monte Carlo version of the softplus FC recursion: every expectation is
// replaced by an average over `samples` bivariate normal draws.
Matrix mc_fc_kernel(const Dataset& data, int depth, double c_sigma, long samples) {
  const Activation sp = Activation::softplus();
  const Index n = data.size();
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) k(i, j) = data.inner(i, j);
  Rng rng(99);
  auto mc = [&](const Matrix& m, Index i, Index j, bool derivative) {
    const double su = std::sqrt(m(i, i));
    const double c = m(i, j) / su;
    const double s = std::sqrt(std::max(0.0, m(j, j) - c * c));
    double acc = 0.0;
    for (long t = 0; t < samples; ++t) {
      const double z1 = rng.normal();
      const double z2 = rng.normal();
      const double u = su * z1, v = c * z1 + s * z2;
      acc += derivative ? sp.derivative(u) * sp.derivative(v) : sp.value(u) * sp.value(v);
    }
    return acc / static_cast<double>(samples);
  };
  for (int h = 1; h < depth; ++h) {
    Matrix next(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j <= i; ++j) next(i, j) = next(j, i) = c_sigma * mc(k, i, j, false);
    k = next;
  }
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) out(i, j) = out(j, i) = c_sigma * k(i, j) * mc(k, i, j, true);
  return out;
}

}  // namespace

TEST_CASE("closed-form G^(H) equals the backprop layer Gram") {
  for (Arch arch : {Arch::fully_connected, Arch::resnet, Arch::conv_resnet}) {
    const Index pixels = arch == Arch::conv_resnet ? 4 : 1;
    const Index filter = arch == Arch::conv_resnet ? 3 : 1;
    const NetworkConfig c = make_config(arch, 3, 20, 3, pixels, filter, 4);
    const Dataset data = lab::gen_data(5, 3, pixels, 2);
    const Params p = init_params(c);
    const ForwardTrace t = forward(p, c, data);
    const auto layers = gram_layers(t, p, c);
    REQUIRE(layers.size() == 4);
    CHECK(max_abs(gram_layer_H(t, p, c).matrix.matrix() - layers[3].matrix.matrix()) < 1e-12);
    CHECK(max_abs(gram_output(t).matrix.matrix() - layers[0].matrix.matrix()) < 1e-12);
  }
}

TEST_CASE("layer Grams sum to the full gradient Gram") {
  for (Arch arch : {Arch::fully_connected, Arch::resnet, Arch::conv_resnet}) {
    const Index pixels = arch == Arch::conv_resnet ? 3 : 1;
    const Index filter = arch == Arch::conv_resnet ? 3 : 1;
    const NetworkConfig c = make_config(arch, 2, 8, 2, pixels, filter, 6);
    const Dataset data = lab::gen_data(4, 2, pixels, 7);
    const Params p = init_params(c);
    const ForwardTrace t = forward(p, c, data);
    Matrix total = Matrix::Zero(4, 4);
    for (const auto& g : gram_layers(t, p, c)) total += g.matrix.matrix();
    CHECK(max_abs(total - gram_full(t, p, c).matrix.matrix()) < 1e-11);
  }
}

TEST_CASE("gram_full refuses oversized configurations") {
  const NetworkConfig c = make_config(Arch::fully_connected, 4, 2048, 2);
  const Dataset data = lab::gen_data(20, 2, 1, 1);
  const Params p = init_params(c);
  CHECK_THROWS(gram_full(forward(p, c, data), p, c));
}

TEST_CASE("relu FC kernel matches the arc-cosine recursion") {
  const Dataset data = lab::gen_data(5, 4, 1, 21);
  for (int depth : {1, 2, 3}) {
    const KernelState k = kernel_fc(data, depth, Activation::relu());
    CHECK(max_abs(k.kernel.matrix.matrix() - relu_fc_kernel(data, depth)) < 1e-10);
  }
}

TEST_CASE("softplus FC kernel matches a Monte Carlo recursion") {
  const Dataset data = lab::gen_data(3, 4, 1, 5);
  const double cs = compute_c_sigma(Activation::softplus(), QuadRule());
  for (int depth : {1, 2}) {
    const Matrix quad = kernel_fc(data, depth, Activation::softplus()).kernel.matrix.matrix();
    const Matrix mc = mc_fc_kernel(data, depth, cs, 400000);
    CHECK(max_abs(quad - mc) < 5e-3);
  }
}

TEST_CASE("population kernel is approached by wide networks") {
  struct Case {
    Arch arch;
    int depth;
    Index pixels, filter;
    double tol;
  };
  // Entrywise fluctuations shrink like 1/sqrt(m); at m = 4096 they sit well
  // below 15% of the kernel scale, while a wrong recursion misses by O(1).
  for (const Case& k : {Case{Arch::fully_connected, 2, 1, 1, 0.15},
                        Case{Arch::resnet, 4, 1, 1, 0.15},
                        Case{Arch::conv_resnet, 2, 4, 3, 0.15}}) {
    const NetworkConfig c = make_config(k.arch, k.depth, 4096, 3, k.pixels, k.filter, 3);
    const Dataset data = lab::gen_data(4, 3, k.pixels, 8);
    Matrix a;
    const ForwardTrace t = forward_at_init_streaming(c, data, &a);
    const Matrix g = gram_layer_H(t, a, c).matrix.matrix();
    const Matrix K = population_kernel(data, c).kernel.matrix.matrix();
    INFO(arch_name(k.arch));
    CHECK(max_abs(g - K) < k.tol * max_abs(K) + 1e-12);
  }
}

TEST_CASE("scalar residual recursion is the single-pixel block recursion") {
  const NetworkConfig c = make_config(Arch::resnet, 3, 1, 4);
  const Dataset data = lab::gen_data(5, 4, 1, 12);
  const Matrix a = kernel_general(data, c).kernel.matrix.matrix();
  const Matrix b = kernel_general_blocks(data, c).kernel.matrix.matrix();
  CHECK(max_abs(a - b) < 1e-13);
}

TEST_CASE("kernel positivity and duplicate-input singularity") {
  const NetworkConfig fc = make_config(Arch::fully_connected, 2, 1, 6);
  const Dataset data = lab::gen_data(6, 6, 1, 4);
  CHECK(population_kernel(data, fc).lambda_min() > 1e-10);
  const Dataset dup = lab::gen_duplicate_data(6, 6, 1, 4);
  CHECK(std::abs(population_kernel(dup, fc).lambda_min()) < 1e-12);
  const NetworkConfig rn = make_config(Arch::resnet, 4, 1, 6);
  CHECK(std::abs(population_kernel(dup, rn).lambda_min()) < 1e-12);
}

TEST_CASE("patch trace") {
  Matrix f = Matrix::Zero(3, 3);
  f << 1, 2, 3,
       4, 5, 6,
       7, 8, 9;
  CHECK(patch_trace(f, 1) == f);
  const Matrix t = patch_trace(f, 3);
  CHECK(t(0, 0) == 1 + 5);
  CHECK(t(1, 1) == 1 + 5 + 9);
  CHECK(t(0, 1) == 2 + 6);
  CHECK(t(1, 0) == 4 + 8);
  CHECK(t(2, 0) == 7);
}

TEST_CASE("Gram drift norms") {
  GramMatrix a{SymMatrix::identity(3)}, b{SymMatrix::zero(3)};
  const GramDrift d = gram_drift(a, b);
  CHECK(d.fro == doctest::Approx(std::sqrt(3.0)));
  CHECK(d.op == doctest::Approx(1.0));
}
