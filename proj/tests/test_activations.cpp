#include "gdlab/activations.hpp"
#include "gdlab/gauss_expect.hpp"

#include <doctest.h>

#include <cmath>

using namespace gdlab;

TEST_CASE("softplus value and derivative") {
  const Activation sp = Activation::softplus();
  CHECK(sp.value(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(sp.value(800.0) == doctest::Approx(800.0));
  CHECK(sp.value(-800.0) >= 0.0);
  CHECK(std::isfinite(sp.value(-800.0)));
  for (double z : {-5.0, -0.3, 0.0, 1.7, 12.0}) {
    const double h = 1e-6;
    const double fd = (sp.value(z + h) - sp.value(z - h)) / (2 * h);
    CHECK(sp.derivative(z) == doctest::Approx(fd).epsilon(1e-8));
    CHECK(sp.derivative(z) == doctest::Approx(sigmoid(z)));
  }
}

TEST_CASE("sigmoid is stable at extreme arguments") {
  CHECK(sigmoid(-1000.0) == 0.0);
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("relu and identity") {
  const Activation r = Activation::relu();
  CHECK(r.value(-2.0) == 0.0);
  CHECK(r.value(3.0) == 3.0);
  CHECK(r.derivative(0.0) == 0.0);
  CHECK(r.regularity() == Regularity::kink_at_origin);
  const Activation id = Activation::identity();
  CHECK(id.value(-2.5) == -2.5);
  CHECK(id.derivative(7.0) == 1.0);
  CHECK_FALSE(id.analytic_nonpoly());
  CHECK(Activation::softplus().analytic_nonpoly());
}

TEST_CASE("activation names round-trip") {
  for (const char* name : {"softplus", "relu", "identity"}) {
    CHECK(Activation::from_name(name).name() == name);
  }
  CHECK_THROWS_AS(Activation::from_name("tanh"), std::invalid_argument);
}

TEST_CASE("scaled activation multiplies value and derivative") {
  const Activation s = Activation::softplus().scaled(3.0);
  CHECK(s.value(0.4) == doctest::Approx(3.0 * Activation::softplus().value(0.4)));
  CHECK(s.derivative(0.4) == doctest::Approx(3.0 * sigmoid(0.4)));
  CHECK_FALSE(s == Activation::softplus());
}

TEST_CASE("c_sigma normalizes the second moment") {
  const QuadRule quad;
  CHECK(compute_c_sigma(Activation::relu(), quad) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(compute_c_sigma(Activation::identity(), quad) == doctest::Approx(1.0).epsilon(1e-12));

  // Monte Carlo oracle for softplus: E[s(z)^2] from 2e6 draws.
  Rng rng(2024);
  const Activation sp = Activation::softplus();
  const int n = 2000000;
  double mean = 0.0, m2 = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double v = std::pow(sp.value(rng.normal()), 2);
    const double d = v - mean;
    mean += d / k;
    m2 += d * (v - mean);
  }
  const double se = std::sqrt(m2 / (n - 1) / n);
  const double c = compute_c_sigma(sp, quad);
  CHECK(std::abs(1.0 / c - mean) < 4.0 * se);
  CHECK(c == doctest::Approx(1.0854865029883409).epsilon(1e-12));
}

TEST_CASE("declared Lipschitz and smoothness constants hold on a grid") {
  const auto grid = uniform_grid(-20.0, 20.0, 20001);
  CHECK(check_condition_lipschitz_smooth(Activation::softplus(), grid).pass());
  CHECK(check_condition_lipschitz_smooth(Activation::identity(), grid).pass());
  const auto relu = check_condition_lipschitz_smooth(Activation::relu(), grid);
  CHECK(relu.lipschitz_ok);
  CHECK_FALSE(relu.smooth_ok);
  CHECK_THROWS_AS(check_condition_lipschitz_smooth(Activation::softplus(),
                                                   uniform_grid(-20, 20, 100)),
                  std::invalid_argument);
  CHECK_THROWS_AS(check_condition_lipschitz_smooth(Activation::softplus(),
                                                   uniform_grid(-5, 5, 20001)),
                  std::invalid_argument);
}
