#pragma once

#include "gdlab/activations.hpp"
#include "gdlab/numlin.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdlab {

/// 2x2 covariance [[a11, a12], [a12, a22]].
struct Cov2 {
  double a11 = 1.0;
  double a12 = 0.0;
  double a22 = 1.0;

  Cov2 transpose() const { return {a22, a12, a11}; }
  /// a12 / sqrt(a11 a22); requires both diagonals positive.
  double correlation() const { return a12 / std::sqrt(a11 * a22); }
  /// Smallest eigenvalue of the 2x2 matrix.
  double min_eigenvalue() const;
};

class NonPsdError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Covariances whose smallest eigenvalue is within 1e-12 (relative to
/// max(1, trace)) below zero are projected back to PSD; anything worse throws
/// NonPsdError.
Cov2 repair_psd(Cov2 cov);

/// Quadrature tables for one node count n in [20, 400]:
///  - probabilists' Gauss-Hermite (weights sum to 1),
///  - Gauss rule for exp(-x^2/2) on [0, inf) (weights sum to 1/2),
///  - Gauss rule for r exp(-r^2/2) on [0, inf) (weights sum to 1),
///  - Gauss-Legendre on [-1, 1] (weights sum to 2).
/// The half-line rules back the kink-aware paths. Tables are built once per n
/// and shared.
class QuadRule {
 public:
  static constexpr int kDefaultNodes = 80;

  explicit QuadRule(int nodes = kDefaultNodes);

  int nodes() const { return tables_->n; }
  const std::vector<double>& hermite_nodes() const { return tables_->gh_x; }
  const std::vector<double>& hermite_weights() const { return tables_->gh_w; }
  const std::vector<double>& half_nodes() const { return tables_->half_x; }
  const std::vector<double>& half_weights() const { return tables_->half_w; }
  const std::vector<double>& radial_nodes() const { return tables_->rad_x; }
  const std::vector<double>& radial_weights() const { return tables_->rad_w; }
  const std::vector<double>& legendre_nodes() const { return tables_->gl_x; }
  const std::vector<double>& legendre_weights() const { return tables_->gl_w; }

  struct Tables {
    int n = 0;
    std::vector<double> gh_x, gh_w, half_x, half_w, rad_x, rad_w, gl_x, gl_w;
  };

 private:
  std::shared_ptr<const Tables> tables_;
};

/// Angles in [0, 2pi) where u = 0 or v = 0 for the Cholesky map
/// (z1, z2) -> (sqrt(a11) z1, c z1 + s z2). Sorted, deduplicated.
std::vector<double> kink_angles(double c, double s);

/// E_{z ~ N(0, variance)} f(z).
template <class F>
double expect1(F&& f, double variance, const QuadRule& quad,
               Regularity reg = Regularity::smooth) {
  if (!(variance >= 0.0)) {
    throw std::domain_error("expect1: negative variance " + std::to_string(variance));
  }
  if (variance == 0.0) return f(0.0);
  const double sd = std::sqrt(variance);
  double acc = 0.0;
  if (reg == Regularity::smooth) {
    const auto& x = quad.hermite_nodes();
    const auto& w = quad.hermite_weights();
    for (std::size_t k = 0; k < x.size(); ++k) acc += w[k] * f(sd * x[k]);
  } else {
    const auto& x = quad.half_nodes();
    const auto& w = quad.half_weights();
    for (std::size_t k = 0; k < x.size(); ++k) acc += w[k] * (f(sd * x[k]) + f(-sd * x[k]));
  }
  return acc;
}

/// E[f(u) g(v)] for (u, v) ~ N(0, cov).
///
/// Smooth integrands use the Cholesky map u = sqrt(a11) z1,
/// v = (a12/sqrt(a11)) z1 + sqrt(a22 - a12^2/a11) z2 with a tensor
/// Gauss-Hermite rule. Integrands kinked at the origin are integrated in polar
/// coordinates of (z1, z2) with the angle range split at the kink lines, so
/// each wedge is smooth. Degenerate covariances reduce to 1D.
template <class F, class G>
double expect2(F&& f, G&& g, Cov2 cov, const QuadRule& quad,
               Regularity reg = Regularity::smooth) {
  cov = repair_psd(cov);
  constexpr double kTinyVariance = 1e-14;
  const bool u_zero = cov.a11 <= kTinyVariance;
  const bool v_zero = cov.a22 <= kTinyVariance;
  if (u_zero && v_zero) return f(0.0) * g(0.0);
  if (u_zero) {
    const double f0 = f(0.0);
    return expect1([&](double v) { return f0 * g(v); }, cov.a22, quad, reg);
  }
  if (v_zero) {
    const double g0 = g(0.0);
    return expect1([&](double u) { return f(u) * g0; }, cov.a11, quad, reg);
  }
  const double rho = std::clamp(cov.correlation(), -1.0, 1.0);
  if (std::abs(rho) >= 1.0 - 1e-12) {
    const double k = (rho > 0 ? 1.0 : -1.0) * std::sqrt(cov.a22 / cov.a11);
    return expect1([&](double u) { return f(u) * g(k * u); }, cov.a11, quad, reg);
  }

  const double su = std::sqrt(cov.a11);
  const double c = cov.a12 / su;
  const double s = std::sqrt(std::max(0.0, cov.a22 - c * c));

  double acc = 0.0;
  if (reg == Regularity::smooth) {
    const auto& x = quad.hermite_nodes();
    const auto& w = quad.hermite_weights();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double fu = f(su * x[i]);
      if (fu == 0.0) continue;
      double inner = 0.0;
      const double base = c * x[i];
      for (std::size_t j = 0; j < n; ++j) inner += w[j] * g(base + s * x[j]);
      acc += w[i] * fu * inner;
    }
    return acc;
  }

  std::vector<double> cuts = kink_angles(c, s);
  cuts.push_back(cuts.front() + 2.0 * std::numbers::pi);
  const auto& gx = quad.legendre_nodes();
  const auto& gw = quad.legendre_weights();
  const auto& rx = quad.radial_nodes();
  const auto& rw = quad.radial_weights();
  for (std::size_t wedge = 0; wedge + 1 < cuts.size(); ++wedge) {
    const double lo = cuts[wedge];
    const double hi = cuts[wedge + 1];
    const double half = 0.5 * (hi - lo);
    if (half <= 0.0) continue;
    const double mid = 0.5 * (hi + lo);
    for (std::size_t t = 0; t < gx.size(); ++t) {
      const double theta = mid + half * gx[t];
      const double ct = std::cos(theta);
      const double st = std::sin(theta);
      const double du = su * ct;
      const double dv = c * ct + s * st;
      double radial = 0.0;
      for (std::size_t k = 0; k < rx.size(); ++k) radial += rw[k] * f(rx[k] * du) * g(rx[k] * dv);
      acc += gw[t] * half * radial;
    }
  }
  return acc / (2.0 * std::numbers::pi);
}

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Plain Monte Carlo estimate of E[f(u) g(v)]; `samples` >= 1e4.
template <class F, class G>
McEstimate mc_expect2(F&& f, G&& g, Cov2 cov, long samples, Rng& rng) {
  if (samples < 10000) throw std::invalid_argument("mc_expect2: need at least 1e4 samples");
  cov = repair_psd(cov);
  const double su = std::sqrt(std::max(0.0, cov.a11));
  const double c = su > 0.0 ? cov.a12 / su : 0.0;
  const double s = std::sqrt(std::max(0.0, cov.a22 - c * c));
  // Welford accumulation.
  double mean = 0.0;
  double m2 = 0.0;
  for (long k = 1; k <= samples; ++k) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double val = f(su * z1) * g(c * z1 + s * z2);
    const double delta = val - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (val - mean);
  }
  const double var = m2 / static_cast<double>(samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(samples))};
}

}  // namespace gdlab
