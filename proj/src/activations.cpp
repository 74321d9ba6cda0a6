#include "gdlab/activations.hpp"

#include "gdlab/gauss_expect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace gdlab {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

inline double softplus_value(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

Activation Activation::softplus() {
  // sup|s'| = 1, sup|s''| = sup sigmoid' = 1/4.
  return Activation(ActivationKind::softplus, "softplus", 1.0, 0.25, true);
}

Activation Activation::relu() {
  // Declared smoothness is the a.e. second derivative (0); the kink at the
  // origin is what check_condition_lipschitz_smooth catches.
  return Activation(ActivationKind::relu, "relu", 1.0, 0.0, false);
}

Activation Activation::identity() {
  return Activation(ActivationKind::identity, "identity", 1.0, 0.0, false);
}

Activation Activation::from_name(const std::string& name) {
  if (name == "softplus") return softplus();
  if (name == "relu") return relu();
  if (name == "identity") return identity();
  throw std::invalid_argument("unknown activation '" + name + "'");
}

Activation Activation::scaled(double gamma) const {
  Activation out = *this;
  out.scale_ *= gamma;
  out.lipschitz_ *= std::abs(gamma);
  out.smoothness_ *= std::abs(gamma);
  if (gamma != 1.0) out.name_ = name_ + "*" + std::to_string(gamma);
  return out;
}

double Activation::value(double z) const {
  switch (kind_) {
    case ActivationKind::softplus:
      return scale_ * softplus_value(z);
    case ActivationKind::relu:
      return scale_ * (z > 0.0 ? z : 0.0);
    case ActivationKind::identity:
      return scale_ * z;
  }
  return 0.0;
}

double Activation::derivative(double z) const {
  switch (kind_) {
    case ActivationKind::softplus:
      return scale_ * sigmoid(z);
    case ActivationKind::relu:
      return z > 0.0 ? scale_ : 0.0;
    case ActivationKind::identity:
      return scale_;
  }
  return 0.0;
}

double compute_c_sigma(const Activation& act, const QuadRule& quad) {
  using Key = std::tuple<int, double, int>;
  static std::mutex mu;
  static std::map<Key, double> cache;
  const Key key{static_cast<int>(act.kind()), act.scale(), quad.nodes()};
  {
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const double second_moment = expect1(
      [&](double z) {
        const double s = act.value(z);
        return s * s;
      },
      1.0, quad, act.regularity());
  if (!(second_moment > 0.0) || !std::isfinite(second_moment)) {
    throw std::domain_error("compute_c_sigma: E[s(x)^2] = " + std::to_string(second_moment) +
                            " for activation " + act.name());
  }
  const double c = 1.0 / second_moment;
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, c);
  return c;
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) {
    g[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  return g;
}

LipschitzSmoothReport check_condition_lipschitz_smooth(const Activation& act,
                                                       const std::vector<double>& grid) {
  if (grid.size() < 10000) {
    throw std::invalid_argument("check_condition_lipschitz_smooth: grid needs >= 1e4 points");
  }
  std::vector<double> g = grid;
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  if (g.front() > -20.0 || g.back() < 20.0) {
    throw std::invalid_argument("check_condition_lipschitz_smooth: grid must span [-20, 20]");
  }
  // A difference quotient over [a, c] is a weighted mean of the quotients over
  // the grid cells it covers, so the supremum over all pairs is attained on
  // adjacent points.
  LipschitzSmoothReport r;
  for (std::size_t k = 1; k < g.size(); ++k) {
    const double h = g[k] - g[k - 1];
    r.empirical_lipschitz =
        std::max(r.empirical_lipschitz, std::abs(act.value(g[k]) - act.value(g[k - 1])) / h);
    r.empirical_smoothness = std::max(
        r.empirical_smoothness, std::abs(act.derivative(g[k]) - act.derivative(g[k - 1])) / h);
  }
  r.lipschitz_ok = r.empirical_lipschitz <= act.lipschitz() + 1e-9;
  r.smooth_ok = r.empirical_smoothness <= act.smoothness() + 1e-9;
  return r;
}

}  // namespace gdlab
