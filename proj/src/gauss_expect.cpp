#include "gdlab/gauss_expect.hpp"

#include <map>
#include <mutex>

namespace gdlab {

double Cov2::min_eigenvalue() const {
  const double mean = 0.5 * (a11 + a22);
  const double diff = 0.5 * (a11 - a22);
  return mean - std::sqrt(diff * diff + a12 * a12);
}

Cov2 repair_psd(Cov2 cov) {
  if (!std::isfinite(cov.a11) || !std::isfinite(cov.a12) || !std::isfinite(cov.a22)) {
    throw NonPsdError("covariance has non-finite entries");
  }
  const double tol = 1e-12 * std::max(1.0, std::abs(cov.a11) + std::abs(cov.a22));
  const double lmin = cov.min_eigenvalue();
  if (lmin < -tol) {
    throw NonPsdError("covariance [[" + std::to_string(cov.a11) + ", " + std::to_string(cov.a12) +
                      "], [., " + std::to_string(cov.a22) + "]] has eigenvalue " +
                      std::to_string(lmin));
  }
  cov.a11 = std::max(cov.a11, 0.0);
  cov.a22 = std::max(cov.a22, 0.0);
  const double bound = std::sqrt(cov.a11 * cov.a22);
  cov.a12 = std::clamp(cov.a12, -bound, bound);
  return cov;
}

std::vector<double> kink_angles(double c, double s) {
  const double two_pi = 2.0 * std::numbers::pi;
  auto wrap = [&](double a) {
    a = std::fmod(a, two_pi);
    return a < 0.0 ? a + two_pi : a;
  };
  // u = 0 on the z2 axis; v = c z1 + s z2 = 0 along direction (s, -c).
  const double v0 = wrap(std::atan2(-c, s));
  std::vector<double> angles = {0.5 * std::numbers::pi, 1.5 * std::numbers::pi, v0,
                                wrap(v0 + std::numbers::pi)};
  std::sort(angles.begin(), angles.end());
  std::vector<double> out;
  for (double a : angles) {
    if (out.empty() || a - out.back() > 1e-15) out.push_back(a);
  }
  return out;
}

namespace {

struct Rule {
  std::vector<double> x, w;
};

/// Golub-Welsch: nodes and weights from a Jacobi matrix (diag alpha,
/// off-diagonal beta) and total mass mu0.
Rule golub_welsch(const Vector& alpha, const Vector& beta, double mu0) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  solver.computeFromTridiagonal(alpha, beta, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("QuadRule: Golub-Welsch eigensolve failed");
  }
  const Index n = alpha.size();
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (Index k = 0; k < n; ++k) {
    r.x[k] = solver.eigenvalues()(k);
    const double v0 = solver.eigenvectors()(0, k);
    r.w[k] = mu0 * v0 * v0;
  }
  return r;
}

Rule gauss_hermite_prob(int n) {
  Vector alpha = Vector::Zero(n);
  Vector beta(n - 1);
  for (int k = 1; k < n; ++k) beta(k - 1) = std::sqrt(static_cast<double>(k));
  Rule r = golub_welsch(alpha, beta, 1.0);
  // Enforce the exact symmetry of the rule.
  for (int k = 0; k < n / 2; ++k) {
    const double x = 0.5 * (r.x[n - 1 - k] - r.x[k]);
    const double w = 0.5 * (r.w[n - 1 - k] + r.w[k]);
    r.x[k] = -x;
    r.x[n - 1 - k] = x;
    r.w[k] = w;
    r.w[n - 1 - k] = w;
  }
  if (n % 2 == 1) r.x[n / 2] = 0.0;
  return r;
}

Rule gauss_legendre(int n) {
  Vector alpha = Vector::Zero(n);
  Vector beta(n - 1);
  for (int k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    beta(k - 1) = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  return golub_welsch(alpha, beta, 2.0);
}

/// Gauss rule for a weight on [0, R] via Lanczos (with full
/// reorthogonalization) on a fine composite Gauss-Legendre discretization.
template <class W>
Rule gauss_from_weight(int n, W weight, double upper) {
  const Rule panel = gauss_legendre(24);
  const int panels = 200;
  const double width = upper / panels;
  std::vector<double> xs, ws;
  xs.reserve(panels * panel.x.size());
  ws.reserve(panels * panel.x.size());
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * width;
    for (std::size_t k = 0; k < panel.x.size(); ++k) {
      const double x = mid + 0.5 * width * panel.x[k];
      xs.push_back(x);
      ws.push_back(0.5 * width * panel.w[k] * weight(x));
    }
  }
  const Index big = static_cast<Index>(xs.size());
  Vector diag(big), root_w(big);
  double mu0 = 0.0;
  for (Index k = 0; k < big; ++k) {
    diag(k) = xs[k];
    root_w(k) = std::sqrt(ws[k]);
    mu0 += ws[k];
  }
  Matrix q(big, n);
  q.col(0) = root_w / root_w.norm();
  Vector alpha(n), beta(n - 1);
  for (int k = 0; k < n; ++k) {
    Vector v = diag.cwiseProduct(q.col(k));
    alpha(k) = q.col(k).dot(v);
    v -= alpha(k) * q.col(k);
    if (k > 0) v -= beta(k - 1) * q.col(k - 1);
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j <= k; ++j) v -= q.col(j).dot(v) * q.col(j);
    }
    if (k + 1 < n) {
      beta(k) = v.norm();
      q.col(k + 1) = v / beta(k);
    }
  }
  return golub_welsch(alpha, beta, mu0);
}

std::shared_ptr<const QuadRule::Tables> build_tables(int n) {
  auto t = std::make_shared<QuadRule::Tables>();
  t->n = n;
  Rule gh = gauss_hermite_prob(n);
  t->gh_x = std::move(gh.x);
  t->gh_w = std::move(gh.w);
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  Rule half = gauss_from_weight(n, [&](double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); },
                                48.0);
  t->half_x = std::move(half.x);
  t->half_w = std::move(half.w);
  Rule rad = gauss_from_weight(n, [](double r) { return r * std::exp(-0.5 * r * r); }, 48.0);
  t->rad_x = std::move(rad.x);
  t->rad_w = std::move(rad.w);
  Rule gl = gauss_legendre(n);
  t->gl_x = std::move(gl.x);
  t->gl_w = std::move(gl.w);
  return t;
}

}  // namespace

QuadRule::QuadRule(int nodes) {
  if (nodes < 20 || nodes > 400) {
    throw std::invalid_argument("QuadRule: node count " + std::to_string(nodes) +
                                " outside [20, 400]");
  }
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const Tables>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[nodes];
  if (!slot) slot = build_tables(nodes);
  tables_ = slot;
}

}  // namespace gdlab
