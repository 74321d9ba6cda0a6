#include "gdlab/numlin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gdlab {

SymMatrix::SymMatrix(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw ShapeError("SymMatrix: input is " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + ", not square");
  }
  require_finite(a, "SymMatrix input");
  m_ = 0.5 * (a + a.transpose());
}

SymMatrix SymMatrix::identity(Index n) { return SymMatrix(Matrix::Identity(n, n)); }

SymMatrix SymMatrix::zero(Index n) { return SymMatrix(Matrix::Zero(n, n)); }

// ---------------------------------------------------------------------------
// Philox4x32-10

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline double to_unit_open_closed(std::uint64_t bits) {
  // (0, 1]
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

inline double to_unit_closed_open(std::uint64_t bits) {
  // [0, 1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

constexpr std::uint32_t kUniformDomain = 0x80000000u;

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::array<std::uint32_t, 4> Rng::block(std::uint64_t index, bool uniform_domain) const {
  std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(index),
      static_cast<std::uint32_t>(index >> 32) | (uniform_domain ? kUniformDomain : 0u),
      static_cast<std::uint32_t>(stream_),
      static_cast<std::uint32_t>(stream_ >> 32),
  };
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  return philox4x32(ctr, key);
}

double Rng::uniform() {
  const auto b = block(uniform_pos_++, true);
  const std::uint64_t bits = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  return to_unit_open_closed(bits) * (1.0 - 0x1.0p-54);
}

namespace {

inline void box_muller(const std::array<std::uint32_t, 4>& b, double& c, double& s) {
  const std::uint64_t bits1 = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  const std::uint64_t bits2 = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
  const double radius = std::sqrt(-2.0 * std::log(to_unit_open_closed(bits1)));
  const double angle = 2.0 * std::numbers::pi * to_unit_closed_open(bits2);
  c = radius * std::cos(angle);
  s = radius * std::sin(angle);
}

}  // namespace

double Rng::normal() {
  const std::uint64_t index = normal_pos_++;
  double c, s;
  box_muller(block(index / 2, false), c, s);
  return (index % 2 == 0) ? c : s;
}

namespace {

constexpr int kLanes = 8;

/// kLanes independent Philox blocks; the lanes interleave so the multiply
/// chains overlap.
void philox_lanes(std::uint32_t (&c0)[kLanes], std::uint32_t (&c1)[kLanes],
                  std::uint32_t (&c2)[kLanes], std::uint32_t (&c3)[kLanes], std::uint32_t k0,
                  std::uint32_t k1) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k0 += kPhiloxW0;
      k1 += kPhiloxW1;
    }
    for (int l = 0; l < kLanes; ++l) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * c0[l];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * c2[l];
      const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1[l] ^ k0;
      const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3[l] ^ k1;
      c1[l] = static_cast<std::uint32_t>(p1);
      c3[l] = static_cast<std::uint32_t>(p0);
      c0[l] = n0;
      c2[l] = n2;
    }
  }
}

}  // namespace

void Rng::fill_normal(double* out, std::size_t count) {
  std::size_t k = 0;
  if (count > 0 && normal_pos_ % 2 == 1) out[k++] = normal();
  const std::uint32_t s_lo = static_cast<std::uint32_t>(stream_);
  const std::uint32_t s_hi = static_cast<std::uint32_t>(stream_ >> 32);
  const std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
  const std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
  while (k + 2 * kLanes <= count) {
    std::uint32_t c0[kLanes], c1[kLanes], c2[kLanes], c3[kLanes];
    const std::uint64_t first = normal_pos_ / 2;
    for (int l = 0; l < kLanes; ++l) {
      c0[l] = static_cast<std::uint32_t>(first + l);
      c1[l] = static_cast<std::uint32_t>((first + l) >> 32);
      c2[l] = s_lo;
      c3[l] = s_hi;
    }
    philox_lanes(c0, c1, c2, c3, k0, k1);
    for (int l = 0; l < kLanes; ++l) {
      box_muller({c0[l], c1[l], c2[l], c3[l]}, out[k], out[k + 1]);
      k += 2;
    }
    normal_pos_ += 2 * kLanes;
  }
  for (; k + 1 < count; k += 2) {
    box_muller(block(normal_pos_ / 2, false), out[k], out[k + 1]);
    normal_pos_ += 2;
  }
  if (k < count) out[k] = normal();
}

Rng Rng::split(std::uint64_t child) const {
  return Rng(seed_, stream_id({stream_, child}));
}

std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6A09E667F3BCC909ull;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> draws(rows, cols);
  rng.fill_normal(draws.data(), static_cast<std::size_t>(draws.size()));
  return draws;
}

Matrix gaussian_rows(Index row_begin, Index row_count, Index cols, const Rng& origin) {
  Rng rng = origin;
  rng.seek_normal(origin.normal_position() + static_cast<std::uint64_t>(row_begin * cols));
  return gaussian_matrix(row_count, cols, rng);
}

// ---------------------------------------------------------------------------

Vector sym_eigenvalues(const SymMatrix& a) {
  if (a.size() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("sym_eigenvalues: implicit QR iteration did not converge");
  }
  return solver.eigenvalues();
}

double sym_eig_min(const SymMatrix& a) {
  if (a.size() == 0) throw ShapeError("sym_eig_min: empty matrix");
  return sym_eigenvalues(a)(0);
}

double sym_eig_max(const SymMatrix& a) {
  if (a.size() == 0) throw ShapeError("sym_eig_max: empty matrix");
  const Vector ev = sym_eigenvalues(a);
  return ev(ev.size() - 1);
}

PowerIterationReport operator_norm_report(const Matrix& a) {
  require_finite(a, "operator_norm input");
  PowerIterationReport report;
  if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) {
    report.converged = true;
    return report;
  }
  const int cap = 10 * static_cast<int>(std::max(a.rows(), a.cols()));

  // Deterministic start: all-ones plus a small ramp so it is not orthogonal
  // to the top singular vector for structured inputs.
  Vector v(a.cols());
  for (Index j = 0; j < v.size(); ++j) v(j) = 1.0 + 0.1 * static_cast<double>(j % 7);
  v.normalize();

  double estimate = 0.0;
  for (int it = 1; it <= cap; ++it) {
    const Vector av = a * v;
    Vector w = a.transpose() * av;
    const double next = std::sqrt(av.squaredNorm());
    report.iterations = it;
    report.value = next;
    const double wn = w.norm();
    if (wn == 0.0) {
      // v landed in the null space; A v = 0 so the estimate is 0 only if A is zero.
      v = Vector::Ones(a.cols()).normalized();
      continue;
    }
    if (it > 1 && std::abs(next - estimate) <= 1e-8 * next) {
      report.converged = true;
      return report;
    }
    estimate = next;
    v = w / wn;
  }
  return report;
}

double operator_norm(const Matrix& a) {
  const auto r = operator_norm_report(a);
  if (!r.converged) {
    throw NumericalError("operator_norm: power iteration reached its cap of " +
                             std::to_string(r.iterations) + " iterations (last iterate " +
                             std::to_string(r.value) + ")",
                         r.value);
  }
  return r.value;
}

double frobenius_norm(const Matrix& a) { return a.norm(); }

double fro_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("fro_distance: shapes " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + " differ");
  }
  return (a - b).norm();
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

void require_finite(const Matrix& a, std::string_view what) {
  if (!a.allFinite()) throw NumericalError(std::string(what) + ": non-finite entry");
}

}  // namespace gdlab
