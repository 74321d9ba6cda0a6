#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gdlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised when an iterative routine hits its cap or produces non-finite values.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double last_value = 0.0)
      : std::runtime_error(what), last_value_(last_value) {}
  double last_value() const { return last_value_; }

 private:
  double last_value_;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Square matrix that is exactly symmetric by construction.
class SymMatrix {
 public:
  SymMatrix() = default;
  /// Symmetrizes as (A + A^T)/2. Throws ShapeError for non-square input and
  /// NumericalError for non-finite entries.
  explicit SymMatrix(const Matrix& a);

  static SymMatrix identity(Index n);
  static SymMatrix zero(Index n);

  Index size() const { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

/// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Counter-based generator keyed by (seed, stream). Every draw is a pure
/// function of (seed, stream, draw index), so positions can be sought and
/// streams split without coordination between threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Uniform in the open interval (0, 1).
  double uniform();
  /// Standard normal via Box-Muller; draws 2k and 2k+1 share one Philox block.
  double normal();
  /// The next `count` normal() draws, written in order.
  void fill_normal(double* out, std::size_t count);

  /// Position the generator so the next normal() returns draw `index`.
  void seek_normal(std::uint64_t index) { normal_pos_ = index; }
  std::uint64_t normal_position() const { return normal_pos_; }

  /// Independent generator on a derived stream.
  Rng split(std::uint64_t child) const;

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t index, bool uniform_domain) const;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t normal_pos_ = 0;
  std::uint64_t uniform_pos_ = 0;
};

/// Mixes a list of integers into a stream id (splitmix64 chaining).
std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts);

/// i.i.d. N(0,1) entries filled in row-major order: entry (i, j) is normal
/// draw number i*cols + j counted from the generator's current position.
Matrix gaussian_matrix(Index rows, Index cols, Rng& rng);

/// Rows [row_begin, row_begin + row_count) of the matrix gaussian_matrix would
/// produce from a generator at position `origin`. Does not advance anything.
Matrix gaussian_rows(Index row_begin, Index row_count, Index cols, const Rng& origin);

double sym_eig_min(const SymMatrix& a);
double sym_eig_max(const SymMatrix& a);
/// Ascending eigenvalues.
Vector sym_eigenvalues(const SymMatrix& a);

struct PowerIterationReport {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Largest singular value by power iteration on A^T A (relative tolerance
/// 1e-8, cap 10*max(rows, cols) iterations). Never throws; check `converged`.
PowerIterationReport operator_norm_report(const Matrix& a);
/// As above but throws NumericalError (carrying the last iterate) on cap.
double operator_norm(const Matrix& a);

double frobenius_norm(const Matrix& a);
double fro_distance(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& a);
void require_finite(const Matrix& a, std::string_view what);

}  // namespace gdlab
