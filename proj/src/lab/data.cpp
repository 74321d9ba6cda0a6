#include "gdlab/lab/data.hpp"

#include <cmath>
#include <stdexcept>

namespace gdlab::lab {

namespace {

constexpr std::uint64_t kInputStream = 0x494e505554530001ull;
constexpr std::uint64_t kLabelStream = 0x4c4142454c530001ull;

}  // namespace

double max_abs_overlap(const Dataset& data) {
  double worst = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < i; ++j) worst = std::max(worst, std::abs(data.inner(i, j)));
  }
  return worst;
}

Dataset gen_data(Index n, Index channels, Index pixels, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_data: n must be >= 1");
  if (channels < 1 || pixels < 1) throw std::invalid_argument("gen_data: empty input shape");
  Rng inputs(seed, kInputStream);
  Rng labels(seed, kLabelStream);
  Dataset data;
  data.pixels = pixels;
  data.inputs.resize(channels, n * pixels);
  data.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    int rejected = 0;
    for (;;) {
      Matrix x = gaussian_matrix(channels, pixels, inputs);
      const double norm = x.norm();
      if (norm == 0.0) continue;
      x /= norm;
      bool ok = true;
      for (Index j = 0; j < i && ok; ++j) {
        const double overlap = x.cwiseProduct(data.input(j)).sum();
        ok = std::abs(overlap) <= 1.0 - 1e-6;
      }
      if (ok) {
        data.inputs.middleCols(i * pixels, pixels) = x;
        break;
      }
      if (++rejected >= 100) {
        throw std::runtime_error("gen_data: 100 consecutive draws were near-parallel to earlier "
                                 "inputs (n = " + std::to_string(n) + ", dimension " +
                                 std::to_string(channels * pixels) + ")");
      }
    }
    data.labels(i) = 2.0 * labels.uniform() - 1.0;
  }
  return data;
}

Dataset gen_duplicate_data(Index n, Index channels, Index pixels, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("gen_duplicate_data: n must be >= 2");
  Dataset data = gen_data(n, channels, pixels, seed);
  data.inputs.middleCols(pixels, pixels) = data.inputs.middleCols(0, pixels);
  return data;
}

}  // namespace gdlab::lab
