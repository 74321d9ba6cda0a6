#pragma once

#include "gdlab/nets.hpp"

#include <cstdint>

namespace gdlab::lab {

/// Inputs uniform on the unit sphere of R^{channels x pixels}, redrawn until
/// every pair satisfies |<x_i, x_j>| <= 1 - 1e-6; labels uniform in [-1, 1].
/// Throws std::runtime_error after 100 consecutive rejected draws.
Dataset gen_data(Index n, Index channels, Index pixels, std::uint64_t seed);

/// gen_data with sample 1 replaced by a copy of sample 0 (degenerate control).
Dataset gen_duplicate_data(Index n, Index channels, Index pixels, std::uint64_t seed);

/// Largest |<x_i, x_j>| over i != j.
double max_abs_overlap(const Dataset& data);

}  // namespace gdlab::lab
