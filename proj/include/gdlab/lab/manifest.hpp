#pragma once

#include "gdlab/lab/experiments.hpp"
#include "gdlab/lab/spec.hpp"

#include <cstdint>
#include <string>

namespace gdlab::lab {

struct RunContext {
  std::uint64_t master_seed = 0;
  int threads = 1;
  double wall_seconds = 0.0;
};

const char* version();

/// JSON text of manifest.json: spec hash and canonical form, version, seeds,
/// thread count, wall-clock, warnings and a SHA-256 per written file.
std::string manifest_json(const ExperimentOutput& out, const ExperimentSpec& spec,
                          const RunContext& ctx);

/// Writes every table plus manifest.json into `dir` (created if missing).
void write_outputs(const std::string& dir, const ExperimentOutput& out, const ExperimentSpec& spec,
                   const RunContext& ctx);

}  // namespace gdlab::lab
