#pragma once

#include "gdlab/gram.hpp"
#include "gdlab/lab/spec.hpp"
#include "gdlab/lab/table.hpp"
#include "gdlab/nets.hpp"
#include "gdlab/trainer.hpp"

#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <vector>

namespace gdlab::lab {

struct DataParams {
  Index n = 8;
  Index channels = 8;
  Index pixels = 1;
  std::uint64_t seed = 0;
  bool duplicate = false;
};

Dataset make_data(const DataParams& p);

/// Runs fn(0..count-1) on up to `threads` workers. Results land in index
/// order, so output never depends on scheduling. The first exception thrown
/// by any task is rethrown after all workers stop.
void run_indexed(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

struct NamedTable {
  std::string file;
  Table table;
};

struct ExperimentOutput {
  std::string experiment;
  std::vector<NamedTable> tables;
  std::vector<std::string> warnings;
  std::vector<std::uint64_t> seeds;
};

// --- convergence ------------------------------------------------------------

struct ConvergenceParams {
  NetworkConfig net;
  DataParams data;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1};
  int threads = 1;
};

struct ConvergenceRun {
  std::uint64_t seed = 0;
  MetricsLog log;
  /// min over checkpoints of lambda_min(G^(H)(k)) / lambda_min(G^(H)(0)).
  double min_lambda_ratio = 0.0;
};

std::vector<ConvergenceRun> exp_convergence(const ConvergenceParams& p);
ExperimentOutput convergence_tables(const ConvergenceParams& p,
                                    const std::vector<ConvergenceRun>& runs);

// --- width concentration ----------------------------------------------------

struct ConcentrationParams {
  NetworkConfig net;
  std::vector<Index> widths = {256, 1024, 4096};
  DataParams data;
  std::vector<std::uint64_t> seeds = {1};
  int quad_nodes = QuadRule::kDefaultNodes;
  int threads = 1;
};

struct ConcentrationTrial {
  Index width = 0;
  std::uint64_t seed = 0;
  double err_inf = 0.0;
  double lambda_g = 0.0;
  double lambda_k = 0.0;
};

struct ConcentrationResult {
  KernelState kernel;
  std::vector<ConcentrationTrial> trials;
  std::vector<double> median_err;
  /// Least-squares slope of log(median error) against log(m).
  double slope = 0.0;
  /// Share of seeds at the largest width with lambda_g >= 0.75 lambda_k.
  double fraction_three_quarters = 0.0;
};

ConcentrationResult exp_width_concentration(const ConcentrationParams& p);
ExperimentOutput concentration_tables(const ConcentrationParams& p, const ConcentrationResult& r);

// --- depth scan --------------------------------------------------------------

struct DepthScanParams {
  std::vector<Arch> archs = {Arch::fully_connected, Arch::resnet};
  std::vector<int> depths = {2, 4, 8, 16};
  Index width = 2048;
  DataParams data;
  Activation activation = Activation::softplus();
  double c_res = 0.5;
  /// Each W^(h) moves by a Gaussian matrix of Frobenius norm perturbation*sqrt(m).
  double perturbation = 0.01;
  std::vector<std::uint64_t> seeds = {1};
  int quad_nodes = QuadRule::kDefaultNodes;
  int threads = 1;
};

struct DepthScanPoint {
  Arch arch = Arch::fully_connected;
  int depth = 0;
  std::uint64_t seed = 0;
  double lambda_k = 0.0;
  double gram_shift_top = 0.0;
  double gram_shift_first = 0.0;
  double amplification = 0.0;
};

struct DepthScanSeries {
  Arch arch = Arch::fully_connected;
  std::vector<int> depths;
  /// Median over seeds per depth.
  std::vector<double> amplification;
  std::vector<double> lambda_k;
  bool amplification_increasing = false;
  double amplification_ratio = 0.0;
  /// min over H of H^2 lambda_k(H) divided by its value at the first depth.
  double scaled_lambda_ratio = 0.0;
};

struct DepthScanResult {
  std::vector<DepthScanPoint> points;
  std::vector<DepthScanSeries> series;
  const DepthScanSeries& series_for(Arch arch) const;
};

/// A(H) = ||G^(H)_pert - G^(H)||_F / ||G^(1)_pert - G^(1)||_F with G^(h) the
/// gradient Gram of layer h.
DepthScanPoint depth_scan_point(Arch arch, int depth, std::uint64_t seed, const Dataset& data,
                                const DepthScanParams& p, const KernelState* kernel);
DepthScanResult exp_depth_scan(const DepthScanParams& p);
ExperimentOutput depth_scan_tables(const DepthScanParams& p, const DepthScanResult& r);

// --- Gram stability ------------------------------------------------------------

struct GramStabilityParams {
  NetworkConfig net;
  std::vector<Index> widths = {512, 2048, 8192};
  DataParams data;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1};
  int threads = 1;
};

struct GramStabilityRun {
  Index width = 0;
  std::uint64_t seed = 0;
  MetricsLog log;
};

struct GramStabilityResult {
  std::vector<GramStabilityRun> runs;
  /// Median over seeds of the final ||G^(H)(K) - G^(H)(0)||_F, per width.
  std::vector<double> median_drift;
  std::vector<double> median_weight_drift;
  bool strictly_decreasing = false;
  /// min over seeds and checkpoints of lambda_min(G^(H)(k)) / lambda_min(G^(H)(0))
  /// at the largest width.
  double min_lambda_ratio_largest = 0.0;
};

GramStabilityResult exp_gram_stability(const GramStabilityParams& p);
ExperimentOutput gram_stability_tables(const GramStabilityParams& p, const GramStabilityResult& r);

// --- gradient check ---------------------------------------------------------

struct GradCheckCase {
  NetworkConfig net;
  DataParams data;
};

struct GradCheckRow {
  GradCheckCase c;
  GradCheckReport report;
};

std::vector<GradCheckRow> exp_gradcheck(const std::vector<GradCheckCase>& cases, double eps,
                                        int threads);
ExperimentOutput gradcheck_tables(const std::vector<GradCheckRow>& rows, double tolerance);

// --- spec dispatch ------------------------------------------------------------

/// Names accepted by run_experiment (the CLI subcommands).
const std::vector<std::string>& experiment_names();

/// Builds typed parameters from the spec and runs the named experiment.
/// Throws SpecError naming the field for out-of-range values.
ExperimentOutput run_experiment(const std::string& name, const ExperimentSpec& spec,
                                std::uint64_t master_seed, int threads);

/// Desk-scale guard: warnings when theory-sized widths dwarf the configured m.
std::vector<std::string> width_warnings(Arch arch, int depth, Index width, Index n);

double median(std::vector<double> values);
/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace gdlab::lab
