#pragma once

#include "gdlab/gram.hpp"
#include "gdlab/nets.hpp"

#include <optional>
#include <vector>

namespace gdlab {

struct TrainConfig {
  /// Explicit step size; when unset the auto rule is used, multiplied by
  /// `eta_scale`.
  std::optional<double> eta;
  double eta_scale = 1.0;
  int iterations = 100;
  /// Full metrics every iteration up to `dense_until`, then every `cadence`.
  int dense_until = 50;
  int cadence = 10;
  bool record_gram = true;
  bool record_weight_drift = true;
  bool record_activation_drift = true;
  /// Loss above divergence_factor * loss(0), or non-finite, stops the run.
  double divergence_factor = 1e6;
  /// lambda_hat = margin * lambda_min(G^(H)(0)) in the convergence envelope.
  double lambda_margin = 0.9;

  void validate() const;
  bool is_checkpoint(int k) const;
};

struct MetricsRow {
  int iteration = 0;
  double loss = 0.0;
  double residual_norm = 0.0;
  double lambda_min = 0.0;
  double gram_drift_fro = 0.0;
  double gram_drift_op = 0.0;
  /// ||W^(h)(k) - W^(h)(0)||_F / sqrt(m), h = 1..H.
  std::vector<double> weight_drift;
  double output_drift = 0.0;
  /// max_i ||x_i^(h)(k) - x_i^(h)(0)||, h = 1..H.
  std::vector<double> activation_drift;
};

struct MetricsLog {
  double eta = 0.0;
  /// lambda_min(G^(H)(0)).
  double lambda0 = 0.0;
  double lambda_margin = 0.9;
  /// Loss at every iteration 0..K (shorter when the run diverged).
  std::vector<double> loss;
  std::vector<MetricsRow> rows;
  bool diverged = false;
  int diverged_at = -1;

  /// Iterations k with loss(k) > (1 - eta*lambda_hat/2)^k loss(0).
  int envelope_violations() const;
  double envelope(int k) const;
  /// Least-squares slope of log(loss) against k over finite positive losses.
  double log_loss_slope() const;
  bool monotone_decreasing() const;
};

/// Gradient step on all layers at once, computed from the pre-step
/// parameters. Updates params in place and returns the trace it used.
/// Throws NumericalError when a gradient is non-finite.
ForwardTrace gd_step(Params& params, const NetworkConfig& config, const Dataset& data, double eta);
/// As above, reusing a trace of the current parameters.
void gd_step(Params& params, const NetworkConfig& config, const Dataset& data,
             const ForwardTrace& trace, double eta);

/// 1 / (2 lambda_max(G^(H)(0) + G^(a)(0))).
double auto_step_size(const Params& params, const ForwardTrace& trace, const NetworkConfig& config);

/// Trains in place. Never mutates the dataset.
MetricsLog train(Params& params, const NetworkConfig& config, const TrainConfig& train_config,
                 const Dataset& data);

/// ||(y - u+) - (I - eta G)(y - u)|| after one step, with G from gram_full.
double residual_dynamics_check(const Params& params, const NetworkConfig& config,
                               const Dataset& data, double eta);

}  // namespace gdlab
