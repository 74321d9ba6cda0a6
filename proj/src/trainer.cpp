#include "gdlab/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace gdlab {

void TrainConfig::validate() const {
  if (eta && !(*eta >= 0.0 && std::isfinite(*eta))) {
    throw std::invalid_argument("TrainConfig.eta: must be a finite non-negative number");
  }
  if (!(eta_scale > 0.0)) throw std::invalid_argument("TrainConfig.eta_scale: must be positive");
  if (iterations < 0) throw std::invalid_argument("TrainConfig.iterations: must be >= 0");
  if (cadence < 1) throw std::invalid_argument("TrainConfig.cadence: must be >= 1");
  if (dense_until < 0) throw std::invalid_argument("TrainConfig.dense_until: must be >= 0");
  if (!(divergence_factor > 1.0)) {
    throw std::invalid_argument("TrainConfig.divergence_factor: must exceed 1");
  }
  if (!(lambda_margin > 0.0 && lambda_margin <= 1.0)) {
    throw std::invalid_argument("TrainConfig.lambda_margin: must lie in (0, 1]");
  }
}

bool TrainConfig::is_checkpoint(int k) const {
  return k <= dense_until || k % cadence == 0 || k == iterations;
}

double MetricsLog::envelope(int k) const {
  if (loss.empty()) return 0.0;
  const double rate = 1.0 - eta * lambda_margin * lambda0 / 2.0;
  return std::pow(rate, k) * loss.front();
}

int MetricsLog::envelope_violations() const {
  int count = 0;
  for (std::size_t k = 0; k < loss.size(); ++k) {
    if (!(loss[k] <= envelope(static_cast<int>(k)))) ++count;
  }
  return count;
}

double MetricsLog::log_loss_slope() const {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t k = 0; k < loss.size(); ++k) {
    if (!(loss[k] > 0.0) || !std::isfinite(loss[k])) continue;
    const double x = static_cast<double>(k);
    const double y = std::log(loss[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) return 0.0;
  const double denom = count * sxx - sx * sx;
  return denom == 0.0 ? 0.0 : (count * sxy - sx * sy) / denom;
}

bool MetricsLog::monotone_decreasing() const {
  for (std::size_t k = 1; k < loss.size(); ++k) {
    if (!(loss[k] < loss[k - 1])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

void gd_step(Params& params, const NetworkConfig& config, const Dataset& data,
             const ForwardTrace& trace, double eta) {
  if (!(eta >= 0.0)) throw std::invalid_argument("gd_step: eta must be non-negative");
  const Vector residual = trace.u - data.labels;
  if (!residual.allFinite()) throw NumericalError("gd_step: non-finite residual");
  if (eta == 0.0 || residual.cwiseAbs().maxCoeff() == 0.0) return;

  const Index p = config.pixels;
  auto dz = backprop_signals(params, config, trace);
  for (int h = 1; h <= config.depth; ++h) {
    for (Index i = 0; i < residual.size(); ++i) dz[h].middleCols(i * p, p) *= residual(i);
    if (!dz[h].allFinite()) {
      throw NumericalError("gd_step: non-finite gradient signal at layer " + std::to_string(h));
    }
  }
  Matrix grad_a = Matrix::Zero(config.width, p);
  const Matrix& xH = trace.x[config.depth];
  for (Index i = 0; i < residual.size(); ++i) grad_a += residual(i) * xH.middleCols(i * p, p);
  if (!grad_a.allFinite()) throw NumericalError("gd_step: non-finite output-weight gradient");

  // Every signal above was computed from the pre-step weights.
  for (int h = 1; h <= config.depth; ++h) {
    const Matrix phi = patchify(trace.x[h - 1], config.filter, p);
    params.W[h - 1].noalias() -= eta * dz[h] * phi.transpose();
  }
  params.a -= eta * grad_a;
}

ForwardTrace gd_step(Params& params, const NetworkConfig& config, const Dataset& data, double eta) {
  ForwardTrace trace = forward(params, config, data);
  gd_step(params, config, data, trace, eta);
  return trace;
}

double auto_step_size(const Params& params, const ForwardTrace& trace,
                      const NetworkConfig& config) {
  const GramMatrix gh = gram_layer_H(trace, params, config);
  const GramMatrix ga = gram_output(trace);
  const double top = sym_eig_max(SymMatrix(gh.matrix.matrix() + ga.matrix.matrix()));
  if (!(top > 0.0)) {
    throw NumericalError("auto_step_size: lambda_max(G^(H) + G^(a)) = " + std::to_string(top), top);
  }
  return 1.0 / (2.0 * top);
}

MetricsLog train(Params& params, const NetworkConfig& config, const TrainConfig& tc,
                 const Dataset& data) {
  tc.validate();
  config.validate();
  MetricsLog log;
  log.lambda_margin = tc.lambda_margin;

  ForwardTrace trace = forward(params, config, data);
  const GramMatrix g0 = gram_layer_H(trace, params, config);
  log.lambda0 = g0.lambda_min();
  log.eta = tc.eta ? *tc.eta : tc.eta_scale * auto_step_size(params, trace, config);

  const double m = static_cast<double>(config.width);
  std::vector<Matrix> w0;
  Matrix a0;
  if (tc.record_weight_drift) {
    w0 = params.W;
    a0 = params.a;
  }
  const std::vector<Matrix> x0 = tc.record_activation_drift ? trace.x : std::vector<Matrix>{};
  const double loss0 = loss(trace, data.labels);

  for (int k = 0;; ++k) {
    const double lk = loss(trace, data.labels);
    log.loss.push_back(lk);
    const bool blown = !std::isfinite(lk) || (loss0 > 0.0 && lk > tc.divergence_factor * loss0);

    if (tc.is_checkpoint(k) || blown) {
      MetricsRow row;
      row.iteration = k;
      row.loss = lk;
      row.residual_norm = (data.labels - trace.u).norm();
      if (tc.record_gram && !blown) {
        const GramMatrix gk = k == 0 ? g0 : gram_layer_H(trace, params, config);
        row.lambda_min = gk.lambda_min();
        const GramDrift d = gram_drift(gk, g0);
        row.gram_drift_fro = d.fro;
        row.gram_drift_op = d.op;
      } else {
        row.lambda_min = std::nan("");
        row.gram_drift_fro = row.gram_drift_op = std::nan("");
      }
      if (tc.record_weight_drift) {
        for (int h = 1; h <= config.depth; ++h) {
          row.weight_drift.push_back(fro_distance(params.W[h - 1], w0[h - 1]) / std::sqrt(m));
        }
        row.output_drift = fro_distance(params.a, a0) / std::sqrt(m);
      }
      if (tc.record_activation_drift) {
        for (int h = 1; h <= config.depth; ++h) {
          double worst = 0.0;
          for (Index i = 0; i < data.size(); ++i) {
            worst = std::max(worst, (trace.layer(h, i) - x0[h].middleCols(i * config.pixels,
                                                                           config.pixels))
                                        .norm());
          }
          row.activation_drift.push_back(worst);
        }
      }
      log.rows.push_back(std::move(row));
    }
    if (blown) {
      log.diverged = true;
      log.diverged_at = k;
      break;
    }
    if (k == tc.iterations) break;
    try {
      gd_step(params, config, data, trace, log.eta);
    } catch (const NumericalError&) {
      log.diverged = true;
      log.diverged_at = k;
      break;
    }
    trace = forward(params, config, data);
  }
  return log;
}

double residual_dynamics_check(const Params& params, const NetworkConfig& config,
                               const Dataset& data, double eta) {
  const ForwardTrace trace = forward(params, config, data);
  const GramMatrix g = gram_full(trace, params, config);
  Params next = params;
  gd_step(next, config, data, trace, eta);
  const Vector u_next = forward(next, config, data).u;
  const Vector before = data.labels - trace.u;
  const Vector predicted = before - eta * (g.matrix.matrix() * before);
  return ((data.labels - u_next) - predicted).norm();
}

}  // namespace gdlab
