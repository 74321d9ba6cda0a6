#include "gdlab/lab/experiments.hpp"

#include "gdlab/lab/data.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace gdlab::lab {

Dataset make_data(const DataParams& p) {
  return p.duplicate ? gen_duplicate_data(p.n, p.channels, p.pixels, p.seed)
                     : gen_data(p.n, p.channels, p.pixels, p.seed);
}

void run_indexed(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (failure) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nan("");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double lx = std::log(x[k]);
    const double ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<std::string> width_warnings(Arch arch, int depth, Index width, Index n) {
  const double n4 = std::pow(static_cast<double>(n), 4);
  const double theory = arch == Arch::fully_connected
                            ? n4 * std::pow(2.0, depth)
                            : n4 * static_cast<double>(depth) * static_cast<double>(depth);
  std::vector<std::string> out;
  if (theory > static_cast<double>(width)) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "width m=%lld is below the theory-scale width ~%.3g (n^4 %s); running at desk "
                  "scale anyway",
                  static_cast<long long>(width), theory,
                  arch == Arch::fully_connected ? "x 2^H" : "x H^2");
    out.emplace_back(buf);
  }
  return out;
}

namespace {

using I64 = std::int64_t;

Cell i64(I64 v) { return Cell(v); }
Cell u64(std::uint64_t v) { return Cell(static_cast<I64>(v)); }
Cell idx(Index v) { return Cell(static_cast<I64>(v)); }

std::vector<Cell> keys(const std::string& experiment, const std::string& arch, int depth,
                       Index width, Index n, std::uint64_t seed, I64 iteration) {
  return {experiment, arch, i64(depth), idx(width), idx(n), u64(seed), i64(iteration)};
}

void append(std::vector<Cell>& row, std::initializer_list<Cell> cells) {
  row.insert(row.end(), cells.begin(), cells.end());
}

double min_lambda_ratio(const MetricsLog& log) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& row : log.rows) {
    if (std::isfinite(row.lambda_min)) worst = std::min(worst, row.lambda_min / log.lambda0);
  }
  return worst;
}

}  // namespace

// --- convergence ------------------------------------------------------------

std::vector<ConvergenceRun> exp_convergence(const ConvergenceParams& p) {
  p.net.validate();
  const Dataset data = make_data(p.data);
  std::vector<ConvergenceRun> runs(p.seeds.size());
  run_indexed(p.seeds.size(), p.threads, [&](std::size_t k) {
    NetworkConfig cfg = p.net;
    cfg.seed = p.seeds[k];
    Params params = init_params(cfg);
    runs[k].seed = cfg.seed;
    runs[k].log = train(params, cfg, p.train, data);
    runs[k].min_lambda_ratio = min_lambda_ratio(runs[k].log);
  });
  return runs;
}

ExperimentOutput convergence_tables(const ConvergenceParams& p,
                                    const std::vector<ConvergenceRun>& runs) {
  const std::string exp = "train";
  const std::string arch = arch_name(p.net.arch);
  const int H = p.net.depth;
  const Index m = p.net.width;
  const Index n = p.data.n;

  Table loss_table = Table::with_keys({"loss", "envelope"});
  std::vector<std::string> metric_cols = {"loss",           "residual_norm", "lambda_min",
                                          "lambda_ratio",   "gram_drift_fro", "gram_drift_op",
                                          "output_drift"};
  for (int h = 1; h <= H; ++h) metric_cols.push_back("weight_drift_" + std::to_string(h));
  for (int h = 1; h <= H; ++h) metric_cols.push_back("activation_drift_" + std::to_string(h));
  Table metrics = Table::with_keys(metric_cols);
  Table summary = Table::with_keys({"eta", "lambda0", "lambda_hat", "loss0", "loss_final",
                                    "loss_ratio", "log_loss_slope", "envelope_violations",
                                    "monotone", "diverged", "diverged_at", "min_lambda_ratio"});
  ExperimentOutput out;
  out.experiment = exp;
  for (const auto& run : runs) {
    out.seeds.push_back(run.seed);
    const MetricsLog& log = run.log;
    for (std::size_t k = 0; k < log.loss.size(); ++k) {
      auto row = keys(exp, arch, H, m, n, run.seed, static_cast<I64>(k));
      append(row, {log.loss[k], log.envelope(static_cast<int>(k))});
      loss_table.add_row(std::move(row));
    }
    for (const auto& r : log.rows) {
      auto row = keys(exp, arch, H, m, n, run.seed, r.iteration);
      append(row, {r.loss, r.residual_norm, r.lambda_min, r.lambda_min / log.lambda0,
                   r.gram_drift_fro, r.gram_drift_op, r.output_drift});
      for (int h = 0; h < H; ++h) {
        row.push_back(h < static_cast<int>(r.weight_drift.size()) ? Cell(r.weight_drift[h])
                                                                   : Cell(std::nan("")));
      }
      for (int h = 0; h < H; ++h) {
        row.push_back(h < static_cast<int>(r.activation_drift.size())
                          ? Cell(r.activation_drift[h])
                          : Cell(std::nan("")));
      }
      metrics.add_row(std::move(row));
    }
    const double loss0 = log.loss.front();
    const double final_loss = log.loss.back();
    auto row = keys(exp, arch, H, m, n, run.seed, static_cast<I64>(log.loss.size() - 1));
    append(row, {log.eta, log.lambda0, log.lambda_margin * log.lambda0, loss0, final_loss,
                 final_loss / loss0, log.log_loss_slope(), i64(log.envelope_violations()),
                 i64(log.monotone_decreasing() ? 1 : 0), i64(log.diverged ? 1 : 0),
                 i64(log.diverged_at), run.min_lambda_ratio});
    summary.add_row(std::move(row));
    if (log.diverged) {
      out.warnings.push_back("seed " + std::to_string(run.seed) + " diverged at iteration " +
                             std::to_string(log.diverged_at));
    }
  }
  out.tables = {{"loss.csv", std::move(loss_table)},
                {"metrics.csv", std::move(metrics)},
                {"summary.csv", std::move(summary)}};
  return out;
}

// --- width concentration ----------------------------------------------------

ConcentrationResult exp_width_concentration(const ConcentrationParams& p) {
  p.net.validate();
  if (p.widths.empty()) throw std::invalid_argument("concentration: empty width grid");
  const Dataset data = make_data(p.data);
  const QuadRule quad(p.quad_nodes);
  ConcentrationResult r;
  r.kernel = population_kernel(data, p.net, quad);
  const double lambda_k = r.kernel.lambda_min();
  const Matrix& K = r.kernel.kernel.matrix.matrix();

  r.trials.resize(p.widths.size() * p.seeds.size());
  run_indexed(r.trials.size(), p.threads, [&](std::size_t t) {
    NetworkConfig cfg = p.net;
    cfg.width = p.widths[t / p.seeds.size()];
    cfg.seed = p.seeds[t % p.seeds.size()];
    Matrix a;
    const ForwardTrace trace = forward_at_init_streaming(cfg, data, &a);
    const GramMatrix g = gram_layer_H(trace, a, cfg);
    ConcentrationTrial& trial = r.trials[t];
    trial.width = cfg.width;
    trial.seed = cfg.seed;
    trial.err_inf = (g.matrix.matrix() - K).cwiseAbs().maxCoeff();
    trial.lambda_g = g.lambda_min();
    trial.lambda_k = lambda_k;
  });

  std::vector<double> xs;
  for (std::size_t w = 0; w < p.widths.size(); ++w) {
    std::vector<double> errs;
    for (std::size_t s = 0; s < p.seeds.size(); ++s) {
      errs.push_back(r.trials[w * p.seeds.size() + s].err_inf);
    }
    r.median_err.push_back(median(errs));
    xs.push_back(static_cast<double>(p.widths[w]));
  }
  r.slope = loglog_slope(xs, r.median_err);

  const std::size_t last = p.widths.size() - 1;
  int good = 0;
  for (std::size_t s = 0; s < p.seeds.size(); ++s) {
    if (r.trials[last * p.seeds.size() + s].lambda_g >= 0.75 * lambda_k) ++good;
  }
  r.fraction_three_quarters =
      p.seeds.empty() ? 0.0 : static_cast<double>(good) / static_cast<double>(p.seeds.size());
  return r;
}

ExperimentOutput concentration_tables(const ConcentrationParams& p, const ConcentrationResult& r) {
  const std::string exp = "concentration";
  const std::string arch = arch_name(p.net.arch);
  const int H = p.net.depth;
  const Index n = p.data.n;
  ExperimentOutput out;
  out.experiment = exp;
  out.seeds = p.seeds;

  Table trials = Table::with_keys(
      {"err_inf", "lambda_min_G", "lambda_min_K", "lambda_gap", "lambda_ratio"});
  for (const auto& t : r.trials) {
    auto row = keys(exp, arch, H, t.width, n, t.seed, 0);
    append(row, {t.err_inf, t.lambda_g, t.lambda_k, std::abs(t.lambda_g - t.lambda_k),
                 t.lambda_g / t.lambda_k});
    trials.add_row(std::move(row));
  }
  Table summary = Table::with_keys(
      {"median_err_inf", "median_lambda_ratio", "fraction_ratio_ge_0_75", "loglog_slope"});
  for (std::size_t w = 0; w < p.widths.size(); ++w) {
    std::vector<double> ratios;
    int good = 0;
    for (std::size_t s = 0; s < p.seeds.size(); ++s) {
      const auto& t = r.trials[w * p.seeds.size() + s];
      ratios.push_back(t.lambda_g / t.lambda_k);
      if (t.lambda_g >= 0.75 * t.lambda_k) ++good;
    }
    auto row = keys(exp, arch, H, p.widths[w], n, 0, 0);
    append(row, {r.median_err[w], median(ratios),
                 static_cast<double>(good) / static_cast<double>(p.seeds.size()), r.slope});
    summary.add_row(std::move(row));
  }
  Table kernel = Table::with_keys({"i", "j", "K"});
  const Matrix& K = r.kernel.kernel.matrix.matrix();
  for (Index i = 0; i < K.rows(); ++i) {
    for (Index j = 0; j < K.cols(); ++j) {
      auto row = keys(exp, arch, H, 0, n, 0, 0);
      append(row, {idx(i), idx(j), K(i, j)});
      kernel.add_row(std::move(row));
    }
  }
  if (r.kernel.lambda_min() <= 1e-10) {
    out.warnings.push_back("population kernel is numerically singular (lambda_min = " +
                           std::to_string(r.kernel.lambda_min()) + ")");
  }
  out.tables = {{"trials.csv", std::move(trials)},
                {"summary.csv", std::move(summary)},
                {"kernel.csv", std::move(kernel)}};
  return out;
}

// --- depth scan ----------------------------------------------------------------

namespace {

constexpr std::uint64_t kPerturbTag = 0x5045525455524231ull;

NetworkConfig scan_config(Arch arch, int depth, const DepthScanParams& p, const Dataset& data) {
  NetworkConfig cfg;
  cfg.arch = arch;
  cfg.depth = depth;
  cfg.width = p.width;
  cfg.channels = data.channels();
  cfg.pixels = data.pixels;
  cfg.filter = 1;
  cfg.c_res = p.c_res;
  cfg.activation = p.activation;
  cfg.c_sigma = compute_c_sigma(p.activation, QuadRule(p.quad_nodes));
  return cfg;
}

}  // namespace

DepthScanPoint depth_scan_point(Arch arch, int depth, std::uint64_t seed, const Dataset& data,
                                const DepthScanParams& p, const KernelState* kernel) {
  NetworkConfig cfg = scan_config(arch, depth, p, data);
  cfg.seed = seed;
  Params params = init_params(cfg);
  const auto before = gram_layers(forward(params, cfg, data), params, cfg);
  const double target = p.perturbation * std::sqrt(static_cast<double>(cfg.width));
  for (int h = 1; h <= depth; ++h) {
    Rng rng(seed, stream_id({kPerturbTag, static_cast<std::uint64_t>(h)}));
    Matrix delta = gaussian_matrix(params.W[h - 1].rows(), params.W[h - 1].cols(), rng);
    params.W[h - 1] += (target / delta.norm()) * delta;
  }
  const auto after = gram_layers(forward(params, cfg, data), params, cfg);
  DepthScanPoint pt;
  pt.arch = arch;
  pt.depth = depth;
  pt.seed = seed;
  pt.gram_shift_top = (after[depth].matrix.matrix() - before[depth].matrix.matrix()).norm();
  pt.gram_shift_first = (after[1].matrix.matrix() - before[1].matrix.matrix()).norm();
  pt.amplification = pt.gram_shift_top / pt.gram_shift_first;
  pt.lambda_k = kernel ? kernel->lambda_min() : std::nan("");
  return pt;
}

const DepthScanSeries& DepthScanResult::series_for(Arch arch) const {
  for (const auto& s : series) {
    if (s.arch == arch) return s;
  }
  throw std::out_of_range("depth scan has no series for " + arch_name(arch));
}

DepthScanResult exp_depth_scan(const DepthScanParams& p) {
  if (p.depths.empty() || p.archs.empty()) throw std::invalid_argument("depth scan: empty grid");
  const Dataset data = make_data(p.data);
  const QuadRule quad(p.quad_nodes);
  DepthScanResult r;

  std::vector<KernelState> kernels(p.archs.size() * p.depths.size());
  for (std::size_t a = 0; a < p.archs.size(); ++a) {
    for (std::size_t d = 0; d < p.depths.size(); ++d) {
      kernels[a * p.depths.size() + d] =
          population_kernel(data, scan_config(p.archs[a], p.depths[d], p, data), quad);
    }
  }
  const std::size_t per_arch = p.depths.size() * p.seeds.size();
  r.points.resize(p.archs.size() * per_arch);
  run_indexed(r.points.size(), p.threads, [&](std::size_t t) {
    const std::size_t a = t / per_arch;
    const std::size_t d = (t % per_arch) / p.seeds.size();
    const std::size_t s = t % p.seeds.size();
    r.points[t] = depth_scan_point(p.archs[a], p.depths[d], p.seeds[s], data, p,
                                   &kernels[a * p.depths.size() + d]);
  });

  for (std::size_t a = 0; a < p.archs.size(); ++a) {
    DepthScanSeries s;
    s.arch = p.archs[a];
    s.depths = p.depths;
    for (std::size_t d = 0; d < p.depths.size(); ++d) {
      std::vector<double> amps;
      for (std::size_t k = 0; k < p.seeds.size(); ++k) {
        amps.push_back(r.points[a * per_arch + d * p.seeds.size() + k].amplification);
      }
      s.amplification.push_back(median(amps));
      s.lambda_k.push_back(kernels[a * p.depths.size() + d].lambda_min());
    }
    s.amplification_increasing = true;
    for (std::size_t d = 1; d < s.amplification.size(); ++d) {
      if (!(s.amplification[d] > s.amplification[d - 1])) s.amplification_increasing = false;
    }
    s.amplification_ratio = s.amplification.back() / s.amplification.front();
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < p.depths.size(); ++d) {
      const double h = static_cast<double>(p.depths[d]);
      lowest = std::min(lowest, h * h * s.lambda_k[d]);
    }
    const double h0 = static_cast<double>(p.depths.front());
    s.scaled_lambda_ratio = lowest / (h0 * h0 * s.lambda_k.front());
    r.series.push_back(std::move(s));
  }
  return r;
}

ExperimentOutput depth_scan_tables(const DepthScanParams& p, const DepthScanResult& r) {
  const std::string exp = "depth-scan";
  const Index n = p.data.n;
  ExperimentOutput out;
  out.experiment = exp;
  out.seeds = p.seeds;
  Table points = Table::with_keys({"lambda_min_K", "H2_lambda_min_K", "gram_shift_H",
                                   "gram_shift_1", "amplification"});
  for (const auto& pt : r.points) {
    const double h = static_cast<double>(pt.depth);
    auto row = keys(exp, arch_name(pt.arch), pt.depth, p.width, n, pt.seed, 0);
    append(row, {pt.lambda_k, h * h * pt.lambda_k, pt.gram_shift_top, pt.gram_shift_first,
                 pt.amplification});
    points.add_row(std::move(row));
  }
  Table series = Table::with_keys({"median_amplification", "lambda_min_K", "H2_lambda_min_K"});
  Table summary = Table::with_keys(
      {"amplification_ratio", "amplification_increasing", "H2_lambda_min_ratio"});
  for (const auto& s : r.series) {
    for (std::size_t d = 0; d < s.depths.size(); ++d) {
      const double h = static_cast<double>(s.depths[d]);
      auto row = keys(exp, arch_name(s.arch), s.depths[d], p.width, n, 0, 0);
      append(row, {s.amplification[d], s.lambda_k[d], h * h * s.lambda_k[d]});
      series.add_row(std::move(row));
    }
    auto row = keys(exp, arch_name(s.arch), s.depths.back(), p.width, n, 0, 0);
    append(row, {s.amplification_ratio, i64(s.amplification_increasing ? 1 : 0),
                 s.scaled_lambda_ratio});
    summary.add_row(std::move(row));
  }
  out.tables = {{"points.csv", std::move(points)},
                {"series.csv", std::move(series)},
                {"summary.csv", std::move(summary)}};
  return out;
}

// --- Gram stability ------------------------------------------------------------

GramStabilityResult exp_gram_stability(const GramStabilityParams& p) {
  p.net.validate();
  if (p.widths.empty()) throw std::invalid_argument("gram stability: empty width grid");
  const Dataset data = make_data(p.data);
  GramStabilityResult r;
  r.runs.resize(p.widths.size() * p.seeds.size());
  run_indexed(r.runs.size(), p.threads, [&](std::size_t t) {
    NetworkConfig cfg = p.net;
    cfg.width = p.widths[t / p.seeds.size()];
    cfg.seed = p.seeds[t % p.seeds.size()];
    Params params = init_params(cfg);
    TrainConfig tc = p.train;
    tc.record_gram = true;
    r.runs[t].width = cfg.width;
    r.runs[t].seed = cfg.seed;
    r.runs[t].log = train(params, cfg, tc, data);
  });
  for (std::size_t w = 0; w < p.widths.size(); ++w) {
    std::vector<double> drift, wdrift;
    for (std::size_t s = 0; s < p.seeds.size(); ++s) {
      const MetricsLog& log = r.runs[w * p.seeds.size() + s].log;
      drift.push_back(log.rows.back().gram_drift_fro);
      const auto& wd = log.rows.back().weight_drift;
      wdrift.push_back(wd.empty() ? std::nan("") : *std::max_element(wd.begin(), wd.end()));
    }
    r.median_drift.push_back(median(drift));
    r.median_weight_drift.push_back(median(wdrift));
  }
  r.strictly_decreasing = true;
  for (std::size_t w = 1; w < r.median_drift.size(); ++w) {
    if (!(r.median_drift[w] < r.median_drift[w - 1])) r.strictly_decreasing = false;
  }
  r.min_lambda_ratio_largest = std::numeric_limits<double>::infinity();
  const std::size_t last = p.widths.size() - 1;
  for (std::size_t s = 0; s < p.seeds.size(); ++s) {
    r.min_lambda_ratio_largest = std::min(r.min_lambda_ratio_largest,
                                          min_lambda_ratio(r.runs[last * p.seeds.size() + s].log));
  }
  return r;
}

ExperimentOutput gram_stability_tables(const GramStabilityParams& p, const GramStabilityResult& r) {
  const std::string exp = "gram-stability";
  const std::string arch = arch_name(p.net.arch);
  const int H = p.net.depth;
  const Index n = p.data.n;
  ExperimentOutput out;
  out.experiment = exp;
  out.seeds = p.seeds;
  Table checkpoints = Table::with_keys({"loss", "gram_drift_fro", "gram_drift_op", "lambda_min",
                                        "lambda_ratio", "max_weight_drift"});
  for (const auto& run : r.runs) {
    for (const auto& row_in : run.log.rows) {
      auto row = keys(exp, arch, H, run.width, n, run.seed, row_in.iteration);
      const double wd = row_in.weight_drift.empty()
                            ? std::nan("")
                            : *std::max_element(row_in.weight_drift.begin(),
                                                row_in.weight_drift.end());
      append(row, {row_in.loss, row_in.gram_drift_fro, row_in.gram_drift_op, row_in.lambda_min,
                   row_in.lambda_min / run.log.lambda0, wd});
      checkpoints.add_row(std::move(row));
    }
    if (run.log.diverged) {
      out.warnings.push_back("m=" + std::to_string(run.width) + " seed " +
                             std::to_string(run.seed) + " diverged");
    }
  }
  Table summary = Table::with_keys({"median_final_gram_drift", "median_max_weight_drift",
                                    "strictly_decreasing", "min_lambda_ratio_largest_m"});
  for (std::size_t w = 0; w < p.widths.size(); ++w) {
    auto row = keys(exp, arch, H, p.widths[w], n, 0, p.train.iterations);
    append(row, {r.median_drift[w], r.median_weight_drift[w],
                 i64(r.strictly_decreasing ? 1 : 0), r.min_lambda_ratio_largest});
    summary.add_row(std::move(row));
  }
  out.tables = {{"checkpoints.csv", std::move(checkpoints)}, {"summary.csv", std::move(summary)}};
  return out;
}

// --- gradient check ---------------------------------------------------------

std::vector<GradCheckRow> exp_gradcheck(const std::vector<GradCheckCase>& cases, double eps,
                                        int threads) {
  std::vector<GradCheckRow> rows(cases.size());
  run_indexed(cases.size(), threads, [&](std::size_t k) {
    const GradCheckCase& c = cases[k];
    const Dataset data = make_data(c.data);
    const Params params = init_params(c.net);
    rows[k].c = c;
    rows[k].report = grad_check(params, c.net, data, eps);
  });
  return rows;
}

ExperimentOutput gradcheck_tables(const std::vector<GradCheckRow>& rows, double tolerance) {
  const std::string exp = "gradcheck";
  ExperimentOutput out;
  out.experiment = exp;
  Table table = Table::with_keys(
      {"pixels", "filter", "max_rel_error", "max_abs_error", "worst_parameter", "checked", "pass"});
  for (const auto& r : rows) {
    out.seeds.push_back(r.c.net.seed);
    auto row = keys(exp, arch_name(r.c.net.arch), r.c.net.depth, r.c.net.width, r.c.data.n,
                    r.c.net.seed, 0);
    append(row, {idx(r.c.net.pixels), idx(r.c.net.filter), r.report.max_rel_error,
                 r.report.max_abs_error, r.report.worst_parameter,
                 i64(static_cast<I64>(r.report.checked)),
                 i64(r.report.max_rel_error <= tolerance ? 1 : 0)});
    table.add_row(std::move(row));
  }
  out.tables = {{"gradcheck.csv", std::move(table)}};
  return out;
}

// --- spec dispatch ------------------------------------------------------------

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "gen-data", "gradcheck", "kernel", "train", "concentration", "depth-scan", "gram-stability"};
  return names;
}

namespace {

struct SpecReader {
  const ExperimentSpec& spec;
  std::uint64_t master_seed;

  Index positive(const std::string& key, I64 fallback) const {
    const I64 v = spec.get_int(key, fallback);
    if (v < 1) throw SpecError(key, "must be >= 1");
    return static_cast<Index>(v);
  }

  std::vector<Index> positive_list(const std::string& key, std::vector<I64> fallback) const {
    std::vector<Index> out;
    for (I64 v : spec.get_int_list(key, fallback)) {
      if (v < 1) throw SpecError(key, "entries must be >= 1");
      out.push_back(static_cast<Index>(v));
    }
    if (out.empty()) throw SpecError(key, "list is empty");
    return out;
  }

  Index single(const std::string& key, I64 fallback) const {
    const auto v = positive_list(key, {fallback});
    if (v.size() != 1) throw SpecError(key, "this experiment takes a single value");
    return v.front();
  }

  std::vector<std::uint64_t> seeds(I64 default_trials) const {
    std::vector<std::uint64_t> out;
    if (spec.has("seeds")) {
      for (I64 s : spec.get_int_list("seeds", {})) {
        if (s < 0) throw SpecError("seeds", "seeds must be non-negative");
        out.push_back(static_cast<std::uint64_t>(s));
      }
    } else {
      const Index trials = positive("trials", default_trials);
      for (Index t = 0; t < trials; ++t) out.push_back(master_seed + static_cast<std::uint64_t>(t));
    }
    if (out.empty()) throw SpecError("seeds", "no seeds");
    std::set<std::uint64_t> unique(out.begin(), out.end());
    if (unique.size() != out.size()) throw SpecError("seeds", "seeds must be distinct");
    return out;
  }

  Activation activation() const {
    const std::string name = spec.get_string("activation", "softplus");
    try {
      return Activation::from_name(name);
    } catch (const std::invalid_argument&) {
      throw SpecError("activation", "unknown activation '" + name + "'");
    }
  }

  std::vector<Arch> archs(std::vector<std::string> fallback) const {
    std::vector<Arch> out;
    for (const auto& name : spec.get_string_list("arch", fallback)) {
      try {
        out.push_back(arch_from_name(name));
      } catch (const std::invalid_argument&) {
        throw SpecError("arch", "unknown architecture '" + name + "'");
      }
    }
    return out;
  }

  int quad_nodes() const {
    const I64 q = spec.get_int("quad_nodes", QuadRule::kDefaultNodes);
    if (q < 20 || q > 400) throw SpecError("quad_nodes", "must lie in [20, 400]");
    return static_cast<int>(q);
  }

  DataParams data(I64 n, I64 d) const {
    DataParams dp;
    dp.n = positive("n", n);
    dp.channels = positive("d", d);
    dp.pixels = positive("pixels", 1);
    dp.seed = master_seed;
    dp.duplicate = spec.get_bool("duplicate_inputs", false);
    if (dp.duplicate && dp.n < 2) throw SpecError("duplicate_inputs", "needs n >= 2");
    return dp;
  }

  /// Network config for one (arch, depth, width); config errors are mapped
  /// to spec fields.
  NetworkConfig net(Arch arch, int depth, Index width, const DataParams& dp) const {
    NetworkConfig cfg;
    cfg.arch = arch;
    cfg.depth = depth;
    cfg.width = width;
    cfg.channels = dp.channels;
    cfg.pixels = dp.pixels;
    cfg.filter = static_cast<Index>(spec.get_int("filter", arch == Arch::conv_resnet ? 3 : 1));
    cfg.c_res = spec.get_double("c_res", 0.5);
    cfg.activation = activation();
    cfg.c_sigma = compute_c_sigma(cfg.activation, QuadRule(quad_nodes()));
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      static const std::map<std::string, std::string> fields = {
          {"depth", "depth"},   {"width", "width"},   {"channels", "d"},
          {"pixels", "pixels"}, {"filter", "filter"}, {"c_res", "c_res"},
          {"c_sigma", "activation"}};
      std::string msg = e.what();
      std::string field = "arch";
      const auto dot = msg.find('.');
      const auto colon = msg.find(':');
      if (dot != std::string::npos && colon != std::string::npos && colon > dot) {
        const auto it = fields.find(msg.substr(dot + 1, colon - dot - 1));
        if (it != fields.end()) field = it->second;
      }
      throw SpecError(field, msg);
    }
    return cfg;
  }

  TrainConfig train(I64 iterations) const {
    TrainConfig tc;
    tc.iterations = static_cast<int>(spec.get_int("iterations", iterations));
    if (tc.iterations < 0) throw SpecError("iterations", "must be >= 0");
    if (spec.has("eta")) {
      tc.eta = spec.get_double("eta", 0.0);
      if (*tc.eta < 0.0) throw SpecError("eta", "must be >= 0");
    }
    tc.eta_scale = spec.get_double("eta_scale", 1.0);
    if (!(tc.eta_scale > 0.0)) throw SpecError("eta_scale", "must be positive");
    tc.cadence = static_cast<int>(spec.get_int("cadence", 10));
    if (tc.cadence < 1) throw SpecError("cadence", "must be >= 1");
    tc.dense_until = static_cast<int>(spec.get_int("dense_until", 50));
    if (tc.dense_until < 0) throw SpecError("dense_until", "must be >= 0");
    tc.lambda_margin = spec.get_double("lambda_margin", 0.9);
    if (!(tc.lambda_margin > 0.0 && tc.lambda_margin <= 1.0)) {
      throw SpecError("lambda_margin", "must lie in (0, 1]");
    }
    tc.divergence_factor = spec.get_double("divergence_factor", 1e6);
    if (!(tc.divergence_factor > 1.0)) throw SpecError("divergence_factor", "must exceed 1");
    return tc;
  }

  Arch single_arch(const std::string& fallback) const {
    const auto a = archs({fallback});
    if (a.size() != 1) throw SpecError("arch", "this experiment takes a single architecture");
    return a.front();
  }
};

void add_width_warnings(ExperimentOutput& out, Arch arch, int depth, Index width, Index n) {
  for (auto& w : width_warnings(arch, depth, width, n)) {
    if (std::find(out.warnings.begin(), out.warnings.end(), w) == out.warnings.end()) {
      out.warnings.push_back(std::move(w));
    }
  }
}

ExperimentOutput run_gen_data(const SpecReader& in) {
  const DataParams dp = in.data(8, 8);
  const Dataset data = make_data(dp);
  ExperimentOutput out;
  out.experiment = "gen-data";
  out.seeds = {dp.seed};
  std::vector<std::string> cols = {"sample", "label"};
  for (Index k = 0; k < dp.channels * dp.pixels; ++k) cols.push_back("x_" + std::to_string(k));
  Table table = Table::with_keys(cols);
  for (Index i = 0; i < data.size(); ++i) {
    auto row = keys("gen-data", "-", 0, 0, dp.n, dp.seed, 0);
    append(row, {idx(i), data.labels(i)});
    const Matrix x = data.input(i);
    // Channel-major flattening: x_{c*pixels + l} = x[c, l].
    for (Index c = 0; c < x.rows(); ++c) {
      for (Index l = 0; l < x.cols(); ++l) row.push_back(x(c, l));
    }
    table.add_row(std::move(row));
  }
  Matrix gram(data.size(), data.size());
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.size(); ++j) gram(i, j) = data.inner(i, j);
  }
  Table summary = Table::with_keys({"max_abs_overlap", "lambda_min_input_gram"});
  auto row = keys("gen-data", "-", 0, 0, dp.n, dp.seed, 0);
  append(row, {max_abs_overlap(data), sym_eig_min(SymMatrix(gram))});
  summary.add_row(std::move(row));
  out.tables = {{"data.csv", std::move(table)}, {"summary.csv", std::move(summary)}};
  return out;
}

ExperimentOutput run_gradcheck(const SpecReader& in, int threads) {
  const DataParams dp = in.data(4, 4);
  const auto archs = in.archs({"fc"});
  const auto depths = in.positive_list("depth", {2});
  const Index width = in.single("width", 16);
  const auto seeds = in.seeds(5);
  const double eps = in.spec.get_double("eps", 1e-5);
  if (!(eps > 0.0)) throw SpecError("eps", "must be positive");
  std::vector<GradCheckCase> cases;
  for (Arch a : archs) {
    for (Index h : depths) {
      for (auto s : seeds) {
        GradCheckCase c;
        c.data = dp;
        c.net = in.net(a, static_cast<int>(h), width, dp);
        c.net.seed = s;
        cases.push_back(c);
      }
    }
  }
  return gradcheck_tables(exp_gradcheck(cases, eps, threads), 1e-6);
}

ExperimentOutput run_kernel(const SpecReader& in) {
  const DataParams dp = in.data(6, 6);
  const Arch arch = in.single_arch("fc");
  const int depth = static_cast<int>(in.single("depth", 2));
  const NetworkConfig cfg = in.net(arch, depth, 1, dp);
  const Dataset data = make_data(dp);
  const KernelState st = population_kernel(data, cfg, QuadRule(in.quad_nodes()));
  ExperimentOutput out;
  out.experiment = "kernel";
  out.seeds = {dp.seed};
  Table table = Table::with_keys({"i", "j", "K"});
  const Matrix& K = st.kernel.matrix.matrix();
  for (Index i = 0; i < K.rows(); ++i) {
    for (Index j = 0; j < K.cols(); ++j) {
      auto row = keys("kernel", arch_name(arch), depth, 0, dp.n, dp.seed, 0);
      append(row, {idx(i), idx(j), K(i, j)});
      table.add_row(std::move(row));
    }
  }
  Table summary = Table::with_keys({"lambda_min_K", "lambda_max_K"});
  auto row = keys("kernel", arch_name(arch), depth, 0, dp.n, dp.seed, 0);
  append(row, {st.lambda_min(), st.kernel.lambda_max()});
  summary.add_row(std::move(row));
  if (st.lambda_min() <= 1e-10) {
    out.warnings.push_back("population kernel is numerically singular");
  }
  out.tables = {{"kernel.csv", std::move(table)}, {"summary.csv", std::move(summary)}};
  return out;
}

ExperimentOutput run_train(const SpecReader& in, int threads) {
  ConvergenceParams p;
  p.data = in.data(8, 8);
  const Arch arch = in.single_arch("fc");
  p.net = in.net(arch, static_cast<int>(in.single("depth", 3)), in.single("width", 512), p.data);
  p.train = in.train(500);
  p.seeds = in.seeds(1);
  p.threads = threads;
  ExperimentOutput out = convergence_tables(p, exp_convergence(p));
  add_width_warnings(out, arch, p.net.depth, p.net.width, p.data.n);
  return out;
}

ExperimentOutput run_concentration(const SpecReader& in, int threads) {
  ConcentrationParams p;
  p.data = in.data(6, 6);
  const Arch arch = in.single_arch("fc");
  p.widths = in.positive_list("width", {256, 1024, 4096});
  if (p.widths.size() < 2) throw SpecError("width", "needs at least two widths");
  p.net = in.net(arch, static_cast<int>(in.single("depth", 2)), p.widths.front(), p.data);
  p.seeds = in.seeds(10);
  p.quad_nodes = in.quad_nodes();
  p.threads = threads;
  ExperimentOutput out = concentration_tables(p, exp_width_concentration(p));
  add_width_warnings(out, arch, p.net.depth, p.widths.back(), p.data.n);
  return out;
}

ExperimentOutput run_depth_scan(const SpecReader& in, int threads) {
  DepthScanParams p;
  p.data = in.data(4, 4);
  if (p.data.pixels != 1) throw SpecError("pixels", "depth scan covers FC and ResNet only");
  p.archs = in.archs({"fc", "resnet"});
  for (Arch a : p.archs) {
    if (a == Arch::conv_resnet) throw SpecError("arch", "depth scan covers FC and ResNet only");
  }
  p.depths.clear();
  for (Index h : in.positive_list("depth", {2, 4, 8, 16})) p.depths.push_back(static_cast<int>(h));
  p.width = in.single("width", 2048);
  p.activation = in.activation();
  p.c_res = in.spec.get_double("c_res", 0.5);
  p.perturbation = in.spec.get_double("perturbation", 0.01);
  if (!(p.perturbation > 0.0)) throw SpecError("perturbation", "must be positive");
  p.seeds = in.seeds(1);
  p.quad_nodes = in.quad_nodes();
  p.threads = threads;
  for (Arch a : p.archs) {
    for (int h : p.depths) in.net(a, h, p.width, p.data);
  }
  ExperimentOutput out = depth_scan_tables(p, exp_depth_scan(p));
  for (Arch a : p.archs) add_width_warnings(out, a, p.depths.back(), p.width, p.data.n);
  return out;
}

ExperimentOutput run_gram_stability(const SpecReader& in, int threads) {
  GramStabilityParams p;
  p.data = in.data(8, 8);
  const Arch arch = in.single_arch("fc");
  p.widths = in.positive_list("width", {512, 2048, 8192});
  p.net = in.net(arch, static_cast<int>(in.single("depth", 3)), p.widths.front(), p.data);
  p.train = in.train(200);
  p.seeds = in.seeds(5);
  p.threads = threads;
  ExperimentOutput out = gram_stability_tables(p, exp_gram_stability(p));
  add_width_warnings(out, arch, p.net.depth, p.widths.back(), p.data.n);
  return out;
}

}  // namespace

ExperimentOutput run_experiment(const std::string& name, const ExperimentSpec& spec,
                                std::uint64_t master_seed, int threads) {
  if (spec.has("experiment") && spec.get_string("experiment", "") != name) {
    throw SpecError("experiment", "spec is for '" + spec.get_string("experiment", "") +
                                      "' but was run as '" + name + "'");
  }
  const SpecReader in{spec, master_seed};
  if (name == "gen-data") return run_gen_data(in);
  if (name == "gradcheck") return run_gradcheck(in, threads);
  if (name == "kernel") return run_kernel(in);
  if (name == "train") return run_train(in, threads);
  if (name == "concentration") return run_concentration(in, threads);
  if (name == "depth-scan") return run_depth_scan(in, threads);
  if (name == "gram-stability") return run_gram_stability(in, threads);
  throw std::invalid_argument("unknown experiment '" + name + "'");
}

}  // namespace gdlab::lab
