#include "gdlab/gram.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gdlab {

namespace {

/// Sums each p x p block of an (n p) x (n p) matrix.
Matrix block_sum(const Matrix& m, Index p) {
  if (p == 1) return m;
  const Index n = m.rows() / p;
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) out(i, j) = m.block(i * p, j * p, p, p).sum();
  }
  return out;
}

/// Trace of each p x p block.
Matrix block_trace(const Matrix& m, Index p) {
  if (p == 1) return m;
  const Index n = m.rows() / p;
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) out(i, j) = m.block(i * p, j * p, p, p).trace();
  }
  return out;
}

GramMatrix finite(const Matrix& m) {
  GramMatrix g;
  g.matrix = SymMatrix(m);
  g.source = GramSource::finite_width;
  return g;
}

Matrix broadcast_columns(const Matrix& a, Index n) {
  Matrix out(a.rows(), a.cols() * n);
  for (Index i = 0; i < n; ++i) out.middleCols(i * a.cols(), a.cols()) = a;
  return out;
}

}  // namespace

GramMatrix gram_layer_H(const ForwardTrace& trace, const Matrix& a, const NetworkConfig& config) {
  const int H = config.depth;
  if (trace.depth() != H) throw ShapeError("gram_layer_H: trace depth does not match config");
  const Index n = trace.samples();
  const Index p = config.pixels;
  const double scale = config.layer_scale(H);
  const Matrix weighted = broadcast_columns(a, n).cwiseProduct(trace.J[H]);
  const Matrix phi = patchify(trace.x[H - 1], config.filter, p);
  const Matrix outer = weighted.transpose() * weighted;
  const Matrix inner = phi.transpose() * phi;
  return finite(scale * scale * block_sum(outer.cwiseProduct(inner), p));
}

GramMatrix gram_layer_H(const ForwardTrace& trace, const Params& params,
                        const NetworkConfig& config) {
  return gram_layer_H(trace, params.a, config);
}

GramMatrix gram_output(const ForwardTrace& trace) {
  const Matrix& xH = trace.x.back();
  return finite(block_trace(xH.transpose() * xH, trace.pixels));
}

std::vector<GramMatrix> gram_layers(const ForwardTrace& trace, const Params& params,
                                    const NetworkConfig& config) {
  const auto dz = backprop_signals(params, config, trace);
  const Index p = config.pixels;
  std::vector<GramMatrix> out;
  out.reserve(config.depth + 1);
  out.push_back(gram_output(trace));
  for (int h = 1; h <= config.depth; ++h) {
    const Matrix phi = patchify(trace.x[h - 1], config.filter, p);
    const Matrix signal = dz[h].transpose() * dz[h];
    const Matrix feature = phi.transpose() * phi;
    out.push_back(finite(block_sum(signal.cwiseProduct(feature), p)));
  }
  return out;
}

GramMatrix gram_full(const ForwardTrace& trace, const Params& params, const NetworkConfig& config) {
  const double m = static_cast<double>(config.width);
  const double n = static_cast<double>(trace.samples());
  if (m * m * config.depth * n > static_cast<double>(1ull << 28)) {
    throw std::invalid_argument(
        "gram_full: m^2 * H * n exceeds 2^28 entries; use gram_layer_H or gram_layers instead");
  }
  const auto dz = backprop_signals(params, config, trace);
  const Index p = config.pixels;
  const Index count = static_cast<Index>(params.parameter_count());
  Matrix flat(count, trace.samples());
  for (Index i = 0; i < trace.samples(); ++i) {
    Index offset = 0;
    for (int h = 1; h <= config.depth; ++h) {
      const Matrix phi = patchify(trace.x[h - 1].middleCols(i * p, p), config.filter, p);
      const Matrix g = dz[h].middleCols(i * p, p) * phi.transpose();
      flat.col(i).segment(offset, g.size()) = Eigen::Map<const Vector>(g.data(), g.size());
      offset += g.size();
    }
    const Matrix xH = trace.x[config.depth].middleCols(i * p, p);
    flat.col(i).segment(offset, xH.size()) = Eigen::Map<const Vector>(xH.data(), xH.size());
  }
  return finite(flat.transpose() * flat);
}

// ---------------------------------------------------------------------------
// Population kernels

namespace {

[[noreturn]] void rethrow_non_psd(const NonPsdError& e, const std::string& where) {
  throw NonPsdError(where + ": " + e.what());
}

struct Moments {
  const Activation& act;
  const QuadRule& quad;

  double ss(const Cov2& c) const {
    return expect2([&](double u) { return act.value(u); }, [&](double v) { return act.value(v); },
                   c, quad, act.regularity());
  }
  double dd(const Cov2& c) const {
    return expect2([&](double u) { return act.derivative(u); },
                   [&](double v) { return act.derivative(v); }, c, quad, act.regularity());
  }
  double mean(double variance) const {
    return expect1([&](double z) { return act.value(z); }, variance, quad, act.regularity());
  }
};

Matrix input_gram(const Dataset& data) { return data.inputs.transpose() * data.inputs; }

Cov2 block_cov(const Matrix& c, Index a, Index b) { return Cov2{c(a, a), c(a, b), c(b, b)}; }

GramMatrix population(const Matrix& k) {
  GramMatrix g;
  g.matrix = SymMatrix(k);
  g.source = GramSource::population;
  return g;
}

}  // namespace

Matrix patch_trace(const Matrix& block, Index q) {
  const Index p = block.rows();
  if (q == 1) return block;
  const Index half = (q - 1) / 2;
  Matrix out = Matrix::Zero(p, p);
  for (Index l = 0; l < p; ++l) {
    for (Index r = 0; r < p; ++r) {
      double acc = 0.0;
      for (Index t = 0; t < q; ++t) {
        const Index a = l + t - half;
        const Index b = r + t - half;
        if (a < 0 || a >= p || b < 0 || b >= p) continue;
        acc += block(a, b);
      }
      out(l, r) = acc;
    }
  }
  return out;
}

namespace {

Matrix patch_trace_all(const Matrix& f, Index p, Index q) {
  if (q == 1) return f;
  const Index n = f.rows() / p;
  Matrix out(f.rows(), f.cols());
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) out.block(i * p, j * p, p, p) = patch_trace(f.block(i * p, j * p, p, p), q);
  }
  return out;
}

}  // namespace

KernelState kernel_fc(const Dataset& data, int depth, const Activation& act,
                      const QuadRule& quad) {
  if (depth < 1) throw std::invalid_argument("kernel_fc: depth must be >= 1");
  if (data.pixels != 1) throw std::invalid_argument("kernel_fc: inputs must be vectors");
  const double c_sigma = compute_c_sigma(act, quad);
  const Moments mom{act, quad};
  const Index n = data.size();
  KernelState st;
  st.arch = Arch::fully_connected;
  st.depth = depth;
  st.features.push_back(input_gram(data));
  for (int h = 1; h < depth; ++h) {
    const Matrix& prev = st.features.back();
    Matrix next(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = i; j < n; ++j) {
        try {
          next(i, j) = next(j, i) = c_sigma * mom.ss(block_cov(prev, i, j));
        } catch (const NonPsdError& e) {
          rethrow_non_psd(e, "kernel_fc (i=" + std::to_string(i) + ", j=" + std::to_string(j) +
                                 ", h=" + std::to_string(h) + ")");
        }
      }
    }
    st.features.push_back(std::move(next));
  }
  const Matrix& last = st.features.back();
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      try {
        k(i, j) = k(j, i) = c_sigma * last(i, j) * mom.dd(block_cov(last, i, j));
      } catch (const NonPsdError& e) {
        rethrow_non_psd(e, "kernel_fc (i=" + std::to_string(i) + ", j=" + std::to_string(j) +
                               ", h=" + std::to_string(depth) + ")");
      }
    }
  }
  st.kernel = population(k);
  return st;
}

namespace {

void require_residual(const NetworkConfig& config, const Dataset& data) {
  if (!config.residual()) throw std::invalid_argument("kernel_general: needs a residual config");
  if (config.depth < 2) throw std::invalid_argument("kernel_general: depth must be >= 2");
  if (data.pixels != config.pixels || data.channels() != config.channels) {
    throw ShapeError("kernel_general: dataset shape does not match config");
  }
}

std::string where(int h, Index a, Index b, Index p) {
  return "kernel_general (i=" + std::to_string(a / p) + ", j=" + std::to_string(b / p) +
         ", h=" + std::to_string(h) + ", l=" + std::to_string(a % p) +
         ", r=" + std::to_string(b % p) + ")";
}

}  // namespace

KernelState kernel_general_blocks(const Dataset& data, const NetworkConfig& config,
                                  const QuadRule& quad) {
  require_residual(config, data);
  const Moments mom{config.activation, quad};
  const double c_sigma = compute_c_sigma(config.activation, quad);
  const double branch = config.c_res / static_cast<double>(config.depth);
  const Index p = config.pixels;
  const Index q = config.filter;
  const Index np = data.size() * p;

  KernelState st;
  st.arch = config.arch;
  st.depth = config.depth;
  st.pixels = p;
  st.features.push_back(input_gram(data));
  st.bias.emplace_back();

  for (int h = 1; h < config.depth; ++h) {
    const Matrix cov = patch_trace_all(st.features.back(), p, q);
    Vector g(np);
    for (Index a = 0; a < np; ++a) g(a) = mom.mean(std::max(cov(a, a), 0.0));
    Matrix f(np, np);
    for (Index a = 0; a < np; ++a) {
      for (Index b = a; b < np; ++b) {
        double e = 0.0;
        try {
          e = mom.ss(block_cov(cov, a, b));
        } catch (const NonPsdError& err) {
          rethrow_non_psd(err, where(h, a, b, p));
        }
        f(a, b) = e;
      }
    }
    if (h == 1) {
      for (Index a = 0; a < np; ++a) {
        for (Index b = a; b < np; ++b) f(b, a) = f(a, b) = c_sigma * f(a, b);
      }
      st.features.push_back(f);
      st.bias.push_back(std::sqrt(c_sigma) * g);
      continue;
    }
    g *= branch;
    const Matrix& prev = st.features.back();
    const Vector& b_prev = st.bias.back();
    Matrix next(np, np);
    for (Index a = 0; a < np; ++a) {
      for (Index b = a; b < np; ++b) {
        next(a, b) = next(b, a) = prev(a, b) + b_prev(a) * g(b) + g(a) * b_prev(b) +
                                  branch * branch * f(a, b);
      }
    }
    st.features.push_back(std::move(next));
    st.bias.push_back(b_prev + g);
  }

  const Matrix cov = patch_trace_all(st.features.back(), p, q);
  const Index n = data.size();
  Matrix k = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      double acc = 0.0;
      for (Index l = 0; l < p; ++l) {
        const Index a = i * p + l;
        const Index b = j * p + l;
        try {
          acc += cov(a, b) * mom.dd(block_cov(cov, a, b));
        } catch (const NonPsdError& err) {
          rethrow_non_psd(err, where(config.depth, a, b, p));
        }
      }
      k(i, j) = k(j, i) = branch * branch * acc;
    }
  }
  st.kernel = population(k);
  return st;
}

KernelState kernel_general(const Dataset& data, const NetworkConfig& config,
                           const QuadRule& quad) {
  if (config.arch == Arch::conv_resnet) return kernel_general_blocks(data, config, quad);
  require_residual(config, data);
  const Moments mom{config.activation, quad};
  const double c_sigma = compute_c_sigma(config.activation, quad);
  const double branch = config.c_res / static_cast<double>(config.depth);
  const Index n = data.size();

  KernelState st;
  st.arch = config.arch;
  st.depth = config.depth;
  st.features.push_back(input_gram(data));
  st.bias.emplace_back();
  for (int h = 1; h < config.depth; ++h) {
    const Matrix& prev = st.features.back();
    Vector mean(n);
    for (Index i = 0; i < n; ++i) mean(i) = mom.mean(std::max(prev(i, i), 0.0));
    Matrix next(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = i; j < n; ++j) {
        double e = 0.0;
        try {
          e = mom.ss(block_cov(prev, i, j));
        } catch (const NonPsdError& err) {
          rethrow_non_psd(err, where(h, i, j, 1));
        }
        if (h == 1) {
          next(i, j) = c_sigma * e;
        } else {
          const Vector& b = st.bias.back();
          next(i, j) = prev(i, j) + branch * (b(i) * mean(j) + mean(i) * b(j)) +
                       branch * branch * e;
        }
        next(j, i) = next(i, j);
      }
    }
    st.features.push_back(std::move(next));
    if (h == 1) {
      st.bias.push_back(std::sqrt(c_sigma) * mean);
    } else {
      st.bias.push_back(st.bias.back() + branch * mean);
    }
  }
  const Matrix& last = st.features.back();
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      try {
        k(i, j) = k(j, i) = branch * branch * last(i, j) * mom.dd(block_cov(last, i, j));
      } catch (const NonPsdError& err) {
        rethrow_non_psd(err, where(config.depth, i, j, 1));
      }
    }
  }
  st.kernel = population(k);
  return st;
}

KernelState population_kernel(const Dataset& data, const NetworkConfig& config,
                              const QuadRule& quad) {
  if (config.arch == Arch::fully_connected) {
    return kernel_fc(data, config.depth, config.activation, quad);
  }
  return kernel_general(data, config, quad);
}

GramDrift gram_drift(const GramMatrix& g_k, const GramMatrix& g_0) {
  if (g_k.size() != g_0.size()) {
    throw ShapeError("gram_drift: sizes " + std::to_string(g_k.size()) + " and " +
                     std::to_string(g_0.size()) + " differ");
  }
  const SymMatrix diff(g_k.matrix.matrix() - g_0.matrix.matrix());
  GramDrift d;
  d.fro = diff.matrix().norm();
  if (diff.size() > 0) {
    const Vector ev = sym_eigenvalues(diff);
    d.op = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  }
  return d;
}

}  // namespace gdlab
