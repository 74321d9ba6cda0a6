#include "gdlab/nets.hpp"

#include "gdlab/gauss_expect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gdlab {

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::fully_connected:
      return "fc";
    case Arch::resnet:
      return "resnet";
    case Arch::conv_resnet:
      return "conv-resnet";
  }
  return "?";
}

Arch arch_from_name(const std::string& name) {
  if (name == "fc" || name == "fully_connected" || name == "FullyConnected") {
    return Arch::fully_connected;
  }
  if (name == "resnet" || name == "ResNet") return Arch::resnet;
  if (name == "conv-resnet" || name == "conv_resnet" || name == "ConvResNet") {
    return Arch::conv_resnet;
  }
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

NetworkConfig& NetworkConfig::with_default_c_sigma() {
  c_sigma = compute_c_sigma(activation, QuadRule());
  return *this;
}

void NetworkConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("NetworkConfig." + field + ": " + why);
  };
  if (depth < 1) fail("depth", "must be >= 1");
  if (residual() && depth < 2) fail("depth", "residual architectures need depth >= 2");
  if (width < 1) fail("width", "must be >= 1");
  if (channels < 1) fail("channels", "must be >= 1");
  if (pixels < 1) fail("pixels", "must be >= 1");
  if (filter < 1 || filter % 2 == 0) fail("filter", "must be odd and >= 1");
  if (filter > pixels && arch == Arch::conv_resnet) fail("filter", "must not exceed pixels");
  if (arch != Arch::conv_resnet && (pixels != 1 || filter != 1)) {
    fail("pixels", "FC and ResNet inputs are vectors (pixels = filter = 1)");
  }
  if (residual() && !(c_res > 0.0 && c_res < 1.0)) fail("c_res", "must lie in (0, 1)");
  if (!(c_sigma > 0.0) || !std::isfinite(c_sigma)) fail("c_sigma", "must be positive");
}

double NetworkConfig::layer_scale(int h) const {
  const double m = static_cast<double>(width);
  if (!residual() || h == 1) return std::sqrt(c_sigma / m);
  return c_res / (static_cast<double>(depth) * std::sqrt(m));
}

Index NetworkConfig::fan_in(int h) const { return filter * (h == 1 ? channels : width); }

Params Params::zeros_like() const {
  Params z;
  for (const auto& w : W) z.W.push_back(Matrix::Zero(w.rows(), w.cols()));
  z.a = Matrix::Zero(a.rows(), a.cols());
  return z;
}

std::size_t Params::parameter_count() const {
  std::size_t n = static_cast<std::size_t>(a.size());
  for (const auto& w : W) n += static_cast<std::size_t>(w.size());
  return n;
}

double Dataset::inner(Index i, Index j) const {
  return inputs.middleCols(i * pixels, pixels).cwiseProduct(inputs.middleCols(j * pixels, pixels)).sum();
}

std::uint64_t layer_stream(int h) {
  return stream_id({0x5745494748545321ull, static_cast<std::uint64_t>(h)});
}

Params init_params(const NetworkConfig& config) {
  config.validate();
  Params p;
  p.W.reserve(config.depth);
  for (int h = 1; h <= config.depth; ++h) {
    Rng rng(config.seed, layer_stream(h));
    p.W.push_back(gaussian_matrix(config.width, config.fan_in(h), rng));
  }
  Rng rng(config.seed, layer_stream(0));
  p.a = gaussian_matrix(config.width, config.pixels, rng);
  return p;
}

// ---------------------------------------------------------------------------

namespace {

void check_patch_args(Index cols, Index q, Index pixels) {
  if (q < 1 || q % 2 == 0) throw std::invalid_argument("patchify: q must be odd");
  if (q > 2 * pixels - 1) {
    throw std::invalid_argument("patchify: q = " + std::to_string(q) + " exceeds 2p - 1 = " +
                                std::to_string(2 * pixels - 1));
  }
  if (pixels < 1 || cols % pixels != 0) {
    throw ShapeError("patchify: column count is not a multiple of the pixel count");
  }
}

}  // namespace

Matrix patchify(const Matrix& x, Index q, Index pixels) {
  check_patch_args(x.cols(), q, pixels);
  if (q == 1) return x;
  const Index ch = x.rows();
  const Index n = x.cols() / pixels;
  const Index half = (q - 1) / 2;
  Matrix out = Matrix::Zero(q * ch, x.cols());
  for (Index s = 0; s < n; ++s) {
    const Index base = s * pixels;
    for (Index l = 0; l < pixels; ++l) {
      for (Index t = 0; t < q; ++t) {
        const Index src = l + t - half;
        if (src < 0 || src >= pixels) continue;
        for (Index c = 0; c < ch; ++c) out(c * q + t, base + l) = x(c, base + src);
      }
    }
  }
  return out;
}

Matrix patchify(const Matrix& x, Index q) { return patchify(x, q, x.cols()); }

Matrix patchify_adjoint(const Matrix& patches, Index q, Index pixels) {
  check_patch_args(patches.cols(), q, pixels);
  if (q == 1) return patches;
  if (patches.rows() % q != 0) throw ShapeError("patchify_adjoint: rows not a multiple of q");
  const Index ch = patches.rows() / q;
  const Index n = patches.cols() / pixels;
  const Index half = (q - 1) / 2;
  Matrix out = Matrix::Zero(ch, patches.cols());
  for (Index s = 0; s < n; ++s) {
    const Index base = s * pixels;
    for (Index l = 0; l < pixels; ++l) {
      for (Index t = 0; t < q; ++t) {
        const Index dst = l + t - half;
        if (dst < 0 || dst >= pixels) continue;
        for (Index c = 0; c < ch; ++c) out(c, base + dst) += patches(c * q + t, base + l);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_inputs(const NetworkConfig& config, const Matrix& inputs) {
  if (inputs.rows() != config.channels || inputs.cols() % config.pixels != 0) {
    throw ShapeError("forward: inputs are " + std::to_string(inputs.rows()) + "x" +
                     std::to_string(inputs.cols()) + ", expected " +
                     std::to_string(config.channels) + " rows and a multiple of " +
                     std::to_string(config.pixels) + " columns");
  }
}

void check_params(const Params& params, const NetworkConfig& config) {
  if (params.depth() != config.depth) {
    throw ShapeError("Params depth " + std::to_string(params.depth()) + " != config depth " +
                     std::to_string(config.depth));
  }
  for (int h = 1; h <= config.depth; ++h) {
    const Matrix& w = params.W[h - 1];
    if (w.rows() != config.width || w.cols() != config.fan_in(h)) {
      throw ShapeError("W^(" + std::to_string(h) + ") is " + std::to_string(w.rows()) + "x" +
                       std::to_string(w.cols()) + ", expected " + std::to_string(config.width) +
                       "x" + std::to_string(config.fan_in(h)));
    }
  }
  if (params.a.rows() != config.width || params.a.cols() != config.pixels) {
    throw ShapeError("output weights have the wrong shape");
  }
}

/// Applies the layer rule to pre-activations z (overwritten by s(z)).
void apply_layer(const NetworkConfig& config, int h, Matrix& z, ForwardTrace& t) {
  const Activation& act = config.activation;
  Matrix& J = t.J[h];
  J.resize(z.rows(), z.cols());
  for (Index k = 0; k < z.size(); ++k) {
    const double v = z.data()[k];
    J.data()[k] = act.derivative(v);
    z.data()[k] = act.value(v);
  }
  const double scale = config.layer_scale(h);
  if (config.residual() && h >= 2) {
    t.x[h] = t.x[h - 1] + scale * z;
  } else {
    t.x[h] = scale * z;
  }
}

Vector outputs(const Matrix& a, const Matrix& xH, Index pixels) {
  const Index n = xH.cols() / pixels;
  Vector u(n);
  for (Index i = 0; i < n; ++i) u(i) = a.cwiseProduct(xH.middleCols(i * pixels, pixels)).sum();
  return u;
}

}  // namespace

ForwardTrace forward(const Params& params, const NetworkConfig& config, const Matrix& inputs) {
  check_params(params, config);
  check_inputs(config, inputs);
  ForwardTrace t;
  t.pixels = config.pixels;
  t.x.resize(config.depth + 1);
  t.J.resize(config.depth + 1);
  t.x[0] = inputs;
  for (int h = 1; h <= config.depth; ++h) {
    Matrix z = params.W[h - 1] * patchify(t.x[h - 1], config.filter, config.pixels);
    apply_layer(config, h, z, t);
  }
  t.u = outputs(params.a, t.x[config.depth], config.pixels);
  return t;
}

ForwardTrace forward(const Params& params, const NetworkConfig& config, const Dataset& data) {
  return forward(params, config, data.inputs);
}

ForwardTrace forward_at_init_streaming(const NetworkConfig& config, const Dataset& data,
                                       Matrix* a_out, Index block_rows) {
  config.validate();
  check_inputs(config, data.inputs);
  if (block_rows < 1) throw std::invalid_argument("block_rows must be >= 1");
  ForwardTrace t;
  t.pixels = config.pixels;
  t.x.resize(config.depth + 1);
  t.J.resize(config.depth + 1);
  t.x[0] = data.inputs;
  for (int h = 1; h <= config.depth; ++h) {
    const Matrix phi = patchify(t.x[h - 1], config.filter, config.pixels);
    const Rng origin(config.seed, layer_stream(h));
    Matrix z(config.width, phi.cols());
    for (Index r0 = 0; r0 < config.width; r0 += block_rows) {
      const Index rows = std::min(block_rows, config.width - r0);
      z.middleRows(r0, rows).noalias() = gaussian_rows(r0, rows, phi.rows(), origin) * phi;
    }
    apply_layer(config, h, z, t);
  }
  Rng rng(config.seed, layer_stream(0));
  const Matrix a = gaussian_matrix(config.width, config.pixels, rng);
  t.u = outputs(a, t.x[config.depth], config.pixels);
  if (a_out) *a_out = a;
  return t;
}

double loss(const ForwardTrace& trace, const Vector& labels) {
  if (labels.size() != trace.u.size()) throw ShapeError("loss: label count mismatch");
  return 0.5 * (trace.u - labels).squaredNorm();
}

std::vector<Matrix> backprop_signals(const Params& params, const NetworkConfig& config,
                                     const ForwardTrace& trace) {
  check_params(params, config);
  const int H = config.depth;
  const Index n = trace.samples();
  const Index p = config.pixels;
  std::vector<Matrix> dz(H + 1);
  // g = du_i/dx^(h) for every sample, starting from the output weights.
  Matrix g(config.width, n * p);
  for (Index i = 0; i < n; ++i) g.middleCols(i * p, p) = params.a;
  for (int h = H; h >= 1; --h) {
    dz[h] = config.layer_scale(h) * g.cwiseProduct(trace.J[h]);
    if (h == 1) break;
    Matrix back = params.W[h - 1].transpose() * dz[h];
    Matrix up = patchify_adjoint(back, config.filter, p);
    if (config.residual()) {
      g += up;
    } else {
      g = std::move(up);
    }
  }
  return dz;
}

namespace {

Matrix scale_columns_by_sample(const Matrix& m, const Vector& r, Index pixels) {
  Matrix out = m;
  for (Index i = 0; i < r.size(); ++i) out.middleCols(i * pixels, pixels) *= r(i);
  return out;
}

}  // namespace

Params backward(const Params& params, const NetworkConfig& config, const ForwardTrace& trace,
                const Vector& residual) {
  if (residual.size() != trace.samples()) throw ShapeError("backward: residual size mismatch");
  const auto dz = backprop_signals(params, config, trace);
  const Index p = config.pixels;
  Params grad;
  grad.W.resize(config.depth);
  for (int h = 1; h <= config.depth; ++h) {
    const Matrix phi = patchify(trace.x[h - 1], config.filter, p);
    grad.W[h - 1].noalias() = scale_columns_by_sample(dz[h], residual, p) * phi.transpose();
  }
  grad.a = Matrix::Zero(config.width, p);
  const Matrix& xH = trace.x[config.depth];
  for (Index i = 0; i < residual.size(); ++i) grad.a += residual(i) * xH.middleCols(i * p, p);
  return grad;
}

GradCheckReport grad_check(const Params& params, const NetworkConfig& config,
                           const Dataset& data, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  const ForwardTrace trace = forward(params, config, data);
  const Params analytic = backward(params, config, trace, trace.u - data.labels);

  double gmax = analytic.a.cwiseAbs().maxCoeff();
  for (const auto& w : analytic.W) gmax = std::max(gmax, w.cwiseAbs().maxCoeff());
  const double floor = 1e-4 * gmax;

  GradCheckReport report;
  Params probe = params;
  auto check = [&](Matrix& target, const Matrix& grad, const std::string& name) {
    for (Index k = 0; k < target.size(); ++k) {
      const double saved = target.data()[k];
      target.data()[k] = saved + eps;
      const double lp = loss(forward(probe, config, data), data.labels);
      target.data()[k] = saved - eps;
      const double lm = loss(forward(probe, config, data), data.labels);
      target.data()[k] = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      const double g = grad.data()[k];
      const double abs_err = std::abs(g - fd);
      const double rel = abs_err / std::max({std::abs(g), std::abs(fd), floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.worst_parameter.empty()) {
        report.max_rel_error = rel;
        report.worst_parameter = name + "[" + std::to_string(k) + "]";
      }
      ++report.checked;
    }
  };
  for (int h = 1; h <= config.depth; ++h) {
    check(probe.W[h - 1], analytic.W[h - 1], "W" + std::to_string(h));
  }
  check(probe.a, analytic.a, "a");
  return report;
}

}  // namespace gdlab
