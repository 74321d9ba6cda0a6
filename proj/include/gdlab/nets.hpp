#pragma once

#include "gdlab/activations.hpp"
#include "gdlab/numlin.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gdlab {

enum class Arch { fully_connected, resnet, conv_resnet };

std::string arch_name(Arch arch);
/// Accepts "fc", "resnet", "conv-resnet" (and the enum spellings).
Arch arch_from_name(const std::string& name);

/// Network shape and scalings. FC and ResNet inputs are treated as single-pixel
/// maps (pixels = 1, filter = 1), so one code path serves all three
/// architectures; for them `channels` is the input dimension d.
struct NetworkConfig {
  Arch arch = Arch::fully_connected;
  int depth = 1;
  Index width = 16;
  Index channels = 4;
  Index pixels = 1;
  Index filter = 1;
  double c_res = 0.5;
  Activation activation = Activation::softplus();
  double c_sigma = 1.0;
  std::uint64_t seed = 0;

  /// Fills c_sigma from the activation with the default quadrature rule.
  NetworkConfig& with_default_c_sigma();

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool residual() const { return arch != Arch::fully_connected; }
  /// Branch scale of layer h (1-based): sqrt(c_sigma/m) for FC layers and the
  /// first residual layer, c_res/(H sqrt(m)) afterwards.
  double layer_scale(int h) const;
  /// Input rows of W^(h).
  Index fan_in(int h) const;
};

/// Weights W^(1..H) (stored at index h-1) and output weights a (m x pixels).
/// Also used to hold gradients with the same layout.
struct Params {
  std::vector<Matrix> W;
  Matrix a;

  int depth() const { return static_cast<int>(W.size()); }
  Params zeros_like() const;
  std::size_t parameter_count() const;
};

/// Inputs stored sample-major as columns: sample i occupies columns
/// [i*pixels, (i+1)*pixels) of a channels x (n*pixels) matrix.
struct Dataset {
  Matrix inputs;
  Vector labels;
  Index pixels = 1;

  Index size() const { return labels.size(); }
  Index channels() const { return inputs.rows(); }
  Matrix input(Index i) const { return inputs.middleCols(i * pixels, pixels); }
  /// <x_i, x_j> (Frobenius for maps).
  double inner(Index i, Index j) const;
};

/// Activations and derivative diagonals for a batch. x[h] is m x (n*pixels)
/// for h >= 1 and x[0] is the input; J[h] = s'(W^(h) phi(x[h-1])) for h >= 1
/// (J[0] is empty).
struct ForwardTrace {
  std::vector<Matrix> x;
  std::vector<Matrix> J;
  Vector u;
  Index pixels = 1;

  Index samples() const { return u.size(); }
  int depth() const { return static_cast<int>(x.size()) - 1; }
  Matrix layer(int h, Index i) const { return x[h].middleCols(i * pixels, pixels); }
};

/// Stream id of the Gaussian draws for W^(h); a uses layer index 0.
std::uint64_t layer_stream(int h);

/// Every entry N(0, 1), one RNG stream per layer keyed by config.seed.
Params init_params(const NetworkConfig& config);

/// Stride-1 zero-padded patch map: row c*q + t of column l holds
/// x[c, l + t - (q-1)/2]. Operates on batches of `pixels`-wide samples.
Matrix patchify(const Matrix& x, Index q, Index pixels);
/// Adjoint of patchify: scatters (q*channels) x (n*pixels) back to
/// channels x (n*pixels).
Matrix patchify_adjoint(const Matrix& patches, Index q, Index pixels);
/// Single-sample convenience: x is channels x p.
Matrix patchify(const Matrix& x, Index q);

ForwardTrace forward(const Params& params, const NetworkConfig& config, const Matrix& inputs);
ForwardTrace forward(const Params& params, const NetworkConfig& config, const Dataset& data);

/// Forward pass at initialization without materializing any W^(h): rows of
/// each layer are regenerated from the RNG stream in blocks. The trace is
/// identical to forward(init_params(config), ...). Returns the output weights
/// through `a_out` when non-null.
ForwardTrace forward_at_init_streaming(const NetworkConfig& config, const Dataset& data,
                                       Matrix* a_out = nullptr, Index block_rows = 512);

double loss(const ForwardTrace& trace, const Vector& labels);

/// Per-sample derivatives du_i/dZ^(h) (pre-activation signals), each
/// m x (n*pixels), stored at index h (index 0 empty). The weight gradient of
/// u_i for layer h is dZ_i phi(x_i^(h-1))^T.
std::vector<Matrix> backprop_signals(const Params& params, const NetworkConfig& config,
                                     const ForwardTrace& trace);

/// Gradient of 1/2 sum_i (u_i - y_i)^2, with residual = u - y.
Params backward(const Params& params, const NetworkConfig& config, const ForwardTrace& trace,
                const Vector& residual);

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

/// Central differences with step eps over every parameter. The relative error
/// of an entry is |g - fd| / max(|g|, |fd|, 1e-4 * max|g|); the floor sits at the
/// O(eps^2) resolution of the difference quotient.
GradCheckReport grad_check(const Params& params, const NetworkConfig& config,
                           const Dataset& data, double eps = 1e-5);

}  // namespace gdlab
