#pragma once

#include "gdlab/gauss_expect.hpp"
#include "gdlab/nets.hpp"
#include "gdlab/numlin.hpp"

#include <vector>

namespace gdlab {

enum class GramSource { finite_width, population };

struct GramMatrix {
  SymMatrix matrix;
  GramSource source = GramSource::finite_width;
  /// Training iteration for finite-width matrices, -1 otherwise.
  int iteration = -1;

  Index size() const { return matrix.size(); }
  double lambda_min() const { return sym_eig_min(matrix); }
  double lambda_max() const { return sym_eig_max(matrix); }
};

/// Closed-form output-layer Gram G^(H) of the last hidden weight matrix:
///   FC      (c_s/m) <x_i, x_j> sum_r a_r^2 s'_ir s'_jr
///   ResNet  c_res^2/(H^2 m) in place of c_s/m
///   conv    c_res^2/(H^2 m) sum_r [sum_l a_rl J_i[r,l] phi_il] . [sum_k a_rk J_j[r,k] phi_jk]
/// with x and phi taken from layer H-1.
GramMatrix gram_layer_H(const ForwardTrace& trace, const Matrix& a, const NetworkConfig& config);
GramMatrix gram_layer_H(const ForwardTrace& trace, const Params& params,
                        const NetworkConfig& config);

/// G^(h) for h = 1..H from the backprop signals (index 0 holds the output
/// weight term G^(a)_ij = <x_i^(H), x_j^(H)>).
std::vector<GramMatrix> gram_layers(const ForwardTrace& trace, const Params& params,
                                    const NetworkConfig& config);

/// G^(a) alone.
GramMatrix gram_output(const ForwardTrace& trace);

/// Full Gram of flattened per-example gradients over every parameter. Refuses
/// configurations with m^2 * H * n > 2^28.
GramMatrix gram_full(const ForwardTrace& trace, const Params& params, const NetworkConfig& config);

/// Population kernel recursion state.
///
/// `features[h]` is the limiting feature Gram of layer h, an (n*p) x (n*p)
/// matrix indexed by (sample, pixel); `bias[h]` is the limiting scaled feature
/// sum (residual architectures only, empty otherwise). `kernel` is the final
/// n x n matrix K^(H).
struct KernelState {
  Arch arch = Arch::fully_connected;
  int depth = 0;
  Index pixels = 1;
  std::vector<Matrix> features;
  std::vector<Vector> bias;
  GramMatrix kernel;

  double lambda_min() const { return kernel.lambda_min(); }
};

/// Fully connected recursion: K^(0) = <x_i, x_j>, K^(h) = c_s E[s(u)s(v)] over
/// the 2x2 block of K^(h-1), and K^(H) = c_s K^(H-1) E[s'(u)s'(v)] over the
/// same block.
KernelState kernel_fc(const Dataset& data, int depth, const Activation& act,
                      const QuadRule& quad = QuadRule());

/// Residual recursion for ResNet (scalar entries) and conv-ResNet ((sample,
/// pixel) entries). With r = (c_res/H) s and g = E r(U):
///   F^(1) = c_s E[s s]               b^(1) = sqrt(c_s) E s
///   F^(h) = F^(h-1) + b g^T + g b^T + E[r r]     b^(h) = b^(h-1) + g
///   K^(H)_ij = (c_res/H)^2 sum_l C_ij[l,l] E[s'(U_l) s'(V_l)]
/// where every expectation is over the pre-activation covariance C, the
/// patch trace of the previous feature Gram.
KernelState kernel_general(const Dataset& data, const NetworkConfig& config,
                           const QuadRule& quad = QuadRule());

/// Runs the conv recursion even for ResNet configs (p = q = 1); used to check
/// that the scalar path is its special case.
KernelState kernel_general_blocks(const Dataset& data, const NetworkConfig& config,
                                  const QuadRule& quad = QuadRule());

/// Dispatches on config.arch.
KernelState population_kernel(const Dataset& data, const NetworkConfig& config,
                              const QuadRule& quad = QuadRule());

/// Patch trace T(F)[l, r] = sum_t F[l + t - k, r + t - k] over in-range
/// indices, k = (q-1)/2: the covariance of patch inner products.
Matrix patch_trace(const Matrix& block, Index q);

struct GramDrift {
  double fro = 0.0;
  double op = 0.0;
};

GramDrift gram_drift(const GramMatrix& g_k, const GramMatrix& g_0);

}  // namespace gdlab
