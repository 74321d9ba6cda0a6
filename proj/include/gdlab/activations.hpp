#pragma once

#include <string>
#include <vector>

namespace gdlab {

class QuadRule;

/// Where an integrand may fail to be smooth. The expectation engine switches
/// to a wedge-split rule for `kink_at_origin` integrands.
enum class Regularity { smooth, kink_at_origin };

enum class ActivationKind { softplus, relu, identity };

/// Activation with hand-coded derivative and declared constants:
/// |s(z) - s(z')| <= L |z - z'| and |s'(z) - s'(z')| <= beta |z - z'|.
///
/// `analytic_nonpoly` is a declaration only: analyticity and non-polynomiality
/// cannot be machine-checked, but strict positivity of the population kernel
/// relies on it.
class Activation {
 public:
  static Activation softplus();
  /// Oracle-only: not smooth. derivative(0) is fixed to 0.
  static Activation relu();
  static Activation identity();
  /// Parse "softplus" | "relu" | "identity".
  static Activation from_name(const std::string& name);

  /// gamma * s(z).
  Activation scaled(double gamma) const;

  double value(double z) const;
  double derivative(double z) const;

  const std::string& name() const { return name_; }
  ActivationKind kind() const { return kind_; }
  double scale() const { return scale_; }
  double lipschitz() const { return lipschitz_; }
  double smoothness() const { return smoothness_; }
  bool analytic_nonpoly() const { return analytic_nonpoly_; }
  Regularity regularity() const {
    return kind_ == ActivationKind::relu ? Regularity::kink_at_origin : Regularity::smooth;
  }

  bool operator==(const Activation& other) const {
    return kind_ == other.kind_ && scale_ == other.scale_;
  }

 private:
  Activation(ActivationKind kind, std::string name, double lipschitz, double smoothness,
             bool analytic_nonpoly)
      : kind_(kind),
        name_(std::move(name)),
        lipschitz_(lipschitz),
        smoothness_(smoothness),
        analytic_nonpoly_(analytic_nonpoly) {}

  ActivationKind kind_;
  std::string name_;
  double scale_ = 1.0;
  double lipschitz_;
  double smoothness_;
  bool analytic_nonpoly_;
};

/// Logistic sigmoid, evaluated without overflow.
double sigmoid(double z);

/// (E_{x~N(0,1)} s(x)^2)^{-1}. Cached per (activation, node count).
double compute_c_sigma(const Activation& act, const QuadRule& quad);

struct LipschitzSmoothReport {
  double empirical_lipschitz = 0.0;
  double empirical_smoothness = 0.0;
  bool lipschitz_ok = false;
  bool smooth_ok = false;
  bool pass() const { return lipschitz_ok && smooth_ok; }
};

/// Uniform grid of `points` values over [lo, hi].
std::vector<double> uniform_grid(double lo, double hi, std::size_t points);

/// Empirical difference-quotient suprema over all grid pairs, compared to the
/// declared constants with 1e-9 slack. Throws std::invalid_argument when the
/// grid has fewer than 1e4 points or does not span [-20, 20].
LipschitzSmoothReport check_condition_lipschitz_smooth(const Activation& act,
                                                       const std::vector<double>& grid);

}  // namespace gdlab
