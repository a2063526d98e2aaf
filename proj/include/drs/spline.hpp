#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace drs {

enum class ConstraintMode { nonnegative, monotone_increasing, monotone_decreasing };

std::string to_string(ConstraintMode mode);
ConstraintMode constraint_mode_from_string(const std::string& name);

/// Fixed-knot spline space on [knots.front(), knots.back()).
///
/// Pieces are half-open: piece i covers [knots[i], knots[i+1]). The knots are
/// never optimized.
struct SplineConfig {
  std::vector<double> knots;
  int degree = 3;
  int smoothness = 2;
  ConstraintMode mode = ConstraintMode::nonnegative;

  static SplineConfig uniform(double t_start, double t_end, int intervals, int degree,
                              int smoothness,
                              ConstraintMode mode = ConstraintMode::nonnegative);

  double t_start() const { return knots.front(); }
  double t_end() const { return knots.back(); }
  int intervals() const { return static_cast<int>(knots.size()) - 1; }

  /// Throws std::invalid_argument when the knots or degree/smoothness are unusable.
  void validate() const;

  bool operator==(const SplineConfig&) const = default;
};

/// Dimensions of the PSD-pair parameterization implied by a config.
///
/// In the monotone modes the parameters describe the derivative spline, so
/// `degree` is one lower than the config's and one fewer derivative order is
/// matched at the knots.
struct PsdShape {
  int intervals = 0;
  int degree = 0;
  int n1 = 0;
  int n2 = 0;
  int orders = 0;  // derivative orders 0..orders-1 matched at interior knots

  std::size_t svec1() const { return static_cast<std::size_t>(n1 * (n1 + 1) / 2); }
  std::size_t svec2() const { return static_cast<std::size_t>(n2 * (n2 + 1) / 2); }
  std::size_t block_size() const { return svec1() + svec2(); }
  std::size_t size() const { return block_size() * static_cast<std::size_t>(intervals); }
};

PsdShape psd_shape(const SplineConfig& cfg);

/// Symmetric matrix stored as its packed lower triangle, row by row.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(int n) : n_(n), data_(static_cast<std::size_t>(n * (n + 1) / 2), 0.0) {}

  static SymMatrix identity(int n);
  /// Builds from a dense row-major n x n matrix, symmetrizing as (A + A^T) / 2.
  static SymMatrix from_dense(int n, std::span<const double> dense);

  int size() const { return n_; }
  double operator()(int i, int j) const { return data_[index(i, j)]; }
  double& operator()(int i, int j) { return data_[index(i, j)]; }
  std::span<const double> packed() const { return data_; }
  std::span<double> packed() { return data_; }

  /// x^T A x with x = (1, t, t^2, ...).
  double quadratic_form(double t) const;

  bool operator==(const SymMatrix&) const = default;

 private:
  static std::size_t index(int i, int j) {
    if (i < j) std::swap(i, j);
    return static_cast<std::size_t>(i * (i + 1) / 2 + j);
  }

  int n_ = 0;
  std::vector<double> data_;
};

/// Per-interval pair (Q1, Q2) of symmetric matrices.
///
/// Odd degree d = 2k+1:  p_i(t) = (t_i - t) [t]'Q1[t] + (t - t_{i-1}) [t]'Q2[t], both (k+1)x(k+1).
/// Even degree d = 2k:   p_i(t) = [t]'Q1[t] + (t_i - t)(t - t_{i-1}) [t]'Q2[t], Q1 (k+1)x(k+1), Q2 k x k.
/// `intercept` is only used by the monotone modes.
struct PsdPairParams {
  std::vector<SymMatrix> q1;
  std::vector<SymMatrix> q2;
  double intercept = 0.0;

  static PsdPairParams zeros(const SplineConfig& cfg);
  /// Parameters of the constant function `value` (in monotone modes: derivative zero, intercept = value).
  static PsdPairParams constant(const SplineConfig& cfg, double value);

  int intervals() const { return static_cast<int>(q1.size()); }
  bool operator==(const PsdPairParams&) const = default;
};

/// Flattens to scaled-vectorized coordinates: per interval, Q1 then Q2, each as
/// its packed lower triangle with off-diagonals multiplied by sqrt(2). Euclidean
/// distance in these coordinates equals the Frobenius distance of the matrices.
std::vector<double> to_svec(const PsdPairParams& psi);
PsdPairParams from_svec(std::span<const double> flat, const SplineConfig& cfg, double intercept = 0.0);

/// Piecewise polynomial in the global monomial basis 1, t, ..., t^degree.
struct PiecewisePoly {
  std::vector<double> knots;
  int degree = 0;
  std::vector<std::vector<double>> coeffs;  // one vector of degree+1 per piece

  int intervals() const { return static_cast<int>(coeffs.size()); }
  double t_start() const { return knots.front(); }
  double t_end() const { return knots.back(); }
  /// Index of the piece containing t; throws std::out_of_range outside [t_start, t_end).
  int piece_of(double t) const;

  bool operator==(const PiecewisePoly&) const = default;
};

double horner(std::span<const double> c, double t);

/// Raw expansion of the PSD-pair form (the derivative spline in monotone modes).
PiecewisePoly psd_pair_to_coeffs(const PsdPairParams& psi, const SplineConfig& cfg);

/// The modeled function: the PSD-pair polynomial in nonnegative mode, or
/// intercept +/- its running integral in the monotone modes.
PiecewisePoly to_spline(const PsdPairParams& psi, const SplineConfig& cfg);

double eval(const PiecewisePoly& poly, double t);
/// Like eval, but t == t_end is allowed and uses the last piece.
double eval_closed(const PiecewisePoly& poly, double t);
double integrate(const PiecewisePoly& poly, double a, double b);
PiecewisePoly derivative(const PiecewisePoly& poly);
/// Continuous running integral starting at `value_at_start`.
PiecewisePoly antiderivative(const PiecewisePoly& poly, double value_at_start = 0.0);
/// Upper bound on piece i over its closed interval. Exact for degree <= 3.
double upper_bound(const PiecewisePoly& poly, int piece);

/// jumps[q][i] = D^q p_i(t_{i+1}) - D^q p_{i+1}(t_{i+1}) at interior knot i+1.
std::vector<std::vector<double>> derivative_jumps(const PiecewisePoly& poly, int orders);

struct SmoothnessResidual {
  std::vector<std::vector<double>> jumps;  // signed, [order][interior knot]
  double max_abs() const;
};

/// Knot jumps of the PSD-pair polynomial for every constrained derivative order.
SmoothnessResidual smoothness_residual(const PsdPairParams& psi, const SplineConfig& cfg);

/// Linear map from one interval's svec block to that interval's monomial
/// coefficients, stored row-major as (degree+1) x block_size.
class CoefficientMap {
 public:
  explicit CoefficientMap(const SplineConfig& cfg);

  const PsdShape& shape() const { return shape_; }
  std::span<const double> matrix(int interval) const;
  /// Coefficients of interval i from its parameter block.
  void apply(int interval, std::span<const double> block, std::span<double> coeffs) const;
  /// block += M_i^T coeff_grad
  void apply_transpose_add(int interval, std::span<const double> coeff_grad,
                           std::span<double> block) const;

 private:
  PsdShape shape_;
  std::vector<std::vector<double>> matrices_;
};

}  // namespace drs
