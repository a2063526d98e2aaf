#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "drs/linalg.hpp"
#include "drs/spline.hpp"

namespace drs {

/// Projection onto the PSD cone, matrix by matrix: eigenvalues are clipped at
/// zero. `flat` is in svec coordinates (see to_svec).
void project_psd_inplace(std::span<double> flat, const PsdShape& shape);
PsdPairParams project_psd(const PsdPairParams& psi);
/// Nearest PSD matrix in Frobenius norm.
SymMatrix project_psd(const SymMatrix& a);

/// Linear operator C (rows = interior knots) whose row i is the jump of the
/// `order`-th derivative at knot t_{i+1}, as a functional of the svec
/// parameters: (C psi)_i = left[i] . psi_i - right[i] . psi_{i+1}.
/// Every row touches two neighbouring blocks, so C C^T is tridiagonal.
struct ConstraintMap {
  int order = 0;  // derivative order (j - 1 for the set C_j)
  std::size_t block_size = 0;
  std::vector<std::vector<double>> left;
  std::vector<std::vector<double>> right;
  Tridiagonal gram;

  std::size_t rows() const { return left.size(); }
  std::vector<double> apply(std::span<const double> flat) const;
  /// flat -= C^T lambda
  void subtract_transpose(std::span<const double> lambda, std::span<double> flat) const;
};

/// Per-interval change of coordinates psi_i = T_i sigma_i, each T_i a
/// block_size x block_size row-major matrix. Empty means the identity.
using BlockCoordinates = std::vector<std::vector<double>>;

/// Map for the set C_j, 1 <= j <= psd_shape(cfg).orders. Empty for a single interval.
/// With `coords` the rows act on sigma instead of psi.
ConstraintMap build_constraint_map(const SplineConfig& cfg, int j,
                                   const BlockCoordinates& coords = {});

/// psi - C^T (C C^T)^{-1} C psi, the Euclidean projection onto {C psi = 0}.
void project_smooth_inplace(std::span<double> flat, const ConstraintMap& map);
PsdPairParams project_smooth(const PsdPairParams& psi, const SplineConfig& cfg, const ConstraintMap& map);

/// All smoothness orders stacked into one operator; rows ordered by knot,
/// then by derivative order, so the Gram matrix is banded.
struct StackedConstraintMap {
  int orders = 0;
  std::size_t block_size = 0;
  std::vector<std::vector<double>> left;  // row r = knot * orders + order
  std::vector<std::vector<double>> right;
  BandedSpd gram;

  std::size_t rows() const { return left.size(); }
  std::vector<double> apply(std::span<const double> flat) const;
  void subtract_transpose(std::span<const double> lambda, std::span<double> flat) const;
};

StackedConstraintMap build_stacked_map(const SplineConfig& cfg,
                                       const BlockCoordinates& coords = {});
void project_stacked_inplace(std::span<double> flat, const StackedConstraintMap& map);

enum class CycleKind {
  per_order,  // P_1, ..., P_{s+1}, P_0
  stacked,    // one affine projection for all orders, then P_0
};

/// Precomputed constraint maps for one spline config. Immutable, shareable
/// across threads.
class Projector {
 public:
  explicit Projector(SplineConfig cfg);
  /// Projections taken in the coordinates sigma of `coords`. The PSD step
  /// clips the matrices of sigma, which is valid whenever each T_i is a
  /// congruence, since congruence preserves the PSD cone.
  Projector(SplineConfig cfg, const BlockCoordinates& coords);

  const SplineConfig& config() const { return cfg_; }
  const PsdShape& shape() const { return shape_; }
  const std::vector<ConstraintMap>& maps() const { return maps_; }
  const StackedConstraintMap& stacked() const { return stacked_; }

  /// `cycles` full cycles of alternating projections, each ending on the PSD set.
  void alternate_inplace(std::span<double> flat, int cycles,
                         CycleKind kind = CycleKind::stacked) const;

 private:
  SplineConfig cfg_;
  PsdShape shape_;
  std::vector<ConstraintMap> maps_;
  StackedConstraintMap stacked_;
};

PsdPairParams alternating_projections(const PsdPairParams& psi0, const SplineConfig& cfg,
                                      int cycles, CycleKind kind = CycleKind::stacked);

struct DykstraResult {
  PsdPairParams psi;
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;
};

/// Euclidean projection onto the intersection of the smoothness sets and the
/// PSD set. Stops when one full cycle moves the iterate by at most `tol`.
DykstraResult dykstra(const PsdPairParams& psi0, const SplineConfig& cfg, double tol,
                      int max_iter);

/// Smallest eigenvalue over all matrices of psi.
double min_eigenvalue(const PsdPairParams& psi);

}  // namespace drs
