#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "drs/constraints.hpp"
#include "drs/spline.hpp"

namespace drs::ad {

/// Handle to a node of a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// list is already topologically sorted; backward() walks it once in reverse.
/// Forward values are computed as operations are recorded.
class Tape {
 public:
  /// Accumulates into the gradients of a node's inputs, reading the node's own gradient.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var leaf(std::vector<double> value, bool requires_grad = true);
  Var constant(std::vector<double> value) { return leaf(std::move(value), false); }
  Var record(std::vector<double> value, std::span<const Var> inputs, Backward vjp);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t size(Var v) const { return value(v).size(); }
  bool requires_grad(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Throws std::logic_error for a handle that does not belong to this tape
  /// and std::invalid_argument when the seed does not match the output size.
  void backward(Var output, std::span<const double> seed);
  void backward(Var scalar_output);

  /// Throws std::logic_error before backward() has run.
  std::span<const double> grad(Var v) const;

  // Used by primitive implementations inside a Backward callback.
  std::span<const double> grad_of(std::size_t id) const { return nodes_[id].grad; }
  std::span<double> grad_mut(std::size_t id) { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::span<const double> value_of(std::size_t id) const { return nodes_[id].value; }

 private:
  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    Backward vjp;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool has_gradients_ = false;
};

// Elementwise and linear primitives.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
Var sum(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var exp(Tape& t, Var a);
/// W x + b with W stored row-major as rows x cols.
Var affine(Tape& t, Var w, Var x, Var b, std::size_t rows, std::size_t cols);
/// Concatenation of several vectors.
Var concat(Tape& t, std::span<const Var> parts);

/// Local coordinates of one interval. A matrix S written in the variable
/// u = (t - center) / half_width stands for Q = gain B^T S B in global time,
/// where [u] = B [t]. Congruence keeps S PSD iff Q is.
struct OutputFrame {
  double center = 0.0;
  double half_width = 1.0;
  double gain1 = 1.0;
  double gain2 = 1.0;
};

/// The block_size x block_size matrix taking svec(S1, S2) to svec(Q1, Q2).
std::vector<double> frame_block(const PsdShape& shape, const OutputFrame& frame);
BlockCoordinates frame_coordinates(const PsdShape& shape, std::span<const OutputFrame> frames);

/// Dense per-interval matrices (n1*n1 entries of S1, then n2*n2 of S2) to the
/// svec coordinates of their symmetric parts.
Var symmetric_pack(Tape& t, Var dense, const PsdShape& shape);

/// Block-diagonal linear map, block i applied to interval i.
Var block_linear(Tape& t, Var flat, const BlockCoordinates& blocks);

/// Eigenvalue clipping of every matrix. The VJP is the Daleckii-Krein
/// derivative, with the subgradient 0 at an exactly zero eigenvalue.
Var psd_project(Tape& t, Var flat, const PsdShape& shape);

/// Orthogonal projection onto {C psi = 0}; self-adjoint, so the VJP reuses it.
Var smooth_project(Tape& t, Var flat, const ConstraintMap& map);
Var stacked_project(Tape& t, Var flat, const StackedConstraintMap& map);

/// `cycles` unrolled cycles of alternating projections.
Var alternating_projections(Tape& t, Var flat, const Projector& projector, int cycles,
                            CycleKind kind);

/// Poisson log-likelihood of `events` under the spline with PSD-pair
/// parameters `flat` (nonnegative mode). Events must lie in the spline domain.
Var spline_loglik(Tape& t, Var flat, std::span<const double> events, const CoefficientMap& map,
                  std::span<const double> knots);

/// KL(N(mu, diag(exp(2 log_std))) || N(0, I)).
Var kl_diag_gaussian(Tape& t, Var mu, Var log_std);

using TapeFunction = std::function<Var(Tape&, Var)>;

struct GradCheckReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> rel_error;
  double max_rel_error = 0.0;
};

/// Compares the reverse-mode gradient of w . f(x) against central differences,
/// coordinate by coordinate. `w` is drawn from a fixed seed when f is vector valued.
GradCheckReport grad_check(const TapeFunction& f, std::span<const double> point, double eps = 1e-5);

}  // namespace drs::ad
