#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "drs/spline.hpp"

namespace drs {

/// Raised for singular systems, failed factorizations and non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eigendecomposition A = U diag(values) U^T, values ascending.
struct SymEigen {
  std::vector<double> values;
  std::vector<double> vectors;  // column-major n x n, column i pairs with values[i]
  int n = 0;

  double vector(int row, int col) const { return vectors[static_cast<std::size_t>(col * n + row)]; }
};

/// Closed form for n <= 2, cyclic Jacobi otherwise.
SymEigen sym_eigen(const SymMatrix& a);

/// Rebuilds U diag(values) U^T.
SymMatrix compose(const SymEigen& eig, std::span<const double> values);

struct Tridiagonal {
  std::vector<double> sub;    // sub[i] = T(i+1, i), size n-1
  std::vector<double> diag;   // size n
  std::vector<double> super;  // super[i] = T(i, i+1), size n-1

  std::size_t size() const { return diag.size(); }
  std::vector<double> multiply(std::span<const double> x) const;
};

/// Thomas algorithm. Throws NumericalError on a zero pivot.
std::vector<double> thomas_solve(const Tridiagonal& t, std::span<const double> rhs);

/// Symmetric positive definite band matrix with `bandwidth` sub-diagonals,
/// factored in place by band Cholesky.
class BandedSpd {
 public:
  BandedSpd() = default;
  BandedSpd(std::size_t n, std::size_t bandwidth);

  std::size_t size() const { return n_; }
  std::size_t bandwidth() const { return bw_; }
  /// Entry (i, j) with j <= i and i - j <= bandwidth.
  double& at(std::size_t i, std::size_t j) { return band_[i * (bw_ + 1) + (i - j)]; }
  double at(std::size_t i, std::size_t j) const { return band_[i * (bw_ + 1) + (i - j)]; }

  /// Throws NumericalError when the matrix is not positive definite.
  void factor();
  std::vector<double> solve(std::span<const double> rhs) const;

 private:
  std::size_t n_ = 0;
  std::size_t bw_ = 0;
  std::vector<double> band_;
  bool factored_ = false;
};

/// Dense lower Cholesky factor of a row-major SPD matrix; throws NumericalError on failure.
std::vector<double> cholesky(std::span<const double> a, std::size_t n);

}  // namespace drs
