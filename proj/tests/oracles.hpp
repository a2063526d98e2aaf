#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's numerical kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "drs/constraints.hpp"
#include "drs/rng.hpp"
#include "drs/spline.hpp"

namespace oracle {

/// Composite Simpson rule with `panels` (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int k = 1; k < panels; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return s * h / 3.0;
}

/// Simpson over every piece, each integrated with its own closed-interval
/// evaluator f(piece, t).
inline double simpson_pieces(const std::function<double(int, double)>& f,
                             const std::vector<double>& knots, int panels_per_piece) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i)
    total += simpson([&](double t) { return f(static_cast<int>(i), t); }, knots[i], knots[i + 1],
                     panels_per_piece);
  return total;
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
inline std::vector<double> dense_solve(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    if (a[piv * n + c] == 0.0) throw std::runtime_error("singular");
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i * n + k] * x[k];
    x[i] = s / a[i * n + i];
  }
  return x;
}

/// Dense rows of the constraint operator.
inline std::vector<std::vector<double>> dense_rows(const drs::ConstraintMap& map, std::size_t dim) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < map.rows(); ++i) {
    std::vector<double> r(dim, 0.0);
    for (std::size_t k = 0; k < map.block_size; ++k) {
      r[i * map.block_size + k] += map.left[i][k];
      r[(i + 1) * map.block_size + k] -= map.right[i][k];
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/// argmin ||x - y||^2 subject to C x = 0, by solving the full KKT system
/// [I C^T; C 0] [x; lambda] = [y; 0].
inline std::vector<double> kkt_projection(const std::vector<std::vector<double>>& c,
                                          const std::vector<double>& y) {
  const std::size_t n = y.size();
  const std::size_t m = c.size();
  const std::size_t dim = n + m;
  std::vector<double> a(dim * dim, 0.0), rhs(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    a[i * dim + i] = 1.0;
    rhs[i] = y[i];
  }
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      a[(n + r) * dim + k] = c[r][k];
      a[k * dim + n + r] = c[r][k];
    }
  auto sol = dense_solve(a, rhs);
  sol.resize(n);
  return sol;
}

/// Symmetric matrix with independent standard normal entries.
inline drs::SymMatrix random_symmetric(int n, drs::Rng& rng, double scale = 1.0) {
  drs::SymMatrix m(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b <= a; ++b) m(a, b) = scale * rng.normal();
  return m;
}

/// A A^T with a standard normal A.
inline drs::SymMatrix random_psd(int n, drs::Rng& rng, double scale = 1.0) {
  std::vector<double> a(static_cast<std::size_t>(n * n));
  for (auto& v : a) v = rng.normal();
  drs::SymMatrix m(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += a[static_cast<std::size_t>(i * n + k)] * a[static_cast<std::size_t>(j * n + k)];
      m(i, j) = scale * s;
    }
  return m;
}

inline drs::PsdPairParams random_psi(const drs::SplineConfig& cfg, drs::Rng& rng, bool psd,
                                     double scale = 1.0) {
  auto psi = drs::PsdPairParams::zeros(cfg);
  for (auto& m : psi.q1) m = psd ? random_psd(m.size(), rng, scale) : random_symmetric(m.size(), rng, scale);
  for (auto& m : psi.q2) m = psd ? random_psd(m.size(), rng, scale) : random_symmetric(m.size(), rng, scale);
  return psi;
}

/// Direct evaluation of the PSD-pair form on piece i, without expanding it.
inline double direct_psd_pair(const drs::PsdPairParams& psi, const drs::SplineConfig& cfg, int i,
                              double t) {
  const double lo = cfg.knots[static_cast<std::size_t>(i)];
  const double hi = cfg.knots[static_cast<std::size_t>(i) + 1];
  const auto& q1 = psi.q1[static_cast<std::size_t>(i)];
  const auto& q2 = psi.q2[static_cast<std::size_t>(i)];
  auto quad = [t](const drs::SymMatrix& q) {
    double s = 0.0;
    for (int a = 0; a < q.size(); ++a)
      for (int b = 0; b < q.size(); ++b) s += std::pow(t, a) * q(a, b) * std::pow(t, b);
    return s;
  };
  if (cfg.degree % 2 == 1) return (hi - t) * quad(q1) + (t - lo) * quad(q2);
  return quad(q1) + (hi - t) * (t - lo) * quad(q2);
}

inline double frobenius(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
