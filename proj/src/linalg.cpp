#include "drs/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace drs {

namespace {

SymEigen eigen_2x2(const SymMatrix& a) {
  SymEigen e;
  e.n = 2;
  const double p = a(0, 0), q = a(1, 0), r = a(1, 1);
  const double mean = 0.5 * (p + r);
  const double rad = std::hypot(0.5 * (p - r), q);
  e.values = {mean - rad, mean + rad};
  // eigenvector of the larger eigenvalue is (cos th, sin th)
  const double th = 0.5 * std::atan2(2.0 * q, p - r);
  const double c = std::cos(th), s = std::sin(th);
  e.vectors = {-s, c, c, s};
  return e;
}

SymEigen eigen_jacobi(const SymMatrix& a) {
  const int n = a.size();
  const auto un = static_cast<std::size_t>(n);
  std::vector<double> m(un * un), v(un * un, 0.0);
  for (int i = 0; i < n; ++i) {
    v[static_cast<std::size_t>(i * n + i)] = 1.0;
    for (int j = 0; j < n; ++j) m[static_cast<std::size_t>(i * n + j)] = a(i, j);
  }
  auto at = [&](std::vector<double>& x, int i, int j) -> double& {
    return x[static_cast<std::size_t>(i * n + j)];
  };
  double scale = 0.0;
  for (double x : m) scale += x * x;
  const double tol = 1e-12 * std::max(std::sqrt(scale), 1e-300);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(m, i, j) * at(m, i, j);
    if (std::sqrt(off) <= tol) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(m, p, q);
        if (apq == 0.0) continue;
        const double theta = (at(m, q, q) - at(m, p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double mkp = at(m, k, p), mkq = at(m, k, q);
          at(m, k, p) = c * mkp - s * mkq;
          at(m, k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          const double mpk = at(m, p, k), mqk = at(m, q, k);
          at(m, p, k) = c * mpk - s * mqk;
          at(m, q, k) = s * mpk + c * mqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = at(v, k, p), vkq = at(v, k, q);
          at(v, k, p) = c * vkp - s * vkq;
          at(v, k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<int> order(un);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) { return at(m, x, x) < at(m, y, y); });
  SymEigen e;
  e.n = n;
  e.values.resize(un);
  e.vectors.resize(un * un);
  for (int c = 0; c < n; ++c) {
    const int src = order[static_cast<std::size_t>(c)];
    e.values[static_cast<std::size_t>(c)] = at(m, src, src);
    for (int r = 0; r < n; ++r) e.vectors[static_cast<std::size_t>(c * n + r)] = at(v, r, src);
  }
  return e;
}

}  // namespace

SymEigen sym_eigen(const SymMatrix& a) {
  const int n = a.size();
  if (n == 0) return SymEigen{};
  if (n == 1) return SymEigen{{a(0, 0)}, {1.0}, 1};
  if (n == 2) return eigen_2x2(a);
  return eigen_jacobi(a);
}

SymMatrix compose(const SymEigen& eig, std::span<const double> values) {
  SymMatrix out(eig.n);
  for (int i = 0; i < eig.n; ++i)
    for (int j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (int k = 0; k < eig.n; ++k)
        acc += eig.vector(i, k) * values[static_cast<std::size_t>(k)] * eig.vector(j, k);
      out(i, j) = acc;
    }
  return out;
}

std::vector<double> Tridiagonal::multiply(std::span<const double> x) const {
  const std::size_t n = size();
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = diag[i] * x[i];
    if (i > 0) y[i] += sub[i - 1] * x[i - 1];
    if (i + 1 < n) y[i] += super[i] * x[i + 1];
  }
  return y;
}

std::vector<double> thomas_solve(const Tridiagonal& t, std::span<const double> rhs) {
  const std::size_t n = t.size();
  if (rhs.size() != n) throw std::invalid_argument("rhs size does not match system");
  if (n == 0) return {};
  std::vector<double> c(n, 0.0), d(n, 0.0), x(n, 0.0);
  double pivot = t.diag[0];
  if (pivot == 0.0) throw NumericalError("singular tridiagonal system (zero pivot)");
  c[0] = n > 1 ? t.super[0] / pivot : 0.0;
  d[0] = rhs[0] / pivot;
  for (std::size_t i = 1; i < n; ++i) {
    pivot = t.diag[i] - t.sub[i - 1] * c[i - 1];
    if (pivot == 0.0 || !std::isfinite(pivot))
      throw NumericalError("singular tridiagonal system (zero pivot)");
    c[i] = i + 1 < n ? t.super[i] / pivot : 0.0;
    d[i] = (rhs[i] - t.sub[i - 1] * d[i - 1]) / pivot;
  }
  x[n - 1] = d[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

BandedSpd::BandedSpd(std::size_t n, std::size_t bandwidth)
    : n_(n), bw_(bandwidth), band_(n * (bandwidth + 1), 0.0) {}

void BandedSpd::factor() {
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j0 = i > bw_ ? i - bw_ : 0;
    for (std::size_t j = j0; j <= i; ++j) {
      double s = at(i, j);
      const std::size_t k0 = std::max(j0, j > bw_ ? j - bw_ : 0);
      for (std::size_t k = k0; k < j; ++k) s -= at(i, k) * at(j, k);
      if (j == i) {
        if (!(s > 0.0)) throw NumericalError("band matrix is not positive definite");
        at(i, i) = std::sqrt(s);
      } else {
        at(i, j) = s / at(j, j);
      }
    }
  }
  factored_ = true;
}

std::vector<double> BandedSpd::solve(std::span<const double> rhs) const {
  if (!factored_) throw std::logic_error("BandedSpd::solve called before factor");
  if (rhs.size() != n_) throw std::invalid_argument("rhs size does not match system");
  std::vector<double> y(rhs.begin(), rhs.end());
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j0 = i > bw_ ? i - bw_ : 0;
    for (std::size_t j = j0; j < i; ++j) y[i] -= at(i, j) * y[j];
    y[i] /= at(i, i);
  }
  for (std::size_t i = n_; i-- > 0;) {
    const std::size_t j1 = std::min(n_ - 1, i + bw_);
    for (std::size_t j = i + 1; j <= j1; ++j) y[i] -= at(j, i) * y[j];
    y[i] /= at(i, i);
  }
  return y;
}

std::vector<double> cholesky(std::span<const double> a, std::size_t n) {
  if (a.size() != n * n) throw std::invalid_argument("matrix has wrong size");
  std::vector<double> l(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      if (i == j) {
        if (!(s > 0.0)) throw NumericalError("matrix is not positive definite");
        l[i * n + i] = std::sqrt(s);
      } else {
        l[i * n + j] = s / l[j * n + j];
      }
    }
  }
  return l;
}

}  // namespace drs
