#include "drs/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drs {

namespace {

const double kSqrt2 = std::sqrt(2.0);

std::vector<double> poly_mul(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

// Coefficients of [t]' Q [t].
std::vector<double> quadratic_coeffs(const SymMatrix& q) {
  const int n = q.size();
  if (n == 0) return {0.0};
  std::vector<double> out(static_cast<std::size_t>(2 * n - 1), 0.0);
  for (int a = 0; a < n; ++a) {
    out[2 * a] += q(a, a);
    for (int b = 0; b < a; ++b) out[a + b] += 2.0 * q(a, b);
  }
  return out;
}

void add_into(std::vector<double>& acc, std::span<const double> p) {
  for (std::size_t i = 0; i < p.size() && i < acc.size(); ++i) acc[i] += p[i];
}

std::vector<double> expand_interval(const SymMatrix& q1, const SymMatrix& q2, double lo, double hi,
                                    int degree) {
  std::vector<double> c(static_cast<std::size_t>(degree + 1), 0.0);
  const auto a = quadratic_coeffs(q1);
  const auto b = quadratic_coeffs(q2);
  if (degree % 2 == 1) {
    const double left[] = {hi, -1.0};
    const double right[] = {-lo, 1.0};
    add_into(c, poly_mul(left, a));
    add_into(c, poly_mul(right, b));
  } else {
    add_into(c, a);
    if (q2.size() > 0) {
      const double weight[] = {-hi * lo, hi + lo, -1.0};
      add_into(c, poly_mul(weight, b));
    }
  }
  return c;
}

// Value of the q-th derivative of sum c_n t^n.
double derivative_value(std::span<const double> c, int q, double t) {
  double acc = 0.0;
  for (int n = static_cast<int>(c.size()) - 1; n >= q; --n) {
    double falling = 1.0;
    for (int r = 0; r < q; ++r) falling *= static_cast<double>(n - r);
    acc = acc * t + c[static_cast<std::size_t>(n)] * falling;
  }
  return acc;
}

double antiderivative_value(std::span<const double> c, double t) {
  double acc = 0.0;
  for (int n = static_cast<int>(c.size()) - 1; n >= 0; --n)
    acc = acc * t + c[static_cast<std::size_t>(n)] / static_cast<double>(n + 1);
  return acc * t;
}

// Coefficients of p(m + u) in powers of u.
std::vector<double> taylor_shift(std::span<const double> c, double m) {
  std::vector<double> out(c.begin(), c.end());
  const int n = static_cast<int>(out.size());
  for (int i = 0; i < n; ++i)
    for (int j = n - 2; j >= i; --j) out[static_cast<std::size_t>(j)] += m * out[static_cast<std::size_t>(j + 1)];
  return out;
}

}  // namespace

std::string to_string(ConstraintMode mode) {
  switch (mode) {
    case ConstraintMode::nonnegative: return "nonnegative";
    case ConstraintMode::monotone_increasing: return "monotone_increasing";
    case ConstraintMode::monotone_decreasing: return "monotone_decreasing";
  }
  return "unknown";
}

ConstraintMode constraint_mode_from_string(const std::string& name) {
  if (name == "nonnegative") return ConstraintMode::nonnegative;
  if (name == "monotone_increasing") return ConstraintMode::monotone_increasing;
  if (name == "monotone_decreasing") return ConstraintMode::monotone_decreasing;
  throw std::invalid_argument("unknown constraint mode '" + name + "'");
}

SplineConfig SplineConfig::uniform(double t_start, double t_end, int intervals, int degree,
                                   int smoothness, ConstraintMode mode) {
  if (intervals < 1) throw std::invalid_argument("need at least one interval");
  SplineConfig cfg;
  cfg.knots.resize(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i)
    cfg.knots[static_cast<std::size_t>(i)] =
        t_start + (t_end - t_start) * static_cast<double>(i) / static_cast<double>(intervals);
  cfg.knots.back() = t_end;
  cfg.degree = degree;
  cfg.smoothness = smoothness;
  cfg.mode = mode;
  cfg.validate();
  return cfg;
}

void SplineConfig::validate() const {
  if (knots.size() < 2) throw std::invalid_argument("spline needs at least two knots");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (!std::isfinite(knots[i])) throw std::invalid_argument("knots must be finite");
    if (i > 0 && !(knots[i] > knots[i - 1]))
      throw std::invalid_argument("knots must be strictly increasing");
  }
  if (degree < 1) throw std::invalid_argument("degree must be >= 1");
  if (smoothness < 0 || smoothness >= degree)
    throw std::invalid_argument("smoothness must satisfy 0 <= s < degree");
}

PsdShape psd_shape(const SplineConfig& cfg) {
  PsdShape shape;
  shape.intervals = cfg.intervals();
  const bool monotone = cfg.mode != ConstraintMode::nonnegative;
  shape.degree = monotone ? cfg.degree - 1 : cfg.degree;
  shape.orders = monotone ? cfg.smoothness : cfg.smoothness + 1;
  const int k = shape.degree / 2;
  if (shape.degree % 2 == 1) {
    shape.n1 = k + 1;
    shape.n2 = k + 1;
  } else {
    shape.n1 = k + 1;
    shape.n2 = k;
  }
  return shape;
}

SymMatrix SymMatrix::identity(int n) {
  SymMatrix m(n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

SymMatrix SymMatrix::from_dense(int n, std::span<const double> dense) {
  if (dense.size() != static_cast<std::size_t>(n * n))
    throw std::invalid_argument("dense matrix has wrong size");
  SymMatrix m(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      m(i, j) = 0.5 * (dense[static_cast<std::size_t>(i * n + j)] +
                       dense[static_cast<std::size_t>(j * n + i)]);
  return m;
}

double SymMatrix::quadratic_form(double t) const {
  std::vector<double> x(static_cast<std::size_t>(n_));
  double p = 1.0;
  for (auto& xi : x) {
    xi = p;
    p *= t;
  }
  double acc = 0.0;
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) acc += x[static_cast<std::size_t>(i)] * (*this)(i, j) * x[static_cast<std::size_t>(j)];
  return acc;
}

PsdPairParams PsdPairParams::zeros(const SplineConfig& cfg) {
  const auto shape = psd_shape(cfg);
  PsdPairParams psi;
  psi.q1.assign(static_cast<std::size_t>(shape.intervals), SymMatrix(shape.n1));
  psi.q2.assign(static_cast<std::size_t>(shape.intervals), SymMatrix(shape.n2));
  return psi;
}

PsdPairParams PsdPairParams::constant(const SplineConfig& cfg, double value) {
  auto psi = zeros(cfg);
  if (cfg.mode != ConstraintMode::nonnegative) {
    psi.intercept = value;
    return psi;
  }
  const auto shape = psd_shape(cfg);
  for (int i = 0; i < shape.intervals; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (shape.degree % 2 == 1) {
      // (t_i - t) c + (t - t_{i-1}) c = c h
      const double h = cfg.knots[ui + 1] - cfg.knots[ui];
      psi.q1[ui](0, 0) = value / h;
      psi.q2[ui](0, 0) = value / h;
    } else {
      psi.q1[ui](0, 0) = value;
    }
  }
  return psi;
}

std::vector<double> to_svec(const PsdPairParams& psi) {
  std::vector<double> out;
  auto push = [&out](const SymMatrix& m) {
    for (int a = 0; a < m.size(); ++a)
      for (int b = 0; b <= a; ++b) out.push_back(a == b ? m(a, b) : kSqrt2 * m(a, b));
  };
  for (int i = 0; i < psi.intervals(); ++i) {
    push(psi.q1[static_cast<std::size_t>(i)]);
    push(psi.q2[static_cast<std::size_t>(i)]);
  }
  return out;
}

PsdPairParams from_svec(std::span<const double> flat, const SplineConfig& cfg, double intercept) {
  const auto shape = psd_shape(cfg);
  if (flat.size() != shape.size())
    throw std::invalid_argument("flat parameter vector has wrong length");
  auto psi = PsdPairParams::zeros(cfg);
  psi.intercept = intercept;
  std::size_t pos = 0;
  auto pull = [&](SymMatrix& m) {
    for (int a = 0; a < m.size(); ++a)
      for (int b = 0; b <= a; ++b) {
        const double v = flat[pos++];
        m(a, b) = a == b ? v : v / kSqrt2;
      }
  };
  for (int i = 0; i < shape.intervals; ++i) {
    pull(psi.q1[static_cast<std::size_t>(i)]);
    pull(psi.q2[static_cast<std::size_t>(i)]);
  }
  return psi;
}

int PiecewisePoly::piece_of(double t) const {
  if (!(t >= knots.front() && t < knots.back()))
    throw std::out_of_range("time outside spline domain");
  const auto it = std::upper_bound(knots.begin(), knots.end(), t);
  return static_cast<int>(it - knots.begin()) - 1;
}

double horner(std::span<const double> c, double t) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * t + *it;
  return acc;
}

PiecewisePoly psd_pair_to_coeffs(const PsdPairParams& psi, const SplineConfig& cfg) {
  const auto shape = psd_shape(cfg);
  if (psi.intervals() != shape.intervals || psi.q2.size() != psi.q1.size())
    throw std::invalid_argument("parameter intervals do not match the spline config");
  PiecewisePoly poly;
  poly.knots = cfg.knots;
  poly.degree = shape.degree;
  poly.coeffs.reserve(static_cast<std::size_t>(shape.intervals));
  for (int i = 0; i < shape.intervals; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (psi.q1[ui].size() != shape.n1 || psi.q2[ui].size() != shape.n2)
      throw std::invalid_argument("matrix size does not match the spline degree");
    poly.coeffs.push_back(
        expand_interval(psi.q1[ui], psi.q2[ui], cfg.knots[ui], cfg.knots[ui + 1], shape.degree));
  }
  return poly;
}

PiecewisePoly to_spline(const PsdPairParams& psi, const SplineConfig& cfg) {
  auto raw = psd_pair_to_coeffs(psi, cfg);
  if (cfg.mode == ConstraintMode::nonnegative) return raw;
  auto f = antiderivative(raw, 0.0);
  const double sign = cfg.mode == ConstraintMode::monotone_increasing ? 1.0 : -1.0;
  for (auto& c : f.coeffs) {
    for (auto& v : c) v *= sign;
    c[0] += psi.intercept;
  }
  return f;
}

double eval(const PiecewisePoly& poly, double t) {
  return horner(poly.coeffs[static_cast<std::size_t>(poly.piece_of(t))], t);
}

double eval_closed(const PiecewisePoly& poly, double t) {
  if (t == poly.t_end()) return horner(poly.coeffs.back(), t);
  return eval(poly, t);
}

double integrate(const PiecewisePoly& poly, double a, double b) {
  if (a > b) throw std::invalid_argument("integration limits are reversed");
  if (a < poly.t_start() || b > poly.t_end())
    throw std::invalid_argument("integration limits outside spline domain");
  double total = 0.0;
  for (int i = 0; i < poly.intervals(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double lo = std::max(a, poly.knots[ui]);
    const double hi = std::min(b, poly.knots[ui + 1]);
    if (hi <= lo) continue;
    total += antiderivative_value(poly.coeffs[ui], hi) - antiderivative_value(poly.coeffs[ui], lo);
  }
  return total;
}

PiecewisePoly derivative(const PiecewisePoly& poly) {
  PiecewisePoly out;
  out.knots = poly.knots;
  out.degree = std::max(poly.degree - 1, 0);
  for (const auto& c : poly.coeffs) {
    std::vector<double> d(static_cast<std::size_t>(out.degree + 1), 0.0);
    for (std::size_t n = 1; n < c.size(); ++n) d[n - 1] = static_cast<double>(n) * c[n];
    out.coeffs.push_back(std::move(d));
  }
  return out;
}

PiecewisePoly antiderivative(const PiecewisePoly& poly, double value_at_start) {
  PiecewisePoly out;
  out.knots = poly.knots;
  out.degree = poly.degree + 1;
  double running = value_at_start;
  for (int i = 0; i < poly.intervals(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& c = poly.coeffs[ui];
    std::vector<double> a(c.size() + 1, 0.0);
    for (std::size_t n = 0; n < c.size(); ++n) a[n + 1] = c[n] / static_cast<double>(n + 1);
    a[0] = running - horner(a, poly.knots[ui]);
    running = horner(a, poly.knots[ui + 1]);
    out.coeffs.push_back(std::move(a));
  }
  return out;
}

double upper_bound(const PiecewisePoly& poly, int piece) {
  if (piece < 0 || piece >= poly.intervals()) throw std::out_of_range("piece index out of range");
  const auto up = static_cast<std::size_t>(piece);
  const auto& c = poly.coeffs[up];
  const double lo = poly.knots[up];
  const double hi = poly.knots[up + 1];
  if (poly.degree > 3) {
    const double mid = 0.5 * (lo + hi);
    const double r = 0.5 * (hi - lo);
    const auto shifted = taylor_shift(c, mid);
    double bound = 0.0;
    double rn = 1.0;
    for (double b : shifted) {
      bound += std::abs(b) * rn;
      rn *= r;
    }
    return bound;
  }
  double best = std::max(horner(c, lo), horner(c, hi));
  auto consider = [&](double t) {
    if (t > lo && t < hi) best = std::max(best, horner(c, t));
  };
  const double c1 = c.size() > 1 ? c[1] : 0.0;
  const double c2 = c.size() > 2 ? c[2] : 0.0;
  const double c3 = c.size() > 3 ? c[3] : 0.0;
  // stationary points of c0 + c1 t + c2 t^2 + c3 t^3: 3c3 t^2 + 2c2 t + c1 = 0
  const double qa = 3.0 * c3;
  const double qb = 2.0 * c2;
  const double qc = c1;
  if (qa == 0.0) {
    if (qb != 0.0) consider(-qc / qb);
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double q = -0.5 * (qb + std::copysign(sq, qb));
      if (q != 0.0) {
        consider(q / qa);
        consider(qc / q);
      } else {
        consider(0.0);
      }
    }
  }
  return best;
}

std::vector<std::vector<double>> derivative_jumps(const PiecewisePoly& poly, int orders) {
  std::vector<std::vector<double>> jumps(static_cast<std::size_t>(std::max(orders, 0)));
  for (int q = 0; q < orders; ++q) {
    auto& row = jumps[static_cast<std::size_t>(q)];
    for (int i = 0; i + 1 < poly.intervals(); ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const double t = poly.knots[ui + 1];
      row.push_back(derivative_value(poly.coeffs[ui], q, t) -
                    derivative_value(poly.coeffs[ui + 1], q, t));
    }
  }
  return jumps;
}

double SmoothnessResidual::max_abs() const {
  double m = 0.0;
  for (const auto& row : jumps)
    for (double v : row) m = std::max(m, std::abs(v));
  return m;
}

SmoothnessResidual smoothness_residual(const PsdPairParams& psi, const SplineConfig& cfg) {
  return {derivative_jumps(psd_pair_to_coeffs(psi, cfg), psd_shape(cfg).orders)};
}

CoefficientMap::CoefficientMap(const SplineConfig& cfg) : shape_(psd_shape(cfg)) {
  const std::size_t block = shape_.block_size();
  const std::size_t rows = static_cast<std::size_t>(shape_.degree + 1);
  auto unit = [](int n, std::size_t k) {
    SymMatrix m(n);
    std::size_t pos = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b <= a; ++b, ++pos)
        if (pos == k) m(a, b) = a == b ? 1.0 : 1.0 / kSqrt2;
    return m;
  };
  for (int i = 0; i < shape_.intervals; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    std::vector<double> mat(rows * block, 0.0);
    for (std::size_t j = 0; j < block; ++j) {
      SymMatrix q1(shape_.n1), q2(shape_.n2);
      if (j < shape_.svec1())
        q1 = unit(shape_.n1, j);
      else
        q2 = unit(shape_.n2, j - shape_.svec1());
      const auto col = expand_interval(q1, q2, cfg.knots[ui], cfg.knots[ui + 1], shape_.degree);
      for (std::size_t r = 0; r < rows; ++r) mat[r * block + j] = col[r];
    }
    matrices_.push_back(std::move(mat));
  }
}

std::span<const double> CoefficientMap::matrix(int interval) const {
  return matrices_[static_cast<std::size_t>(interval)];
}

void CoefficientMap::apply(int interval, std::span<const double> block,
                           std::span<double> coeffs) const {
  const auto& m = matrices_[static_cast<std::size_t>(interval)];
  const std::size_t cols = shape_.block_size();
  for (std::size_t r = 0; r < coeffs.size(); ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += m[r * cols + j] * block[j];
    coeffs[r] = acc;
  }
}

void CoefficientMap::apply_transpose_add(int interval, std::span<const double> coeff_grad,
                                         std::span<double> block) const {
  const auto& m = matrices_[static_cast<std::size_t>(interval)];
  const std::size_t cols = shape_.block_size();
  for (std::size_t r = 0; r < coeff_grad.size(); ++r) {
    const double g = coeff_grad[r];
    if (g == 0.0) continue;
    for (std::size_t j = 0; j < cols; ++j) block[j] += m[r * cols + j] * g;
  }
}

}  // namespace drs
