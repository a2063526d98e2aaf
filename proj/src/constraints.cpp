#include "drs/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace drs {

namespace {

const double kSqrt2 = std::sqrt(2.0);

SymMatrix unpack(std::span<const double> v, int n) {
  SymMatrix m(n);
  std::size_t pos = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b <= a; ++b, ++pos) m(a, b) = a == b ? v[pos] : v[pos] / kSqrt2;
  return m;
}

void pack(const SymMatrix& m, std::span<double> v) {
  std::size_t pos = 0;
  for (int a = 0; a < m.size(); ++a)
    for (int b = 0; b <= a; ++b, ++pos) v[pos] = a == b ? m(a, b) : kSqrt2 * m(a, b);
}

// Row vector of D^q t^n for n = 0..degree.
std::vector<double> derivative_functional(int degree, int q, double t) {
  std::vector<double> phi(static_cast<std::size_t>(degree + 1), 0.0);
  for (int n = q; n <= degree; ++n) {
    double falling = 1.0;
    for (int r = 0; r < q; ++r) falling *= static_cast<double>(n - r);
    phi[static_cast<std::size_t>(n)] = falling * std::pow(t, n - q);
  }
  return phi;
}

std::vector<double> functional_on_block(const CoefficientMap& cm, int interval,
                                        std::span<const double> phi) {
  const std::size_t block = cm.shape().block_size();
  std::vector<double> row(block, 0.0);
  cm.apply_transpose_add(interval, phi, row);
  return row;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// row^T T_i: a functional on psi_i rewritten as one on sigma_i.
std::vector<double> pull_back(std::vector<double> row, const BlockCoordinates& coords,
                              int interval) {
  if (coords.empty()) return row;
  const auto& tm = coords[static_cast<std::size_t>(interval)];
  const std::size_t n = row.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c] += row[r] * tm[r * n + c];
  return out;
}

void check_coords(const BlockCoordinates& coords, const PsdShape& shape) {
  if (coords.empty()) return;
  const std::size_t block = shape.block_size();
  if (coords.size() != static_cast<std::size_t>(shape.intervals))
    throw std::invalid_argument("need one coordinate block per interval");
  for (const auto& tm : coords)
    if (tm.size() != block * block) throw std::invalid_argument("coordinate block has wrong size");
}

}  // namespace

SymMatrix project_psd(const SymMatrix& a) {
  const auto eig = sym_eigen(a);
  std::vector<double> clipped(eig.values);
  for (auto& v : clipped) v = std::max(v, 0.0);
  return compose(eig, clipped);
}

void project_psd_inplace(std::span<double> flat, const PsdShape& shape) {
  const std::size_t block = shape.block_size();
  for (int i = 0; i < shape.intervals; ++i) {
    auto b = flat.subspan(static_cast<std::size_t>(i) * block, block);
    if (shape.n1 > 0) {
      auto s1 = b.subspan(0, shape.svec1());
      pack(project_psd(unpack(s1, shape.n1)), s1);
    }
    if (shape.n2 > 0) {
      auto s2 = b.subspan(shape.svec1(), shape.svec2());
      pack(project_psd(unpack(s2, shape.n2)), s2);
    }
  }
}

PsdPairParams project_psd(const PsdPairParams& psi) {
  PsdPairParams out = psi;
  for (auto& m : out.q1) m = project_psd(m);
  for (auto& m : out.q2) m = project_psd(m);
  return out;
}

std::vector<double> ConstraintMap::apply(std::span<const double> flat) const {
  std::vector<double> out(rows());
  for (std::size_t i = 0; i < rows(); ++i)
    out[i] = dot(left[i], flat.subspan(i * block_size, block_size)) -
             dot(right[i], flat.subspan((i + 1) * block_size, block_size));
  return out;
}

void ConstraintMap::subtract_transpose(std::span<const double> lambda,
                                       std::span<double> flat) const {
  for (std::size_t i = 0; i < rows(); ++i) {
    auto bi = flat.subspan(i * block_size, block_size);
    auto bj = flat.subspan((i + 1) * block_size, block_size);
    for (std::size_t k = 0; k < block_size; ++k) {
      bi[k] -= lambda[i] * left[i][k];
      bj[k] += lambda[i] * right[i][k];
    }
  }
}

ConstraintMap build_constraint_map(const SplineConfig& cfg, int j, const BlockCoordinates& coords) {
  cfg.validate();
  const CoefficientMap cm(cfg);
  const auto& shape = cm.shape();
  check_coords(coords, shape);
  if (j < 1 || j > shape.orders)
    throw std::invalid_argument("constraint order out of range for this spline config");
  ConstraintMap map;
  map.order = j - 1;
  map.block_size = shape.block_size();
  const int rows = shape.intervals - 1;
  for (int i = 0; i < rows; ++i) {
    const double t = cfg.knots[static_cast<std::size_t>(i + 1)];
    const auto phi = derivative_functional(shape.degree, map.order, t);
    map.left.push_back(pull_back(functional_on_block(cm, i, phi), coords, i));
    map.right.push_back(pull_back(functional_on_block(cm, i + 1, phi), coords, i + 1));
  }
  if (rows > 0) {
    map.gram.diag.resize(static_cast<std::size_t>(rows));
    map.gram.sub.resize(static_cast<std::size_t>(rows - 1));
    map.gram.super.resize(static_cast<std::size_t>(rows - 1));
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows); ++i) {
      map.gram.diag[i] = dot(map.left[i], map.left[i]) + dot(map.right[i], map.right[i]);
      if (i + 1 < static_cast<std::size_t>(rows)) {
        const double off = -dot(map.right[i], map.left[i + 1]);
        map.gram.sub[i] = off;
        map.gram.super[i] = off;
      }
    }
  }
  return map;
}

void project_smooth_inplace(std::span<double> flat, const ConstraintMap& map) {
  if (map.rows() == 0) return;
  const auto lambda = thomas_solve(map.gram, map.apply(flat));
  map.subtract_transpose(lambda, flat);
}

PsdPairParams project_smooth(const PsdPairParams& psi, const SplineConfig& cfg,
                             const ConstraintMap& map) {
  auto flat = to_svec(psi);
  if (flat.size() != map.block_size * static_cast<std::size_t>(cfg.intervals()))
    throw std::invalid_argument("constraint map does not match parameters");
  project_smooth_inplace(flat, map);
  return from_svec(flat, cfg, psi.intercept);
}

std::vector<double> StackedConstraintMap::apply(std::span<const double> flat) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) {
    const std::size_t knot = r / static_cast<std::size_t>(orders);
    out[r] = dot(left[r], flat.subspan(knot * block_size, block_size)) -
             dot(right[r], flat.subspan((knot + 1) * block_size, block_size));
  }
  return out;
}

void StackedConstraintMap::subtract_transpose(std::span<const double> lambda,
                                              std::span<double> flat) const {
  for (std::size_t r = 0; r < rows(); ++r) {
    const std::size_t knot = r / static_cast<std::size_t>(orders);
    auto bi = flat.subspan(knot * block_size, block_size);
    auto bj = flat.subspan((knot + 1) * block_size, block_size);
    for (std::size_t k = 0; k < block_size; ++k) {
      bi[k] -= lambda[r] * left[r][k];
      bj[k] += lambda[r] * right[r][k];
    }
  }
}

StackedConstraintMap build_stacked_map(const SplineConfig& cfg, const BlockCoordinates& coords) {
  cfg.validate();
  const CoefficientMap cm(cfg);
  const auto& shape = cm.shape();
  check_coords(coords, shape);
  StackedConstraintMap map;
  map.orders = shape.orders;
  map.block_size = shape.block_size();
  const int knots = shape.intervals - 1;
  if (knots <= 0 || shape.orders == 0) return map;
  for (int i = 0; i < knots; ++i) {
    const double t = cfg.knots[static_cast<std::size_t>(i + 1)];
    for (int q = 0; q < shape.orders; ++q) {
      const auto phi = derivative_functional(shape.degree, q, t);
      map.left.push_back(pull_back(functional_on_block(cm, i, phi), coords, i));
      map.right.push_back(pull_back(functional_on_block(cm, i + 1, phi), coords, i + 1));
    }
  }
  const std::size_t n = map.rows();
  const std::size_t q = static_cast<std::size_t>(shape.orders);
  map.gram = BandedSpd(n, 2 * q - 1);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t kr = r / q;
    for (std::size_t c = (r >= 2 * q - 1 ? r - (2 * q - 1) : 0); c <= r; ++c) {
      const std::size_t kc = c / q;
      double v = 0.0;
      if (kc == kr)
        v = dot(map.left[r], map.left[c]) + dot(map.right[r], map.right[c]);
      else if (kc + 1 == kr)
        v = -dot(map.right[c], map.left[r]);
      map.gram.at(r, c) = v;
    }
  }
  map.gram.factor();
  return map;
}

void project_stacked_inplace(std::span<double> flat, const StackedConstraintMap& map) {
  if (map.rows() == 0) return;
  const auto lambda = map.gram.solve(map.apply(flat));
  map.subtract_transpose(lambda, flat);
}

Projector::Projector(SplineConfig cfg)
    : cfg_(std::move(cfg)), shape_(psd_shape(cfg_)), stacked_(build_stacked_map(cfg_)) {
  for (int j = 1; j <= shape_.orders; ++j) maps_.push_back(build_constraint_map(cfg_, j));
}

Projector::Projector(SplineConfig cfg, const BlockCoordinates& coords)
    : cfg_(std::move(cfg)), shape_(psd_shape(cfg_)), stacked_(build_stacked_map(cfg_, coords)) {
  for (int j = 1; j <= shape_.orders; ++j) maps_.push_back(build_constraint_map(cfg_, j, coords));
}

void Projector::alternate_inplace(std::span<double> flat, int cycles, CycleKind kind) const {
  if (cycles < 1) throw std::invalid_argument("alternating projections need at least one cycle");
  if (flat.size() != shape_.size()) throw std::invalid_argument("parameter vector has wrong length");
  for (int c = 0; c < cycles; ++c) {
    if (kind == CycleKind::per_order) {
      for (const auto& map : maps_) project_smooth_inplace(flat, map);
    } else {
      project_stacked_inplace(flat, stacked_);
    }
    project_psd_inplace(flat, shape_);
  }
}

PsdPairParams alternating_projections(const PsdPairParams& psi0, const SplineConfig& cfg,
                                      int cycles, CycleKind kind) {
  const Projector projector(cfg);
  auto flat = to_svec(psi0);
  projector.alternate_inplace(flat, cycles, kind);
  return from_svec(flat, cfg, psi0.intercept);
}

DykstraResult dykstra(const PsdPairParams& psi0, const SplineConfig& cfg, double tol,
                      int max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("dykstra tolerance must be positive");
  const auto stacked = build_stacked_map(cfg);
  const auto shape = psd_shape(cfg);
  auto x = to_svec(psi0);
  const std::size_t n = x.size();
  std::vector<double> p_affine(n, 0.0), p_psd(n, 0.0), y(n), prev(n);
  DykstraResult result;
  for (int it = 1; it <= max_iter; ++it) {
    prev = x;
    for (std::size_t k = 0; k < n; ++k) y[k] = x[k] + p_affine[k];
    project_stacked_inplace(y, stacked);
    for (std::size_t k = 0; k < n; ++k) {
      p_affine[k] = x[k] + p_affine[k] - y[k];
      x[k] = y[k];
    }
    for (std::size_t k = 0; k < n; ++k) y[k] = x[k] + p_psd[k];
    project_psd_inplace(y, shape);
    double change = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      p_psd[k] = x[k] + p_psd[k] - y[k];
      x[k] = y[k];
      change += (x[k] - prev[k]) * (x[k] - prev[k]);
    }
    result.iterations = it;
    result.last_change = std::sqrt(change);
    if (result.last_change <= tol) {
      result.converged = true;
      break;
    }
  }
  result.psi = from_svec(x, cfg, psi0.intercept);
  return result;
}

double min_eigenvalue(const PsdPairParams& psi) {
  double m = std::numeric_limits<double>::infinity();
  auto scan = [&m](const SymMatrix& a) {
    if (a.size() == 0) return;
    m = std::min(m, sym_eigen(a).values.front());
  };
  for (const auto& a : psi.q1) scan(a);
  for (const auto& a : psi.q2) scan(a);
  return m;
}

}  // namespace drs
