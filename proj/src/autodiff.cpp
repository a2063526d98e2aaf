#include "drs/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "drs/linalg.hpp"
#include "drs/point_process.hpp"
#include "drs/rng.hpp"

namespace drs::ad {

namespace {

const double kSqrt2 = std::sqrt(2.0);

void check_same_size(const Tape& t, Var a, Var b) {
  if (t.size(a) != t.size(b)) throw std::invalid_argument("operand sizes differ");
}

SymMatrix unpack(std::span<const double> v, int n) {
  SymMatrix m(n);
  std::size_t pos = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b <= a; ++b, ++pos) m(a, b) = a == b ? v[pos] : v[pos] / kSqrt2;
  return m;
}

void pack_add(const SymMatrix& m, std::span<double> v) {
  std::size_t pos = 0;
  for (int a = 0; a < m.size(); ++a)
    for (int b = 0; b <= a; ++b, ++pos) v[pos] += a == b ? m(a, b) : kSqrt2 * m(a, b);
}

void pack_set(const SymMatrix& m, std::span<double> v) {
  std::size_t pos = 0;
  for (int a = 0; a < m.size(); ++a)
    for (int b = 0; b <= a; ++b, ++pos) v[pos] = a == b ? m(a, b) : kSqrt2 * m(a, b);
}

// Daleckii-Krein derivative of A -> U max(L, 0) U^T applied to a symmetric direction.
SymMatrix clip_derivative(const SymEigen& eig, const SymMatrix& dir) {
  const int n = eig.n;
  auto slope = [](double l) { return l > 0.0 ? 1.0 : 0.0; };
  std::vector<double> m(static_cast<std::size_t>(n * n), 0.0);
  // m = U^T dir U, then scaled by the divided differences
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) acc += eig.vector(a, i) * dir(a, b) * eig.vector(b, j);
      const double li = eig.values[static_cast<std::size_t>(i)];
      const double lj = eig.values[static_cast<std::size_t>(j)];
      double g;
      const double gap = li - lj;
      if (std::abs(gap) > 1e-14 * (1.0 + std::abs(li) + std::abs(lj)))
        g = (std::max(li, 0.0) - std::max(lj, 0.0)) / gap;
      else
        g = slope(0.5 * (li + lj));
      m[static_cast<std::size_t>(i * n + j)] = g * acc;
    }
  SymMatrix out(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b <= a; ++b) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          acc += eig.vector(a, i) * m[static_cast<std::size_t>(i * n + j)] * eig.vector(b, j);
      out(a, b) = acc;
    }
  return out;
}

template <typename Fn, typename Deriv>
Var elementwise(Tape& t, Var a, Fn fn, Deriv deriv) {
  const auto x = t.value(a);
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), fn);
  const std::size_t ia = a.id;
  const Var inputs[] = {a};
  return t.record(std::move(y), inputs, [ia, deriv](Tape& tape, std::size_t self) {
    const auto g = tape.grad_of(self);
    const auto x = tape.value_of(ia);
    const auto y = tape.value_of(self);
    auto ga = tape.grad_mut(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * deriv(x[k], y[k]);
  });
}

}  // namespace

Var Tape::leaf(std::vector<double> value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
  has_gradients_ = false;
  return Var{nodes_.size() - 1};
}

Var Tape::record(std::vector<double> value, std::span<const Var> inputs, Backward vjp) {
  bool needs = false;
  for (const auto v : inputs) needs = needs || node(v).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(vjp) : nullptr, needs});
  has_gradients_ = false;
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::logic_error("variable does not belong to this tape");
  return nodes_[v.id];
}

std::span<const double> Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const auto& n = node(v);
  if (n.value.size() != 1) throw std::invalid_argument("variable is not a scalar");
  return n.value[0];
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

void Tape::backward(Var output, std::span<const double> seed) {
  const auto& out = node(output);
  if (seed.size() != out.value.size())
    throw std::invalid_argument("seed size does not match output size");
  for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  has_gradients_ = true;
  if (!out.requires_grad) return;
  std::copy(seed.begin(), seed.end(), nodes_[output.id].grad.begin());
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const auto& n = nodes_[i];
    if (!n.vjp) continue;
    if (std::all_of(n.grad.begin(), n.grad.end(), [](double g) { return g == 0.0; })) continue;
    n.vjp(*this, i);
  }
}

void Tape::backward(Var scalar_output) {
  const double one[] = {1.0};
  backward(scalar_output, one);
}

std::span<const double> Tape::grad(Var v) const {
  const auto& n = node(v);
  if (!has_gradients_) throw std::logic_error("gradient requested before backward()");
  return n.grad;
}

Var add(Tape& t, Var a, Var b) {
  check_same_size(t, a, b);
  const auto x = t.value(a);
  const auto y = t.value(b);
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + y[k];
  const Var inputs[] = {a, b};
  return t.record(std::move(out), inputs, [ia = a.id, ib = b.id](Tape& tape, std::size_t self) {
    const auto g = tape.grad_of(self);
    for (const auto id : {ia, ib}) {
      if (!tape.needs_grad(id)) continue;
      auto gi = tape.grad_mut(id);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
    }
  });
}

Var sub(Tape& t, Var a, Var b) { return add(t, a, scale(t, b, -1.0)); }

Var mul(Tape& t, Var a, Var b) {
  check_same_size(t, a, b);
  const auto x = t.value(a);
  const auto y = t.value(b);
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * y[k];
  const Var inputs[] = {a, b};
  return t.record(std::move(out), inputs, [ia = a.id, ib = b.id](Tape& tape, std::size_t self) {
    const auto g = tape.grad_of(self);
    if (tape.needs_grad(ia)) {
      auto ga = tape.grad_mut(ia);
      const auto y = tape.value_of(ib);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * y[k];
    }
    if (tape.needs_grad(ib)) {
      auto gb = tape.grad_mut(ib);
      const auto x = tape.value_of(ia);
      for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * x[k];
    }
  });
}

Var scale(Tape& t, Var a, double c) {
  return elementwise(t, a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var sum(Tape& t, Var a) {
  const auto x = t.value(a);
  double s = 0.0;
  for (double v : x) s += v;
  const Var inputs[] = {a};
  return t.record({s}, inputs, [ia = a.id](Tape& tape, std::size_t self) {
    const double g = tape.grad_of(self)[0];
    for (auto& v : tape.grad_mut(ia)) v += g;
  });
}

Var tanh(Tape& t, Var a) {
  return elementwise(t, a, [](double x) { return std::tanh(x); },
                     [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Tape& t, Var a) {
  return elementwise(
      t, a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Var exp(Tape& t, Var a) {
  return elementwise(t, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var affine(Tape& t, Var w, Var x, Var b, std::size_t rows, std::size_t cols) {
  const auto wv = t.value(w);
  const auto xv = t.value(x);
  const auto bv = t.value(b);
  if (wv.size() != rows * cols || xv.size() != cols || bv.size() != rows)
    throw std::invalid_argument("affine: shape mismatch");
  std::vector<double> y(bv.begin(), bv.end());
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wv[r * cols + c] * xv[c];
    y[r] += acc;
  }
  const Var inputs[] = {w, x, b};
  return t.record(std::move(y), inputs,
                  [iw = w.id, ix = x.id, ib = b.id, rows, cols](Tape& tape, std::size_t self) {
                    const auto g = tape.grad_of(self);
                    if (tape.needs_grad(iw)) {
                      auto gw = tape.grad_mut(iw);
                      const auto xv = tape.value_of(ix);
                      for (std::size_t r = 0; r < rows; ++r) {
                        if (g[r] == 0.0) continue;
                        for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g[r] * xv[c];
                      }
                    }
                    if (tape.needs_grad(ix)) {
                      auto gx = tape.grad_mut(ix);
                      const auto wv = tape.value_of(iw);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) gx[c] += wv[r * cols + c] * g[r];
                    }
                    if (tape.needs_grad(ib)) {
                      auto gb = tape.grad_mut(ib);
                      for (std::size_t r = 0; r < rows; ++r) gb[r] += g[r];
                    }
                  });
}

Var concat(Tape& t, std::span<const Var> parts) {
  std::vector<double> out;
  std::vector<std::size_t> ids;
  for (const auto p : parts) {
    const auto v = t.value(p);
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id);
  }
  return t.record(std::move(out), parts, [ids](Tape& tape, std::size_t self) {
    const auto g = tape.grad_of(self);
    std::size_t pos = 0;
    for (const auto id : ids) {
      const std::size_t n = tape.value_of(id).size();
      if (tape.needs_grad(id)) {
        auto gi = tape.grad_mut(id);
        for (std::size_t k = 0; k < n; ++k) gi[k] += g[pos + k];
      }
      pos += n;
    }
  });
}

std::vector<double> frame_block(const PsdShape& shape, const OutputFrame& f) {
  const std::size_t block = shape.block_size();
  std::vector<double> tm(block * block, 0.0);
  std::size_t off = 0;
  for (int which = 0; which < 2; ++which) {
    const int n = which == 0 ? shape.n1 : shape.n2;
    const double gain = which == 0 ? f.gain1 : f.gain2;
    // [u] = B [t]: u^a = sum_b binom(a, b) (-c)^(a-b) t^b / w^a
    std::vector<double> bm(static_cast<std::size_t>(n * n), 0.0);
    for (int a = 0; a < n; ++a) {
      double binom = 1.0;
      for (int b = 0; b <= a; ++b) {
        bm[static_cast<std::size_t>(a * n + b)] =
            binom * std::pow(-f.center, a - b) / std::pow(f.half_width, a);
        binom = binom * (a - b) / (b + 1);
      }
    }
    auto B = [&](int a, int b) { return bm[static_cast<std::size_t>(a * n + b)]; };
    // column (a, b) of the svec map: the image of the unit svec entry at (a, b)
    std::size_t col = off;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b <= a; ++b, ++col) {
        const double s_ab = a == b ? 1.0 : 1.0 / kSqrt2;
        std::size_t row = off;
        for (int p = 0; p < n; ++p)
          for (int q = 0; q <= p; ++q, ++row) {
            double qpq = B(a, p) * B(b, q);
            if (a != b) qpq += B(b, p) * B(a, q);
            tm[row * block + col] = gain * s_ab * qpq * (p == q ? 1.0 : kSqrt2);
          }
      }
    off += static_cast<std::size_t>(n * (n + 1) / 2);
  }
  return tm;
}

BlockCoordinates frame_coordinates(const PsdShape& shape, std::span<const OutputFrame> frames) {
  if (frames.size() != static_cast<std::size_t>(shape.intervals))
    throw std::invalid_argument("need one frame per interval");
  BlockCoordinates out;
  for (const auto& f : frames) out.push_back(frame_block(shape, f));
  return out;
}

Var symmetric_pack(Tape& t, Var dense, const PsdShape& shape) {
  const std::size_t per_interval =
      static_cast<std::size_t>(shape.n1 * shape.n1 + shape.n2 * shape.n2);
  if (t.size(dense) != per_interval * static_cast<std::size_t>(shape.intervals))
    throw std::invalid_argument("symmetric_pack: wrong input size");
  struct Term {
    std::size_t out, in;
    double w;
  };
  std::vector<Term> terms;
  std::size_t out_pos = 0;
  for (int i = 0; i < shape.intervals; ++i) {
    std::size_t base = static_cast<std::size_t>(i) * per_interval;
    for (const int n : {shape.n1, shape.n2}) {
      for (int p = 0; p < n; ++p)
        for (int q = 0; q <= p; ++q, ++out_pos) {
          const auto pq = base + static_cast<std::size_t>(p * n + q);
          const auto qp = base + static_cast<std::size_t>(q * n + p);
          if (p == q) {
            terms.push_back({out_pos, pq, 1.0});
          } else {
            terms.push_back({out_pos, pq, kSqrt2 / 2.0});
            terms.push_back({out_pos, qp, kSqrt2 / 2.0});
          }
        }
      base += static_cast<std::size_t>(n * n);
    }
  }
  const auto x = t.value(dense);
  std::vector<double> out(shape.size(), 0.0);
  for (const auto& term : terms) out[term.out] += term.w * x[term.in];
  const Var inputs[] = {dense};
  return t.record(std::move(out), inputs,
                  [id = dense.id, terms = std::move(terms)](Tape& tape, std::size_t self) {
                    const auto g = tape.grad_of(self);
                    auto gx = tape.grad_mut(id);
                    for (const auto& term : terms) gx[term.in] += term.w * g[term.out];
                  });
}

Var block_linear(Tape& t, Var flat, const BlockCoordinates& blocks) {
  const auto x = t.value(flat);
  if (blocks.empty()) throw std::invalid_argument("block_linear: no blocks");
  const std::size_t nb = blocks.size();
  const std::size_t block = x.size() / nb;
  if (block * nb != x.size()) throw std::invalid_argument("block_linear: wrong input size");
  for (const auto& tm : blocks)
    if (tm.size() != block * block) throw std::invalid_argument("block_linear: wrong block size");
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t r = 0; r < block; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < block; ++c) acc += blocks[i][r * block + c] * x[i * block + c];
      out[i * block + r] = acc;
    }
  const Var inputs[] = {flat};
  return t.record(std::move(out), inputs, [id = flat.id, blocks, block](Tape& tape, std::size_t self) {
    const auto g = tape.grad_of(self);
    auto gx = tape.grad_mut(id);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      for (std::size_t r = 0; r < block; ++r) {
        const double gr = g[i * block + r];
        if (gr == 0.0) continue;
        for (std::size_t c = 0; c < block; ++c) gx[i * block + c] += blocks[i][r * block + c] * gr;
      }
  });
}

Var psd_project(Tape& t, Var flat, const PsdShape& shape) {
  if (t.size(flat) != shape.size()) throw std::invalid_argument("psd_project: wrong input size");
  auto eigs = std::make_shared<std::vector<SymEigen>>();
  const auto x = t.value(flat);
  std::vector<double> out(x.begin(), x.end());
  const std::size_t block = shape.block_size();
  for (int i = 0; i < shape.intervals; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * block;
    std::size_t off = 0;
    for (const int n : {shape.n1, shape.n2}) {
      const std::size_t len = static_cast<std::size_t>(n * (n + 1) / 2);
      if (n > 0) {
        auto seg = std::span<double>(out).subspan(base + off, len);
        auto eig = sym_eigen(unpack(seg, n));
        std::vector<double> clipped(eig.values);
        for (auto& v : clipped) v = std::max(v, 0.0);
        pack_set(compose(eig, clipped), seg);
        eigs->push_back(std::move(eig));
      }
      off += len;
    }
  }
  const Var inputs[] = {flat};
  return t.record(std::move(out), inputs, [id = flat.id, eigs, shape](Tape& tape, std::size_t self) {
    const auto g = tape.grad_of(self);
    auto gx = tape.grad_mut(id);
    const std::size_t block = shape.block_size();
    std::size_t e = 0;
    for (int i = 0; i < shape.intervals; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * block;
      std::size_t off = 0;
      for (const int n : {shape.n1, shape.n2}) {
        const std::size_t len = static_cast<std::size_t>(n * (n + 1) / 2);
        if (n > 0) {
          const auto d = clip_derivative((*eigs)[e++], unpack(g.subspan(base + off, len), n));
          pack_add(d, gx.subspan(base + off, len));
        }
        off += len;
      }
    }
  });
}

Var smooth_project(Tape& t, Var flat, const ConstraintMap& map) {
  const auto x = t.value(flat);
  std::vector<double> out(x.begin(), x.end());
  project_smooth_inplace(out, map);
  const Var inputs[] = {flat};
  return t.record(std::move(out), inputs, [id = flat.id, &map](Tape& tape, std::size_t self) {
    const auto g = tape.grad_of(self);
    std::vector<double> pg(g.begin(), g.end());
    project_smooth_inplace(pg, map);
    auto gx = tape.grad_mut(id);
    for (std::size_t k = 0; k < pg.size(); ++k) gx[k] += pg[k];
  });
}

Var stacked_project(Tape& t, Var flat, const StackedConstraintMap& map) {
  const auto x = t.value(flat);
  std::vector<double> out(x.begin(), x.end());
  project_stacked_inplace(out, map);
  const Var inputs[] = {flat};
  return t.record(std::move(out), inputs, [id = flat.id, &map](Tape& tape, std::size_t self) {
    const auto g = tape.grad_of(self);
    std::vector<double> pg(g.begin(), g.end());
    project_stacked_inplace(pg, map);
    auto gx = tape.grad_mut(id);
    for (std::size_t k = 0; k < pg.size(); ++k) gx[k] += pg[k];
  });
}

Var alternating_projections(Tape& t, Var flat, const Projector& projector, int cycles,
                            CycleKind kind) {
  if (cycles < 1) throw std::invalid_argument("alternating projections need at least one cycle");
  Var x = flat;
  for (int c = 0; c < cycles; ++c) {
    if (kind == CycleKind::per_order) {
      for (const auto& map : projector.maps()) x = smooth_project(t, x, map);
    } else {
      x = stacked_project(t, x, projector.stacked());
    }
    x = psd_project(t, x, projector.shape());
  }
  return x;
}

Var spline_loglik(Tape& t, Var flat, std::span<const double> events, const CoefficientMap& map,
                  std::span<const double> knots) {
  const auto& shape = map.shape();
  if (t.size(flat) != shape.size()) throw std::invalid_argument("spline_loglik: wrong input size");
  if (knots.size() != static_cast<std::size_t>(shape.intervals) + 1)
    throw std::invalid_argument("spline_loglik: knots do not match");
  validate_events(events, knots.front(), knots.back());
  const auto x = t.value(flat);
  const std::size_t block = shape.block_size();
  const std::size_t ncoef = static_cast<std::size_t>(shape.degree + 1);
  std::vector<double> coeffs(ncoef * static_cast<std::size_t>(shape.intervals));
  for (int i = 0; i < shape.intervals; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    map.apply(i, x.subspan(ui * block, block), std::span<double>(coeffs).subspan(ui * ncoef, ncoef));
  }
  // d value / d coefficients, accumulated alongside the value
  std::vector<double> dcoef(coeffs.size(), 0.0);
  double value = 0.0;
  for (int i = 0; i < shape.intervals; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double lo = knots[ui], hi = knots[ui + 1];
    double plo = lo, phi = hi;
    for (std::size_t n = 0; n < ncoef; ++n) {
      const double w = (phi - plo) / static_cast<double>(n + 1);
      value -= coeffs[ui * ncoef + n] * w;
      dcoef[ui * ncoef + n] -= w;
      plo *= lo;
      phi *= hi;
    }
  }
  for (const double e : events) {
    const auto it = std::upper_bound(knots.begin(), knots.end(), e);
    const auto ui = static_cast<std::size_t>(it - knots.begin() - 1);
    const auto c = std::span<const double>(coeffs).subspan(ui * ncoef, ncoef);
    const double g = horner(c, e);
    if (g > kIntensityFloor) {
      value += std::log(g);
      double p = 1.0 / g;
      for (std::size_t n = 0; n < ncoef; ++n) {
        dcoef[ui * ncoef + n] += p;
        p *= e;
      }
    } else {
      value += std::log(kIntensityFloor);
    }
  }
  const Var inputs[] = {flat};
  return t.record({value}, inputs,
                  [id = flat.id, &map, dcoef = std::move(dcoef), block, ncoef](Tape& tape,
                                                                              std::size_t self) {
                    const double g = tape.grad_of(self)[0];
                    auto gx = tape.grad_mut(id);
                    std::vector<double> scaled(ncoef);
                    const int intervals = map.shape().intervals;
                    for (int i = 0; i < intervals; ++i) {
                      const auto ui = static_cast<std::size_t>(i);
                      for (std::size_t n = 0; n < ncoef; ++n) scaled[n] = g * dcoef[ui * ncoef + n];
                      map.apply_transpose_add(i, scaled, gx.subspan(ui * block, block));
                    }
                  });
}

Var kl_diag_gaussian(Tape& t, Var mu, Var log_std) {
  check_same_size(t, mu, log_std);
  const auto m = t.value(mu);
  const auto l = t.value(log_std);
  double kl = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k)
    kl += 0.5 * (m[k] * m[k] + std::exp(2.0 * l[k]) - 1.0 - 2.0 * l[k]);
  const Var inputs[] = {mu, log_std};
  return t.record({kl}, inputs, [im = mu.id, il = log_std.id](Tape& tape, std::size_t self) {
    const double g = tape.grad_of(self)[0];
    const auto m = tape.value_of(im);
    const auto l = tape.value_of(il);
    if (tape.needs_grad(im)) {
      auto gm = tape.grad_mut(im);
      for (std::size_t k = 0; k < m.size(); ++k) gm[k] += g * m[k];
    }
    if (tape.needs_grad(il)) {
      auto gl = tape.grad_mut(il);
      for (std::size_t k = 0; k < l.size(); ++k) gl[k] += g * (std::exp(2.0 * l[k]) - 1.0);
    }
  });
}

GradCheckReport grad_check(const TapeFunction& f, std::span<const double> point, double eps) {
  GradCheckReport report;
  std::vector<double> weights;
  {
    Tape tape;
    const Var x = tape.leaf({point.begin(), point.end()});
    const Var y = f(tape, x);
    const std::size_t m = tape.size(y);
    if (m == 1) {
      weights = {1.0};
    } else {
      Rng rng(0x5eed);
      for (std::size_t k = 0; k < m; ++k) weights.push_back(rng.normal());
    }
    tape.backward(y, weights);
    const auto g = tape.grad(x);
    report.analytic.assign(g.begin(), g.end());
  }
  auto objective = [&](std::span<const double> p) {
    Tape tape;
    const Var x = tape.leaf({p.begin(), p.end()});
    const auto y = tape.value(f(tape, x));
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) s += weights[k] * y[k];
    return s;
  };
  std::vector<double> p(point.begin(), point.end());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + eps;
    const double up = objective(p);
    p[i] = orig - eps;
    const double down = objective(p);
    p[i] = orig;
    report.numeric.push_back((up - down) / (2.0 * eps));
  }
  double scale = 1.0;
  for (double v : report.numeric) scale = std::max(scale, std::abs(v));
  const double floor = 1e-6 * scale;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = report.analytic[i];
    const double n = report.numeric[i];
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    report.rel_error.push_back(err);
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  return report;
}

}  // namespace drs::ad
