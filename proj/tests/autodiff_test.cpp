#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "drs/autodiff.hpp"
#include "drs/point_process.hpp"
#include "oracles.hpp"

using namespace drs;
using ad::Tape;
using ad::Var;

namespace {

const SplineConfig kCubic = SplineConfig::uniform(0, 10, 10, 3, 2);

std::vector<double> normals(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

// Smallest |eigenvalue| met by any PSD step along `cycles` stacked cycles.
double closest_kink(std::vector<double> x, const Projector& proj, int cycles) {
  const auto shape = proj.shape();
  double closest = 1e300;
  for (int c = 0; c < cycles; ++c) {
    project_stacked_inplace(x, proj.stacked());
    const auto psi = from_svec(x, proj.config());
    for (const auto* set : {&psi.q1, &psi.q2})
      for (const auto& m : *set)
        for (double e : sym_eigen(m).values) closest = std::min(closest, std::abs(e));
    project_psd_inplace(x, shape);
  }
  return closest;
}

// Independent central differences of a scalar function.
std::vector<double> central(const std::function<double(const std::vector<double>&)>& f,
                            std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double o = x[i];
    x[i] = o + h;
    const double up = f(x);
    x[i] = o - h;
    const double dn = f(x);
    x[i] = o;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 1.0;
  for (double v : b) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  return worst;
}

}  // namespace

TEST_CASE("forward values") {
  Tape t;
  const Var x = t.leaf({1.0, -2.0, 3.0});
  CHECK(std::vector<double>(t.value(x).begin(), t.value(x).end()) == std::vector<double>{1.0, -2.0, 3.0});

  const Var w = t.constant({1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Var b = t.constant({0, 0, 0});
  const Var y = ad::affine(t, w, x, b, 3, 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(t.value(y)[k] == t.value(x)[k]);

  CHECK_THROWS_AS(ad::add(t, x, t.constant({1.0})), std::invalid_argument);
  CHECK_THROWS_AS(ad::affine(t, w, x, b, 2, 3), std::invalid_argument);
}

TEST_CASE("a small MLP matches a hand-written evaluation") {
  Rng rng(301);
  const auto w1 = normals(4 * 3, rng), b1 = normals(4, rng), w2 = normals(2 * 4, rng), b2 = normals(2, rng);
  const auto x = normals(3, rng);
  Tape t;
  const Var h = ad::tanh(t, ad::affine(t, t.leaf(w1), t.leaf(x), t.leaf(b1), 4, 3));
  const Var y = ad::softplus(t, ad::affine(t, t.leaf(w2), h, t.leaf(b2), 2, 4));
  double hand_h[4];
  for (int r = 0; r < 4; ++r) {
    double s = b1[static_cast<std::size_t>(r)];
    for (int c = 0; c < 3; ++c) s += w1[static_cast<std::size_t>(r * 3 + c)] * x[static_cast<std::size_t>(c)];
    hand_h[r] = std::tanh(s);
  }
  for (int r = 0; r < 2; ++r) {
    double s = b2[static_cast<std::size_t>(r)];
    for (int c = 0; c < 4; ++c) s += w2[static_cast<std::size_t>(r * 4 + c)] * hand_h[c];
    CHECK(t.value(y)[static_cast<std::size_t>(r)] == doctest::Approx(std::log1p(std::exp(s))).epsilon(1e-12));
  }
}

TEST_CASE("elementary gradients") {
  Tape t;
  const Var x = t.leaf({0.5, -1.0, 2.0});
  const Var s = ad::sum(t, x);
  CHECK_THROWS_AS(t.grad(x), std::logic_error);
  t.backward(s);
  for (double g : t.grad(x)) CHECK(g == 1.0);

  const auto tanh0 = ad::grad_check([](Tape& tp, Var v) { return ad::tanh(tp, v); }, std::vector<double>{0.0});
  CHECK(tanh0.analytic[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(tanh0.max_rel_error < 1e-8);

  Tape t2;
  const Var neg = t2.leaf({-800.0, -40.0});
  const Var sp = ad::softplus(t2, neg);
  t2.backward(ad::sum(t2, sp));
  for (double g : t2.grad(neg)) {
    CHECK(std::isfinite(g));
    CHECK(g < 1e-15);
  }
  for (double v : t2.value(sp)) CHECK(std::isfinite(v));

  Tape t3;
  const Var a = t3.leaf({1.0});
  CHECK_THROWS_AS(t3.backward(a, std::vector<double>{1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(t3.value(Var{}), std::logic_error);
}

TEST_CASE("every elementwise primitive passes a gradient check") {
  Rng rng(307);
  const auto p = normals(6, rng);
  const std::vector<ad::TapeFunction> fns{
      [](Tape& t, Var v) { return ad::tanh(t, v); },
      [](Tape& t, Var v) { return ad::softplus(t, v); },
      [](Tape& t, Var v) { return ad::exp(t, v); },
      [](Tape& t, Var v) { return ad::scale(t, v, -2.5); },
      [](Tape& t, Var v) { return ad::sum(t, ad::mul(t, v, v)); },
      [](Tape& t, Var v) { return ad::sub(t, ad::add(t, v, ad::tanh(t, v)), ad::exp(t, v)); },
      [](Tape& t, Var v) {
        const Var parts[] = {v, ad::tanh(t, v)};
        return ad::concat(t, parts);
      },
      [](Tape& t, Var v) { return ad::affine(t, v, t.constant({0.3, -0.2, 1.0}), t.constant({1.0, 2.0}), 2, 3); },
      [](Tape& t, Var v) {
        const Var mu = t.constant({0.1, -0.4, 0.2, 1.0, 0.0, -1.0});
        return ad::kl_diag_gaussian(t, mu, v);
      },
  };
  for (const auto& f : fns) CHECK(ad::grad_check(f, p).max_rel_error < 1e-4);
}

TEST_CASE("backward is linear and constants carry no gradient") {
  Rng rng(311);
  const auto p = normals(5, rng);
  auto grad_of = [&](double alpha) {
    Tape t;
    const Var x = t.leaf(p);
    const Var y = ad::scale(t, ad::sum(t, ad::tanh(t, ad::mul(t, x, x))), alpha);
    t.backward(y);
    return std::vector<double>(t.grad(x).begin(), t.grad(x).end());
  };
  const auto g1 = grad_of(1.0), g3 = grad_of(3.0);
  for (std::size_t k = 0; k < g1.size(); ++k) CHECK(g3[k] == doctest::Approx(3.0 * g1[k]).epsilon(1e-14));

  Tape t;
  const Var x = t.leaf(p);
  const Var c = ad::sum(t, ad::scale(t, x, 0.0));
  t.backward(c);
  for (double g : t.grad(x)) CHECK(g == 0.0);
}

TEST_CASE("PSD projection VJP at a well-separated spectrum") {
  Rng rng(313);
  // 2x2 blocks use the closed form, 3x3 blocks the Jacobi iteration
  for (const auto& cfg : {kCubic, SplineConfig::uniform(0, 1, 1, 5, 2)}) {
    const auto shape = psd_shape(cfg);
    int tested = 0;
    for (int attempt = 0; attempt < 100 && tested < 5; ++attempt) {
      const auto x = to_svec(oracle::random_psi(cfg, rng, false));
      const auto psi = from_svec(x, cfg);
      bool separated = true;
      for (const auto* set : {&psi.q1, &psi.q2})
        for (const auto& m : *set) {
          const auto e = sym_eigen(m).values;
          for (std::size_t k = 0; k + 1 < e.size(); ++k) separated &= e[k + 1] - e[k] > 1e-2;
          for (double v : e) separated &= std::abs(v) > 1e-2;
        }
      if (!separated) continue;
      ++tested;
      CHECK(ad::grad_check([&shape](Tape& t, Var v) { return ad::psd_project(t, v, shape); }, x).max_rel_error < 1e-5);
    }
    CHECK(tested == 5);
  }
}

TEST_CASE("smoothing VJPs reuse the projection") {
  Rng rng(317);
  const Projector proj(kCubic);
  const auto x = normals(psd_shape(kCubic).size(), rng);
  for (const auto& m : proj.maps())
    CHECK(ad::grad_check([&m](Tape& t, Var v) { return ad::smooth_project(t, v, m); }, x).max_rel_error < 1e-6);
  CHECK(ad::grad_check([&proj](Tape& t, Var v) { return ad::stacked_project(t, v, proj.stacked()); }, x)
            .max_rel_error < 1e-6);
}

TEST_CASE("spline log-likelihood gradient") {
  Rng rng(331);
  const CoefficientMap cm(kCubic);
  for (int rep = 0; rep < 10; ++rep) {
    const auto x = to_svec(oracle::random_psi(kCubic, rng, true, 0.1));
    std::vector<double> events;
    for (int k = 0; k < 25; ++k) events.push_back(10.0 * rng.uniform());
    std::sort(events.begin(), events.end());
    auto f = [&](Tape& t, Var v) { return ad::spline_loglik(t, v, events, cm, kCubic.knots); };
    Tape t;
    const Var v = t.leaf(x);
    const Var ll = f(t, v);
    CHECK(t.scalar(ll) == doctest::Approx(log_likelihood(events, psd_pair_to_coeffs(from_svec(x, kCubic), kCubic))).epsilon(1e-12));
    t.backward(ll);
    const std::vector<double> analytic(t.grad(v).begin(), t.grad(v).end());
    const auto numeric = central(
        [&](const std::vector<double>& p) {
          return log_likelihood(events, psd_pair_to_coeffs(from_svec(p, kCubic), kCubic));
        },
        x, 1e-5);
    CHECK(rel_err(analytic, numeric) <= 1e-4);
  }
}

TEST_CASE("gradient through unrolled alternating projections") {
  Rng rng(337);
  const Projector proj(kCubic);
  const CoefficientMap cm(kCubic);
  std::vector<double> events;
  for (int k = 0; k < 20; ++k) events.push_back(10.0 * rng.uniform());
  std::sort(events.begin(), events.end());
  int tested = 0;
  for (int attempt = 0; attempt < 200 && tested < 5; ++attempt) {
    const auto x = normals(psd_shape(kCubic).size(), rng, 0.3);
    if (closest_kink(x, proj, 5) < 1e-4) continue;
    ++tested;
    for (auto kind : {CycleKind::stacked, CycleKind::per_order}) {
      auto f = [&](Tape& t, Var v) {
        return ad::spline_loglik(t, ad::alternating_projections(t, v, proj, 5, kind), events, cm, kCubic.knots);
      };
      Tape t;
      const Var v = t.leaf(x);
      t.backward(f(t, v));
      const std::vector<double> analytic(t.grad(v).begin(), t.grad(v).end());
      const auto numeric = central(
          [&](const std::vector<double>& p) {
            auto q = p;
            proj.alternate_inplace(q, 5, kind);
            return log_likelihood(events, psd_pair_to_coeffs(from_svec(q, kCubic), kCubic));
          },
          x, 1e-6);
      CHECK(rel_err(analytic, numeric) <= 1e-3);
    }
  }
  CHECK(tested == 5);
}

TEST_CASE("symmetric packing and local frames") {
  Rng rng(347);
  const auto shape = psd_shape(kCubic);
  const auto dense = normals(static_cast<std::size_t>(10 * (4 + 4)), rng);
  CHECK(ad::grad_check([&shape](Tape& t, Var v) { return ad::symmetric_pack(t, v, shape); }, dense).max_rel_error < 1e-6);

  // the frame map sends S to gain * B^T S B, so the local polynomial is preserved
  const ad::OutputFrame f{7.5, 0.5, 2.0, 3.0};
  const auto tm = ad::frame_block(shape, f);
  const std::size_t block = shape.block_size();
  const auto sigma = normals(block, rng);
  std::vector<double> psi(block, 0.0);
  for (std::size_t r = 0; r < block; ++r)
    for (std::size_t c = 0; c < block; ++c) psi[r] += tm[r * block + c] * sigma[c];
  const auto single = SplineConfig::uniform(7.0, 8.0, 1, 3, 2);
  const auto s = from_svec(sigma, single);
  const auto q = from_svec(psi, single);
  for (double t : {7.0, 7.2, 7.9}) {
    const double u = (t - f.center) / f.half_width;
    auto quad = [](const SymMatrix& m, double x) {
      double v = 0.0;
      for (int a = 0; a < m.size(); ++a)
        for (int b = 0; b < m.size(); ++b) v += std::pow(x, a) * m(a, b) * std::pow(x, b);
      return v;
    };
    CHECK(quad(q.q1[0], t) == doctest::Approx(f.gain1 * quad(s.q1[0], u)).epsilon(1e-12));
    CHECK(quad(q.q2[0], t) == doctest::Approx(f.gain2 * quad(s.q2[0], u)).epsilon(1e-12));
  }
  const BlockCoordinates blocks(10, tm);
  CHECK(ad::grad_check([&blocks](Tape& t, Var v) { return ad::block_linear(t, v, blocks); },
                       normals(shape.size(), rng))
            .max_rel_error < 1e-6);
}

TEST_CASE("KL against Monte Carlo") {
  Tape t;
  const Var z = ad::kl_diag_gaussian(t, t.constant({0.0, 0.0}), t.constant({0.0, 0.0}));
  CHECK(t.scalar(z) == 0.0);
  const Var h = ad::kl_diag_gaussian(t, t.constant({1.0, 0.0}), t.constant({0.0, 0.0}));
  CHECK(t.scalar(h) == doctest::Approx(0.5));

  const std::vector<double> mu{0.4, -1.1}, ls{-0.3, 0.5};
  const Var kl = ad::kl_diag_gaussian(t, t.constant(mu), t.constant(ls));
  Rng rng(349);
  const int n = 1000000;
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < n; ++k) {
    double logq = 0.0, logp = 0.0;
    for (std::size_t d = 0; d < 2; ++d) {
      const double e = rng.normal();
      const double x = mu[d] + std::exp(ls[d]) * e;
      logq += -0.5 * e * e - ls[d];
      logp += -0.5 * x * x;
    }
    sum += logq - logp;
    sum2 += (logq - logp) * (logq - logp);
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - t.scalar(kl)) <= 3.0 * se);
}
