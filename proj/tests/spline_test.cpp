#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "drs/constraints.hpp"
#include "drs/spline.hpp"
#include "oracles.hpp"

using namespace drs;

namespace {

SymMatrix unit00(int n) {
  SymMatrix m(n);
  m(0, 0) = 1.0;
  return m;
}

double piece_value(const PiecewisePoly& p, int i, double t) {
  return horner(p.coeffs[static_cast<std::size_t>(i)], t);
}

}  // namespace

TEST_CASE("telescoping constant and the identity on one cubic piece") {
  const auto cfg = SplineConfig::uniform(0.0, 1.0, 1, 3, 2);
  auto psi = PsdPairParams::zeros(cfg);
  psi.q1[0] = unit00(2);
  psi.q2[0] = unit00(2);
  auto c = psd_pair_to_coeffs(psi, cfg).coeffs[0];
  CHECK(c == std::vector<double>{1.0, 0.0, 0.0, 0.0});

  psi.q1[0] = SymMatrix(2);
  c = psd_pair_to_coeffs(psi, cfg).coeffs[0];
  CHECK(c == std::vector<double>{0.0, 1.0, 0.0, 0.0});
}

TEST_CASE("expanded coefficients agree with the unexpanded quadratic forms") {
  Rng rng(11);
  for (int degree : {1, 2, 3, 4, 5}) {
    CAPTURE(degree);
    const auto cfg = SplineConfig::uniform(0.0, 10.0, 10, degree, degree - 1);
    for (int rep = 0; rep < 5; ++rep) {
      const auto psi = oracle::random_psi(cfg, rng, true);
      const auto poly = psd_pair_to_coeffs(psi, cfg);
      for (int k = 0; k < 100; ++k) {
        const double t = 10.0 * k / 100.0;
        const int i = poly.piece_of(t);
        const double want = oracle::direct_psd_pair(psi, cfg, i, t);
        CHECK(std::abs(eval(poly, t) - want) <= 1e-12 * std::max(1.0, std::abs(want)));
      }
    }
  }
}

TEST_CASE("mismatched parameters are rejected") {
  const auto cfg = SplineConfig::uniform(0.0, 10.0, 10, 3, 2);
  const auto other = SplineConfig::uniform(0.0, 10.0, 5, 3, 2);
  CHECK_THROWS_AS(psd_pair_to_coeffs(PsdPairParams::zeros(other), cfg), std::invalid_argument);
  const auto even = SplineConfig::uniform(0.0, 10.0, 10, 4, 2);
  CHECK_THROWS_AS(psd_pair_to_coeffs(PsdPairParams::zeros(even), cfg), std::invalid_argument);
  CHECK_THROWS_AS(from_svec(std::vector<double>(3, 0.0), cfg), std::invalid_argument);
}

TEST_CASE("config validation") {
  SplineConfig bad;
  bad.knots = {0.0, 1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.knots = {0.0, 1.0};
  bad.degree = 3;
  bad.smoothness = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.smoothness = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.smoothness = 0;
  bad.degree = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("evaluation and the half-open convention") {
  const auto one = to_spline(PsdPairParams::constant(SplineConfig::uniform(0, 10, 10, 3, 2), 1.0),
                             SplineConfig::uniform(0, 10, 10, 3, 2));
  CHECK(eval(one, 5.0) == doctest::Approx(1.0).epsilon(1e-14));

  PiecewisePoly lin{{0.0, 1.0}, 1, {{0.0, 1.0}}};
  CHECK(eval(lin, 0.25) == 0.25);
  CHECK_THROWS_AS(eval(lin, 1.0), std::out_of_range);
  CHECK_THROWS_AS(eval(lin, -0.1), std::out_of_range);
  CHECK(eval_closed(lin, 1.0) == 1.0);

  // a step at t = 1: the knot belongs to the right piece
  PiecewisePoly step{{0.0, 1.0, 2.0}, 0, {{0.0}, {1.0}}};
  CHECK(eval(step, 1.0) == 1.0);
  CHECK(eval(step, std::nextafter(1.0, 0.0)) == 0.0);
  CHECK(step.piece_of(1.0) == 1);
}

TEST_CASE("integrals") {
  const auto cfg = SplineConfig::uniform(0, 10, 10, 3, 2);
  const auto one = to_spline(PsdPairParams::constant(cfg, 1.0), cfg);
  CHECK(integrate(one, 0.0, 10.0) == doctest::Approx(10.0).epsilon(1e-13));
  PiecewisePoly lin{{0.0, 1.0}, 1, {{0.0, 1.0}}};
  CHECK(integrate(lin, 0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(integrate(lin, 0.6, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(integrate(lin, -1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(integrate(lin, 0.0, 1.5), std::invalid_argument);
}

TEST_CASE("exact integral against composite Simpson") {
  Rng rng(3);
  const auto cfg = SplineConfig::uniform(0, 10, 10, 3, 2);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto poly = psd_pair_to_coeffs(oracle::random_psi(cfg, rng, rep % 2 == 0), cfg);
    const double simpson = oracle::simpson_pieces(
        [&](int i, double t) { return piece_value(poly, i, t); }, cfg.knots, 10000);
    worst = std::max(worst, std::abs(integrate(poly, 0.0, 10.0) - simpson));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("partial-piece integrals are additive") {
  Rng rng(5);
  const auto cfg = SplineConfig::uniform(-2.0, 3.0, 7, 3, 2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto poly = psd_pair_to_coeffs(oracle::random_psi(cfg, rng, false), cfg);
    double pts[3] = {-2.0 + 5.0 * rng.uniform(), -2.0 + 5.0 * rng.uniform(), -2.0 + 5.0 * rng.uniform()};
    std::sort(pts, pts + 3);
    const double whole = integrate(poly, pts[0], pts[2]);
    const double parts = integrate(poly, pts[0], pts[1]) + integrate(poly, pts[1], pts[2]);
    CHECK(whole == doctest::Approx(parts).epsilon(1e-11).scale(1.0));
  }
}

TEST_CASE("derivatives") {
  PiecewisePoly lin{{0.0, 1.0}, 1, {{0.0, 1.0}}};
  const auto d = derivative(lin);
  CHECK(d.degree == 0);
  CHECK(eval(d, 0.3) == 1.0);
  PiecewisePoly c{{0.0, 1.0}, 0, {{4.0}}};
  CHECK(eval(derivative(c), 0.3) == 0.0);

  Rng rng(7);
  const auto cfg = SplineConfig::uniform(0, 10, 10, 3, 2);
  const auto poly = psd_pair_to_coeffs(oracle::random_psi(cfg, rng, true), cfg);
  const auto running = antiderivative(poly);
  const auto back = derivative(running);
  for (int k = 0; k < 50; ++k) {
    const double t = 10.0 * rng.uniform();
    CHECK(eval(back, t) == doctest::Approx(eval(poly, t)).epsilon(1e-10));
    CHECK(eval(running, t) == doctest::Approx(integrate(poly, 0.0, t)).epsilon(1e-10));
  }
}

TEST_CASE("piece upper bounds") {
  const auto cfg = SplineConfig::uniform(0, 10, 10, 3, 2);
  const auto one = to_spline(PsdPairParams::constant(cfg, 1.0), cfg);
  CHECK(upper_bound(one, 4) == doctest::Approx(1.0).epsilon(1e-13));

  PiecewisePoly parabola{{0.0, 1.0}, 2, {{0.0, 1.0, -1.0}}};
  CHECK(upper_bound(parabola, 0) == doctest::Approx(0.25).epsilon(1e-15));

  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const auto single = SplineConfig::uniform(0.0, 1.0, 1, 3, 2);
    PiecewisePoly cubic{single.knots, 3, {{rng.normal(), rng.normal(), rng.normal(), rng.normal()}}};
    double grid_max = -1e300;
    for (int k = 0; k <= 100000; ++k) grid_max = std::max(grid_max, piece_value(cubic, 0, k / 100000.0));
    const double bound = upper_bound(cubic, 0);
    CHECK(bound >= grid_max - 1e-12);
    CHECK(bound - grid_max <= 1e-9);
  }

  // higher degree: only a certified bound
  PiecewisePoly quintic{{0.0, 1.0}, 5, {{0.1, -1.0, 3.0, 2.0, -5.0, 1.5}}};
  double grid_max = -1e300;
  for (int k = 0; k <= 100000; ++k) grid_max = std::max(grid_max, piece_value(quintic, 0, k / 100000.0));
  CHECK(upper_bound(quintic, 0) >= grid_max);
  CHECK_THROWS_AS(upper_bound(quintic, 1), std::out_of_range);
}

TEST_CASE("smoothness residual") {
  const auto cfg = SplineConfig::uniform(0, 10, 10, 3, 2);
  // equal Q1 = Q2 = Q on every piece gives h [t]'Q[t], the same polynomial everywhere
  Rng rng(13);
  auto psi = PsdPairParams::zeros(cfg);
  const auto q = oracle::random_psd(2, rng);
  for (int i = 0; i < 10; ++i) psi.q1[static_cast<std::size_t>(i)] = psi.q2[static_cast<std::size_t>(i)] = q;
  CHECK(smoothness_residual(psi, cfg).max_abs() <= 1e-11);

  auto step = PsdPairParams::constant(cfg, 1.0);
  step.q1[0] = SymMatrix(2);
  step.q2[0] = SymMatrix(2);
  const auto r = smoothness_residual(step, cfg);
  REQUIRE(r.jumps.size() == 3);
  CHECK(std::abs(r.jumps[0][0]) == doctest::Approx(1.0));
  CHECK(r.jumps[0][1] == doctest::Approx(0.0).scale(1.0));

  for (int rep = 0; rep < 10; ++rep) {
    const auto out = alternating_projections(oracle::random_psi(cfg, rng, false), cfg, 100);
    CHECK(smoothness_residual(out, cfg).max_abs() <= 1e-6);
  }
}

TEST_CASE("PSD parameters give nonnegative polynomials") {
  Rng rng(17);
  for (int degree : {1, 2, 3, 4}) {
    const auto cfg = SplineConfig::uniform(0, 10, 10, degree, 0);
    for (int rep = 0; rep < 20; ++rep) {
      const auto poly = psd_pair_to_coeffs(oracle::random_psi(cfg, rng, true), cfg);
      double lo = 1e300;
      for (int k = 0; k < 2000; ++k) lo = std::min(lo, eval(poly, 10.0 * k / 2000.0));
      CHECK(lo >= -1e-9);
    }
  }
}

TEST_CASE("the coefficient map is linear") {
  Rng rng(19);
  const auto cfg = SplineConfig::uniform(0, 10, 10, 3, 2);
  const auto a = oracle::random_psi(cfg, rng, false);
  const auto b = oracle::random_psi(cfg, rng, false);
  const double alpha = 0.7, beta = -1.9;
  auto va = to_svec(a), vb = to_svec(b), vc = va;
  for (std::size_t k = 0; k < vc.size(); ++k) vc[k] = alpha * va[k] + beta * vb[k];
  const auto ca = psd_pair_to_coeffs(a, cfg), cb = psd_pair_to_coeffs(b, cfg);
  const auto cc = psd_pair_to_coeffs(from_svec(vc, cfg), cfg);
  for (int i = 0; i < 10; ++i)
    for (int n = 0; n <= 3; ++n) {
      const auto ui = static_cast<std::size_t>(i), un = static_cast<std::size_t>(n);
      const double want = alpha * ca.coeffs[ui][un] + beta * cb.coeffs[ui][un];
      CHECK(cc.coeffs[ui][un] == doctest::Approx(want).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("svec round trip preserves the Frobenius norm") {
  Rng rng(23);
  const auto cfg = SplineConfig::uniform(0, 1, 3, 5, 2);
  const auto psi = oracle::random_psi(cfg, rng, false);
  const auto v = to_svec(psi);
  const auto back = from_svec(v, cfg);
  for (std::size_t i = 0; i < psi.q1.size(); ++i)
    for (int a = 0; a < psi.q1[i].size(); ++a)
      for (int b = 0; b <= a; ++b) CHECK(back.q1[i](a, b) == doctest::Approx(psi.q1[i](a, b)).epsilon(1e-15));
  double fro = 0.0;
  for (const auto* set : {&psi.q1, &psi.q2})
    for (const auto& m : *set)
      for (int a = 0; a < m.size(); ++a)
        for (int b = 0; b < m.size(); ++b) fro += m(a, b) * m(a, b);
  double sv = 0.0;
  for (double x : v) sv += x * x;
  CHECK(sv == doctest::Approx(fro).epsilon(1e-13));
}

TEST_CASE("monotone modes integrate a nonnegative derivative") {
  Rng rng(29);
  for (auto mode : {ConstraintMode::monotone_increasing, ConstraintMode::monotone_decreasing}) {
    const auto cfg = SplineConfig::uniform(0, 10, 10, 3, 1, mode);
    const auto shape = psd_shape(cfg);
    CHECK(shape.degree == 2);
    CHECK(shape.orders == 1);
    auto psi = oracle::random_psi(cfg, rng, false);
    psi = alternating_projections(psi, cfg, 200);
    psi.intercept = 2.5;
    const auto f = to_spline(psi, cfg);
    CHECK(eval(f, 0.0) == doctest::Approx(2.5));
    const double sign = mode == ConstraintMode::monotone_increasing ? 1.0 : -1.0;
    double prev = eval(f, 0.0);
    for (int k = 1; k < 2000; ++k) {
      const double v = eval(f, 10.0 * k / 2000.0);
      CHECK(sign * (v - prev) >= -1e-9);
      prev = v;
    }
  }
}

TEST_CASE("constant parameters") {
  const auto cfg = SplineConfig::uniform(0, 4, 4, 2, 1);
  const auto f = to_spline(PsdPairParams::constant(cfg, 3.0), cfg);
  for (double t : {0.0, 1.0, 2.5, 3.99}) CHECK(eval(f, t) == doctest::Approx(3.0).epsilon(1e-14));
  const auto inc = SplineConfig::uniform(0, 4, 4, 3, 1, ConstraintMode::monotone_increasing);
  const auto g = to_spline(PsdPairParams::constant(inc, 3.0), inc);
  CHECK(eval(g, 3.5) == doctest::Approx(3.0));
}
