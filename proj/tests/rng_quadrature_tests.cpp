#include <doctest.h>

#include <cmath>
#include <vector>

#include "cltlab/quadrature.hpp"
#include "cltlab/rng.hpp"

using namespace cltlab;

TEST_CASE("counter rng: reproducible, bounded, streams independent") {
  CounterRng a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  CounterRng c(42, 8);
  int same = 0;
  CounterRng a2(42, 7);
  for (int i = 0; i < 1000; ++i)
    if (a2.next_u64() == c.next_u64()) ++same;
  CHECK(same == 0);

  CounterRng u(1, 0);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int kN = 200000;
  for (int i = 0; i < kN; ++i) {
    double v = u.uniform01();
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / kN == doctest::Approx(0.5).epsilon(5e-3));

  CounterRng g(3, 1);
  double m = 0, m2 = 0;
  for (int i = 0; i < kN; ++i) {
    double z = g.normal();
    m += z;
    m2 += z * z;
  }
  m /= kN;
  m2 /= kN;
  CHECK(std::abs(m) < 0.01);
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("gauss-hermite: exact on polynomials against Gamma-function moments") {
  // integral e^{-y^2} y^{2m} dy = Gamma(m + 1/2)
  const auto& rule = GaussHermite::order(8);
  REQUIRE(rule.nodes.size() == 8);
  auto moment = [&](int p) {
    double s = 0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      s += rule.weights[i] * std::pow(rule.nodes[i], p);
    return s;
  };
  const double sqrt_pi = 1.7724538509055160273;
  CHECK(moment(0) == doctest::Approx(sqrt_pi).epsilon(1e-14));
  CHECK(moment(1) == doctest::Approx(0.0).scale(1).epsilon(1e-14));
  CHECK(moment(2) == doctest::Approx(0.5 * sqrt_pi).epsilon(1e-13));
  CHECK(moment(4) == doctest::Approx(0.75 * sqrt_pi).epsilon(1e-13));
  CHECK(moment(6) == doctest::Approx(15.0 / 8.0 * sqrt_pi).epsilon(1e-13));
  // order-8 rule integrates up to degree 15 exactly
  CHECK(moment(14) == doctest::Approx(135135.0 / 128.0 * sqrt_pi).epsilon(1e-12));
}

TEST_CASE("gaussian expectation: polynomial moments in 2-d") {
  SymMat sigma(2);
  sigma(0, 0) = 1.5;
  sigma(0, 1) = 0.4;
  sigma(1, 0) = 0.4;
  sigma(1, 1) = 0.8;
  GaussianExpectation ge(sigma, 12);
  std::vector<double> x = {0.3, -0.7};
  const double t = 0.6;

  // E[(x + sqrt(t) xi)_0] = x_0
  double m0 = ge.expect(x, t, [](std::span<const double> y) { return y[0]; });
  CHECK(m0 == doctest::Approx(x[0]).epsilon(1e-13));

  // E[(y_0 - x_0)(y_1 - x_1)] = t * Sigma_01
  double cov = ge.expect(x, t, [&](std::span<const double> y) {
    return (y[0] - x[0]) * (y[1] - x[1]);
  });
  CHECK(cov == doctest::Approx(t * 0.4).epsilon(1e-12));

  // E[(y_0 - x_0)^4] = 3 (t Sigma_00)^2
  double m4 = ge.expect(x, t, [&](std::span<const double> y) {
    double u = y[0] - x[0];
    return u * u * u * u;
  });
  CHECK(m4 == doctest::Approx(3.0 * (t * 1.5) * (t * 1.5)).epsilon(1e-12));

  // half-order check agrees on a polynomial both orders integrate exactly
  double c4 = ge.expect_check(x, t, [&](std::span<const double> y) {
    double u = y[0] - x[0];
    return u * u * u * u;
  });
  CHECK(c4 == doctest::Approx(m4).epsilon(1e-12));
}

TEST_CASE("gaussian expectation: closed-form gaussian integrand") {
  // E[exp(-(x + sqrt(t) xi)^2 / 2)] with xi ~ N(0,1)
  //   = exp(-x^2 / (2 (1+t))) / sqrt(1+t)
  SymMat sigma = SymMat::identity(1);
  GaussianExpectation ge(sigma, 40);
  std::vector<double> x = {0.9};
  const double t = 0.75;
  double got = ge.expect(x, t, [](std::span<const double> y) {
    return std::exp(-0.5 * y[0] * y[0]);
  });
  double want = std::exp(-x[0] * x[0] / (2 * (1 + t))) / std::sqrt(1 + t);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  // t = 0 reduces to point evaluation
  double at0 = ge.expect(x, 0.0, [](std::span<const double> y) {
    return std::exp(-0.5 * y[0] * y[0]);
  });
  CHECK(at0 == doctest::Approx(std::exp(-0.5 * 0.81)).epsilon(1e-14));

  CHECK_THROWS_AS(
      ge.expect(x, -0.1, [](std::span<const double>) { return 0.0; }),
      std::invalid_argument);
}
