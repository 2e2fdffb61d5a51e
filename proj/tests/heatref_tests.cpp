#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <vector>

#include "cltlab/heatref.hpp"
#include "cltlab/quadrature.hpp"

using namespace cltlab;
using namespace cltlab::heat;
using namespace cltlab::testfn;
using nlohmann::json;

namespace {
const std::vector<double> kOrigin = {0.0};
}

TEST_CASE("heat evolution of the standard bump: closed-form point values") {
  // f = e^{-x^2/2}, Sigma = 1: u(x,t) = exp(-x^2/(2(1+t))) / sqrt(1+t)
  auto f = make_test_function("gauss_bump");
  HeatReference ref(f, SymMat::identity(1));
  CHECK(ref.closed_form());

  CHECK(ref.value(kOrigin, 1.0) ==
        doctest::Approx(0.70710678118654752).epsilon(1e-15));
  std::vector<double> one = {1.0};
  CHECK(ref.value(one, 1.0) ==
        doctest::Approx(0.55069531490318375).epsilon(1e-14));
  std::vector<double> p = {0.7};
  CHECK(ref.value(p, 0.6) ==
        doctest::Approx(0.67832631611350981).epsilon(1e-14));
  CHECK(ref.hessian_trace(kOrigin, 1.0) ==
        doctest::Approx(-0.35355339059327376).epsilon(1e-13));
  CHECK(ref.hessian_trace_sigma(kOrigin, 1.0) ==
        doctest::Approx(ref.hessian_trace(kOrigin, 1.0)).epsilon(1e-15));

  // t = 0 slice is the initial datum itself
  CHECK(ref.at_time(0.0).get() == f.get());
  CHECK(ref.value(p, 0.0) == doctest::Approx(f->value(p)).epsilon(1e-15));
  CHECK(ref.quadrature_error(p, 0.8) == 0.0);
}

TEST_CASE("pde residual: zero for polynomial data, Richardson decay otherwise") {
  SymMat sigma = SymMat::identity(1);
  auto quad = make_test_function(
      "quadratic", json{{"c0", 0.4}, {"b", {0.7}}, {"Q", {{2.0}}}});
  HeatReference pref(quad, sigma);
  std::vector<double> x = {0.9};
  // u(x,t) = c0 + bx + x'Qx/2 + t tr(Q Sigma)/2 is linear in t: the centered
  // difference is exact for every h
  for (double h : {0.2, 0.05, 0.01})
    CHECK(pref.pde_residual(x, 0.5, h) <= 1e-12);

  auto f = make_test_function("gauss_bump");
  HeatReference ref(f, sigma);
  std::vector<double> y = {0.7};
  double r1 = ref.pde_residual(y, 0.6, 0.1);
  double r2 = ref.pde_residual(y, 0.6, 0.05);
  CHECK(r1 > 0);
  // second-order in h: halving h should shrink the defect about 4x
  CHECK(r2 <= r1 / 3.5);
  CHECK(r2 >= r1 / 4.5);
  CHECK_THROWS_AS(ref.pde_residual(y, 0.05, 0.1), std::invalid_argument);
}

TEST_CASE("semigroup property of the closed form") {
  auto f = make_test_function("gauss_bump");
  HeatReference ref(f, SymMat::identity(1));
  std::vector<double> x = {0.3};
  CHECK(ref.semigroup_gap(x, 0.5, 0.5) <= 1e-8);
  CHECK(ref.semigroup_gap(x, 0.25, 0.75) <= 1e-8);
  CHECK(ref.semigroup_gap(x, 0.7, 0.0) <= 1e-15);
}

TEST_CASE("quadrature path agrees with an independent gaussian expectation") {
  // sine_bump has no closed-form image; check u(x,t) against direct
  // Gauss-Hermite integration of f(x + sqrt(t) xi)
  auto f = make_test_function("sine_bump");
  SymMat sigma = SymMat::identity(1);
  HeatReference ref(f, sigma, 64);
  CHECK(!ref.closed_form());

  GaussianExpectation ge(sigma, 80);
  for (double t : {0.3, 1.0}) {
    for (double xv : {-0.8, 0.0, 1.4}) {
      std::vector<double> x = {xv};
      double want = ge.expect(x, t, [&](std::span<const double> y) { return f->value(y); });
      CHECK(ref.value(x, t) == doctest::Approx(want).epsilon(1e-10));
    }
  }
  std::vector<double> x = {0.4};
  CHECK(ref.quadrature_error(x, 0.7) <= 1e-10);

  // derivative slices solve the same equation: residual small at modest h
  CHECK(ref.pde_residual(x, 0.8, 0.05) <= 1e-3);
}

TEST_CASE("two-dimensional anisotropic covariance") {
  // f = e^{-|x|^2/2} in d = 2, Sigma = diag(1, 1/2):
  // u(x,t) = prod_i exp(-x_i^2/(2(1+s_i t)))/sqrt(1+s_i t)
  auto f = make_test_function("gauss_bump", json{{"a", 1.0}, {"d", 2}});
  SymMat sigma(2);
  sigma(0, 0) = 1.0;
  sigma(1, 1) = 0.5;
  HeatReference ref(f, sigma);
  std::vector<double> x = {0.6, -0.9};
  const double t = 0.8;
  double want = std::exp(-x[0] * x[0] / (2 * (1 + t))) / std::sqrt(1 + t) *
                std::exp(-x[1] * x[1] / (2 * (1 + 0.5 * t))) / std::sqrt(1 + 0.5 * t);
  CHECK(ref.value(x, t) == doctest::Approx(want).epsilon(1e-13));
  // centered time difference leaves an O(h^2) defect
  CHECK(ref.pde_residual(x, 0.5, 0.02) <= 1e-5);
  CHECK(ref.pde_residual(x, 0.5, 0.01) <= ref.pde_residual(x, 0.5, 0.02) / 3.5);
}
