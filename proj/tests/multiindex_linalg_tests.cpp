#include <doctest.h>

#include <cmath>
#include <set>
#include <string>

#include "cltlab/linalg.hpp"
#include "cltlab/multiindex.hpp"

using namespace cltlab;

TEST_CASE("multi-index enumeration counts and ordering") {
  auto all1 = multi_indices(1, 0, 4);
  CHECK(all1.size() == 5);  // orders 0..4 in 1-d
  for (std::size_t i = 0; i + 1 < all1.size(); ++i)
    CHECK(all1[i].order() <= all1[i + 1].order());

  auto all2 = multi_indices(2, 0, 2);
  // orders 0,1,2 in 2-d: 1 + 2 + 3
  CHECK(all2.size() == 6);
  std::set<std::string> seen;
  for (const auto& a : all2) seen.insert(a.str());
  CHECK(seen.size() == all2.size());

  auto order3 = multi_indices(3, 2, 2);
  CHECK(order3.size() == 6);  // C(2+2,2) = 6 multi-indices of order 2 in 3-d
}

TEST_CASE("multi-index raising and accessors") {
  MultiIndex a{1, 0, 2};
  CHECK(a.order() == 3);
  CHECK(a[0] == 1);
  CHECK(a[2] == 2);
  auto b = a.raised(1);
  CHECK(b.order() == 4);
  CHECK(b[1] == 1);
  CHECK_THROWS_AS(MultiIndex(std::vector<int>{}), std::invalid_argument);
  CHECK_THROWS_AS(MultiIndex(std::vector<int>{1, 1, 1, 1}), std::invalid_argument);
}

TEST_CASE("cholesky / determinant / inverse on a hand-checked SPD matrix") {
  // A = [[4,2],[2,3]]: L = [[2,0],[1,sqrt(2)]], det = 8
  SymMat a(2);
  a(0, 0) = 4;
  a(0, 1) = 2;
  a(1, 0) = 2;
  a(1, 1) = 3;
  auto l = a.cholesky();
  CHECK(l(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(l(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(a.det_spd() == doctest::Approx(8.0).epsilon(1e-14));

  auto inv = a.inverse_spd();
  // A^{-1} = 1/8 [[3,-2],[-2,4]]
  CHECK(inv(0, 0) == doctest::Approx(3.0 / 8).epsilon(1e-13));
  CHECK(inv(0, 1) == doctest::Approx(-0.25).epsilon(1e-13));
  CHECK(inv(1, 1) == doctest::Approx(0.5).epsilon(1e-13));

  // eigenvalues of [[4,2],[2,3]]: (7 +- sqrt(17))/2
  CHECK(a.lambda_max_abs() == doctest::Approx((7 + std::sqrt(17.0)) / 2).epsilon(1e-13));
  CHECK(a.lambda_min() == doctest::Approx((7 - std::sqrt(17.0)) / 2).epsilon(1e-13));
}

TEST_CASE("cholesky rejects non-SPD input") {
  SymMat m(2);
  m(0, 0) = 1;
  m(0, 1) = 2;
  m(1, 0) = 2;
  m(1, 1) = 1;  // eigenvalues 3, -1
  CHECK_THROWS_AS(m.cholesky(), std::domain_error);

  SymMat ns(2);
  ns(0, 0) = 1;
  ns(0, 1) = 0.5;
  ns(1, 0) = 0.2;  // asymmetric
  ns(1, 1) = 1;
  CHECK(!ns.is_symmetric());
  CHECK_THROWS_AS(ns.cholesky(), std::domain_error);
}

TEST_CASE("quadform, mul, trace_product") {
  SymMat a(2);
  a(0, 0) = 2;
  a(0, 1) = 1;
  a(1, 0) = 1;
  a(1, 1) = 3;
  double x[2] = {1.0, -2.0};
  // x'Ax = 2 - 2*2 + 3*4 = 10
  CHECK(a.quadform(std::span<const double>(x, 2)) == doctest::Approx(10.0).epsilon(1e-15));
  double y[2];
  a.mul(std::span<const double>(x, 2), y);
  CHECK(y[0] == doctest::Approx(0.0));
  CHECK(y[1] == doctest::Approx(-5.0));

  SymMat b = SymMat::identity(2);
  CHECK(trace_product(a, b) == doctest::Approx(5.0));
  CHECK(trace_product(a, a) == doctest::Approx(4 + 1 + 1 + 9));  // sum a_ij^2
}
