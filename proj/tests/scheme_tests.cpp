#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cltlab/lattice_scheme.hpp"

using namespace cltlab;
using namespace cltlab::scheme;
using cltlab::distributions::make_step_distribution;
using cltlab::testfn::make_test_function;

TEST_CASE("four-step rademacher field: hand-convolved value at the origin") {
  // u_4(0,1) = 2^{-4} sum_r C(4,r) f((2r-4)/2) = (6 + 8 e^{-1/2} + 2 e^{-2})/16
  auto f = make_test_function("gauss_bump");
  auto d = make_step_distribution("rademacher");
  auto field = build_field(f, d, 4, 1.0);

  CHECK(field.columns() == 5);
  CHECK(field.time_of(4) == doctest::Approx(1.0));
  std::size_t o = field.grid.origin_index();
  CHECK(field.value(4, o) == doctest::Approx(0.6951822402608933).epsilon(1e-14));

  // column 0 is f itself on the nodes
  std::vector<double> x(1);
  for (std::size_t g = 0; g < field.grid.size(); g += 7) {
    field.grid.coords(g, x.data());
    CHECK(field.value(0, g) == doctest::Approx(f->value(x)).epsilon(1e-14));
  }

  // the tabulated field never exceeds ||f||_inf
  double fmax = f->ck_norm(0);
  for (int k = 0; k < field.columns(); ++k)
    for (std::size_t g = 0; g < field.grid.size(); ++g)
      CHECK(std::abs(field.value(k, g)) <= fmax + 1e-12);
}

TEST_CASE("field recurrence: one explicit mixture step reproduces the next column") {
  auto f = make_test_function("gauss_bump");
  auto d = make_step_distribution("asym_lattice");
  auto field = build_field(f, d, 8, 1.0);
  for (int k : {0, 3, 7}) {
    auto next = step_once(field, k);
    REQUIRE(next.size() == field.grid.size());
    for (std::size_t g = 0; g < next.size(); ++g)
      CHECK(next[g] == doctest::Approx(field.value(k + 1, g)).epsilon(1e-10));
  }
}

TEST_CASE("discrete generator at the origin: closed form for rademacher steps") {
  // n (u_4(0, 1/4) - f(0)) = 4 (e^{-1/8} - 1)
  auto f = make_test_function("gauss_bump");
  auto d = make_step_distribution("rademacher");
  auto field = build_field(f, d, 4, 1.0);
  std::size_t o = field.grid.origin_index();
  CHECK(scheme_generator(field, 0, o) ==
        doctest::Approx(-0.47001238966161839).epsilon(1e-13));
}

TEST_CASE("point evaluation through an explicit pmf matches the tabulated field") {
  auto f = make_test_function("gauss_bump");
  auto d = make_step_distribution("lazy");
  const int n = 8;
  auto field = build_field(f, d, n, 1.0);
  auto p5 = d.convolve_power(5);
  std::vector<double> x(1);
  for (std::size_t g = 0; g < field.grid.size(); g += 11) {
    field.grid.coords(g, x.data());
    CHECK(eval_exact(*f, p5, n, x) == doctest::Approx(field.value(5, g)).epsilon(1e-13));
  }
  // off-grid points are admitted
  std::vector<double> xo = {0.01234};
  CHECK(std::abs(eval_exact(*f, p5, n, xo)) <= f->ck_norm(0));
}

TEST_CASE("derivative planes carry the derivatives of the expectation") {
  auto f = make_test_function("gauss_bump");
  auto d = make_step_distribution("rademacher");
  auto field = build_field(f, d, 4, 1.0, std::nullopt, 2);
  REQUIRE(field.plane_count() == 3);  // value, d/dx, d^2/dx^2
  std::vector<double> x(1);
  std::vector<int> e1 = {1}, e2 = {2};
  for (std::size_t g = 0; g < field.grid.size(); g += 13) {
    field.grid.coords(g, x.data());
    CHECK(field.grad(0, 0, g) ==
          doctest::Approx(f->deriv(MultiIndex(e1), x)).epsilon(1e-13));
    CHECK(field.hess(0, 0, 0, g) ==
          doctest::Approx(f->deriv(MultiIndex(e2), x)).epsilon(1e-13));
  }
  // trace accessors agree with the packed entries
  SymMat sig = SymMat::identity(1);
  for (std::size_t g = 0; g < field.grid.size(); g += 17) {
    CHECK(field.hess_trace(2, g) == doctest::Approx(field.hess(0, 0, 2, g)));
    CHECK(field.sigma_hess_trace(sig, 2, g) ==
          doctest::Approx(field.hess_trace(2, g)));
  }
  // derivative planes respect the certified sups
  auto c1 = f->sup_certificate(MultiIndex{1});
  auto c2 = f->sup_certificate(MultiIndex{2});
  for (int k = 0; k < field.columns(); ++k)
    for (std::size_t g = 0; g < field.grid.size(); ++g) {
      CHECK(std::abs(field.grad(0, k, g)) <= c1.value + c1.slack + 1e-12);
      CHECK(std::abs(field.hess(0, 0, k, g)) <= c2.value + c2.slack + 1e-12);
    }
}

TEST_CASE("two-dimensional field with mixed hessian plane") {
  auto f = make_test_function("tensor_bump", nlohmann::json{{"a", {1.0, 2.0}}});
  auto d = make_step_distribution("lattice2d");
  auto field = build_field(f, d, 4, 1.0, BoxSpec{1.5, 0.25}, 2);
  REQUIRE(field.plane_count() == 6);  // value, 2 gradients, 3 hessian entries
  std::vector<double> x(2);
  for (std::size_t g = 0; g < field.grid.size(); g += 5) {
    field.grid.coords(g, x.data());
    std::vector<int> e01 = {1, 1}, e20 = {2, 0}, e02 = {0, 2};
    CHECK(field.hess(0, 1, 0, g) ==
          doctest::Approx(f->deriv(MultiIndex(e01), x)).epsilon(1e-13));
    CHECK(field.hess(1, 0, 0, g) == doctest::Approx(field.hess(0, 1, 0, g)));
    double tr = f->deriv(MultiIndex(e20), x) + f->deriv(MultiIndex(e02), x);
    CHECK(field.hess_trace(0, g) == doctest::Approx(tr).epsilon(1e-12));
  }
  SymMat s(2);
  s(0, 0) = 0.5;
  s(0, 1) = 0.2;
  s(1, 0) = 0.2;
  s(1, 1) = 1.5;
  std::size_t o = field.grid.origin_index();
  double want = 0.5 * field.hess(0, 0, 2, o) + 2 * 0.2 * field.hess(0, 1, 2, o) +
                1.5 * field.hess(1, 1, 2, o);
  CHECK(field.sigma_hess_trace(s, 2, o) == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("box certificate keeps the truncation error within budget") {
  auto f = make_test_function("gauss_bump");
  auto d = make_step_distribution("rademacher");
  auto tb = choose_box(*f, d, 8, 1.0);
  CHECK(tb.bound <= 2e-6 * f->ck_norm(0) + 1e-15);
  CHECK(tb.half_width > tb.walk_radius);
  CHECK(!tb.method.empty());
  CHECK(tb.walk_radius > 0);

  // tighter tolerance -> wider box
  auto tb2 = choose_box(*f, d, 8, 1.0, 1e-9);
  CHECK(tb2.half_width >= tb.half_width);
  CHECK(tb2.bound <= 2e-9 * f->ck_norm(0) + 1e-18);
}

TEST_CASE("construction gates") {
  auto f = make_test_function("gauss_bump");
  auto gauss = make_step_distribution("gaussian");
  CHECK_THROWS_WITH_AS(build_field(f, gauss, 4, 1.0),
                       doctest::Contains("continuous backend"),
                       std::invalid_argument);
  auto d = make_step_distribution("rademacher");
  CHECK_THROWS_AS(build_field(f, d, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_field(f, d, 4, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_field(f, d, 4, 1.0, std::nullopt, 1), std::invalid_argument);
}

TEST_CASE("grid-row parallelism does not change a single number") {
  auto f = make_test_function("gauss_bump");
  auto d = make_step_distribution("asym_lattice");
  auto a = build_field(f, d, 8, 1.0, std::nullopt, 2, 1);
  auto b = build_field(f, d, 8, 1.0, std::nullopt, 2, 3);
  REQUIRE(a.grid.size() == b.grid.size());
  REQUIRE(a.columns() == b.columns());
  for (int k = 0; k < a.columns(); ++k)
    for (std::size_t g = 0; g < a.grid.size(); ++g) {
      CHECK(a.value(k, g) == b.value(k, g));
      CHECK(a.grad(0, k, g) == b.grad(0, k, g));
      CHECK(a.hess(0, 0, k, g) == b.hess(0, 0, k, g));
    }
}

TEST_CASE("monte carlo evaluation: exact at t = 0, deterministic, chunk-invariant") {
  auto f = make_test_function("gauss_bump");
  auto gauss = make_step_distribution("gaussian");
  std::vector<double> x = {0.3};

  auto at0 = mc_value(*f, gauss, 16, x, 0.0, 1000, 5);
  CHECK(at0.estimate == doctest::Approx(f->value(x)).epsilon(1e-15));
  CHECK(at0.stderr_ == 0.0);
  CHECK(at0.k == 0);

  std::vector<double> origin = {0.0};
  auto a = mc_value(*f, gauss, 16, origin, 1.0, 200000, 42, 1);
  auto b = mc_value(*f, gauss, 16, origin, 1.0, 200000, 42, 3);
  CHECK(a.estimate == b.estimate);
  CHECK(a.stderr_ == b.stderr_);
  CHECK(a.k == 16);

  // gaussian steps make the scheme exact in law: compare to 2^{-1/2}
  CHECK(std::abs(a.estimate - 0.70710678118654752) <= 4 * a.stderr_);
  CHECK(a.stderr_ > 0);
  CHECK(a.stderr_ < 2e-3);

  // lattice backend agrees with the exact convolution value
  auto rad = make_step_distribution("rademacher");
  auto mc = mc_value(*f, rad, 4, origin, 1.0, 400000, 9);
  CHECK(std::abs(mc.estimate - 0.6951822402608933) <= 4 * mc.stderr_);

  CHECK_THROWS_AS(mc_value(*f, gauss, 16, x, 1.0, 50, 1), std::invalid_argument);
  CHECK_THROWS_AS(mc_value(*f, gauss, 16, x, -0.5, 1000, 1), std::invalid_argument);
}
