#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cltlab/distributions.hpp"

using namespace cltlab;
using namespace cltlab::distributions;
using nlohmann::json;

namespace {

const std::vector<std::string> kLatticeNames = {"rademacher", "asym_lattice", "lazy",
                                                "lattice2d"};

StepDistribution make(const std::string& name) {
  if (name == "pareto_sym") return make_step_distribution(name, json{{"alpha", 2.5}});
  return make_step_distribution(name);
}

std::vector<StepDistribution> full_catalog() {
  std::vector<StepDistribution> out;
  for (const char* n : {"rademacher", "asym_lattice", "lazy", "lattice2d", "uniform",
                        "laplace", "pareto_sym", "gaussian"})
    out.push_back(make(n));
  return out;
}

}  // namespace

TEST_CASE("catalog: every law is centered with the advertised covariance") {
  for (const auto& d : full_catalog()) {
    CAPTURE(d.name());
    if (d.backend() == Backend::lattice) {
      auto p = d.pmf();
      CHECK(std::abs(p.total_mass() - 1.0) < 1e-10);
      double mu[kMaxDim] = {0, 0, 0};
      p.mean(mu);
      for (int i = 0; i < d.dim(); ++i) CHECK(std::abs(mu[i]) < 1e-10);
      auto cov = p.covariance();
      for (int i = 0; i < d.dim(); ++i)
        for (int j = 0; j < d.dim(); ++j)
          CHECK(std::abs(cov(i, j) - d.covariance()(i, j)) < 1e-10);
      // support points pairwise distinct
      std::map<std::array<std::int64_t, kMaxDim>, int> seen;
      for (const auto& pt : p.points) CHECK(seen[pt]++ == 0);
    } else if (d.family() == ContinuousFamily::pareto_sym) {
      // the sample second moment has infinite variance here; check the
      // exact tail law P(|X| > t) = (x0/t)^alpha instead
      const int kN = 400000;
      const double x0 = 0.4472135954999579, alpha = 2.5;
      CounterRng rng(11, 0);
      double x[kMaxDim];
      int mean_sign = 0, over1 = 0, over2 = 0;
      for (int s = 0; s < kN; ++s) {
        d.sample_step(rng, x);
        mean_sign += x[0] > 0 ? 1 : -1;
        if (std::abs(x[0]) > 1.0) ++over1;
        if (std::abs(x[0]) > 2.0) ++over2;
      }
      CHECK(std::abs(static_cast<double>(mean_sign) / kN) < 0.01);
      CHECK(static_cast<double>(over1) / kN ==
            doctest::Approx(std::pow(x0, alpha)).epsilon(0.02));
      CHECK(static_cast<double>(over2) / kN ==
            doctest::Approx(std::pow(x0 / 2, alpha)).epsilon(0.05));
    } else {
      // sample moments agree with Sigma
      const int kN = 400000;
      CounterRng rng(11, 0);
      std::vector<double> acc(static_cast<std::size_t>(d.dim() * d.dim()), 0.0);
      std::vector<double> mean(static_cast<std::size_t>(d.dim()), 0.0);
      double x[kMaxDim];
      for (int s = 0; s < kN; ++s) {
        d.sample_step(rng, x);
        for (int i = 0; i < d.dim(); ++i) {
          mean[static_cast<std::size_t>(i)] += x[i];
          for (int j = 0; j < d.dim(); ++j)
            acc[static_cast<std::size_t>(i * d.dim() + j)] += x[i] * x[j];
        }
      }
      for (int i = 0; i < d.dim(); ++i) {
        CHECK(std::abs(mean[static_cast<std::size_t>(i)] / kN) < 0.01);
        for (int j = 0; j < d.dim(); ++j)
          CHECK(std::abs(acc[static_cast<std::size_t>(i * d.dim() + j)] / kN -
                         d.covariance()(i, j)) < 0.05);
      }
    }
  }
}

TEST_CASE("asym_lattice: exact two-step law") {
  // X in {-1, 2} with p = {2/3, 1/3}; S_2 in {-2, 1, 4} with p = {4/9, 4/9, 1/9}
  auto d = make("asym_lattice");
  auto p2 = d.convolve_power(2);
  REQUIRE(p2.support_size() == 3);
  std::map<std::int64_t, double> law;
  for (std::size_t j = 0; j < p2.support_size(); ++j) law[p2.points[j][0]] = p2.mass[j];
  CHECK(law.at(-2) == doctest::Approx(4.0 / 9).epsilon(1e-15));
  CHECK(law.at(1) == doctest::Approx(4.0 / 9).epsilon(1e-15));
  CHECK(law.at(4) == doctest::Approx(1.0 / 9).epsilon(1e-15));
  CHECK(p2.step_count == 2);
}

TEST_CASE("convolution semigroup: conv(j+k) = conv(j) * conv(k)") {
  for (const auto& name : kLatticeNames) {
    CAPTURE(name);
    auto d = make(name);
    auto a = d.convolve_power(3);
    auto b = d.convolve_power(4);
    auto ab = a.convolve(b);
    auto c7 = d.convolve_power(7);
    REQUIRE(ab.support_size() == c7.support_size());
    std::map<std::array<std::int64_t, kMaxDim>, double> m;
    for (std::size_t j = 0; j < ab.support_size(); ++j) m[ab.points[j]] = ab.mass[j];
    for (std::size_t j = 0; j < c7.support_size(); ++j) {
      auto it = m.find(c7.points[j]);
      REQUIRE(it != m.end());
      CHECK(std::abs(it->second - c7.mass[j]) < 1e-12);
    }
    // k = 0 is the unit of the semigroup
    auto z = d.convolve_power(0);
    CHECK(z.support_size() == 1);
    CHECK(z.mass[0] == doctest::Approx(1.0));
    for (int i = 0; i < d.dim(); ++i) CHECK(z.points[0][i] == 0);
  }
}

TEST_CASE("moments: hand values and divergence") {
  CHECK(make("rademacher").moment_abs(3) == doctest::Approx(1.0).epsilon(1e-14));
  // E|X|^3 for X in {-1,2}, p = {2/3,1/3}: 2/3 + 8/3 = 10/3
  CHECK(make("asym_lattice").moment_abs(3) ==
        doctest::Approx(10.0 / 3).epsilon(1e-14));
  CHECK(make("rademacher").moment_abs(2) == doctest::Approx(1.0).epsilon(1e-14));

  auto pareto = make_step_distribution("pareto_sym", json{{"alpha", 2.5}});
  CHECK(pareto.covariance()(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pareto.moment_abs(2.4) ==
        doctest::Approx(3.6238983183884743).epsilon(1e-10));
  CHECK(std::isinf(pareto.moment_abs(3)));
  CHECK(std::isinf(pareto.moment_abs(2.5)));

  CHECK(make("gaussian").moment_abs(4) == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(make("uniform").moment_abs(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(make("laplace").moment_abs(2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("empirical law of a lattice walk matches the exact convolution") {
  auto d = make("lazy");
  const int k = 6, kN = 200000;
  auto exact = d.convolve_power(k);
  std::map<std::int64_t, double> want;
  for (std::size_t j = 0; j < exact.support_size(); ++j)
    want[exact.points[j][0]] += exact.mass[j];

  std::map<std::int64_t, int> counts;
  walk_endpoints(d, k, 0, kN, 99, [&](int, std::span<const double> x) {
    counts[std::llround(x[0] / d.unit()[0])] += 1;
  });
  double tv = 0.0;
  for (const auto& [pt, p] : want) {
    auto it = counts.find(pt);
    double phat = it == counts.end() ? 0.0 : static_cast<double>(it->second) / kN;
    tv += std::abs(phat - p);
  }
  CHECK(tv < 5.0 * std::sqrt(static_cast<double>(exact.support_size()) / kN));
}

TEST_CASE("sample_walk: reproducible and chunk-order invariant") {
  auto d = make("lattice2d");
  auto w1 = sample_walk(d, 5, 64, 1234);
  auto w2 = sample_walk(d, 5, 64, 1234);
  REQUIRE(w1.size() == 64);
  CHECK(w1 == w2);

  // streaming the second half alone reproduces the same endpoints
  std::vector<std::vector<double>> tail(32);
  walk_endpoints(d, 5, 32, 64, 1234, [&](int i, std::span<const double> x) {
    tail[static_cast<std::size_t>(i - 32)].assign(x.begin(), x.end());
  });
  for (int i = 0; i < 32; ++i) CHECK(tail[static_cast<std::size_t>(i)] == w1[static_cast<std::size_t>(i + 32)]);

  auto w3 = sample_walk(d, 5, 64, 1235);
  CHECK(w1 != w3);
}

TEST_CASE("scaled copies transform covariance and support") {
  auto d = make("asym_lattice");
  auto s = d.scaled(0.5);
  CHECK(s.covariance()(0, 0) == doctest::Approx(0.25 * d.covariance()(0, 0)));
  CHECK(s.max_support_norm() == doctest::Approx(0.5 * d.max_support_norm()));
  auto p = s.pmf();
  CHECK(std::abs(p.total_mass() - 1.0) < 1e-12);
  double mu[kMaxDim];
  p.mean(mu);
  CHECK(std::abs(mu[0]) < 1e-12);

  auto g = make("gaussian").scaled(2.0);
  CHECK(g.covariance()(0, 0) == doctest::Approx(4.0));
  CHECK(g.is_gaussian());
}

TEST_CASE("constructors reject bad parameters") {
  CHECK_THROWS_AS(make_step_distribution("no_such_law"), std::invalid_argument);
  CHECK_THROWS_AS(make_step_distribution("rademacher", json{{"weird", 1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_step_distribution("pareto_sym", json{{"alpha", 2.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_step_distribution("lazy", json{{"stay", 1.5}}),
                  std::invalid_argument);
  CHECK_NOTHROW(make_step_distribution("lazy", json{{"stay", 0.25}}));
}
