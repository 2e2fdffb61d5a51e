#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cltlab/linalg.hpp"
#include "cltlab/rng.hpp"

namespace cltlab::distributions {

// Exact pmf of a lattice random vector on a common rational grid:
// point j has coordinates index[j][i] * unit[i].
struct LatticePmf {
  int dim = 1;
  std::array<double, kMaxDim> unit{1.0, 1.0, 1.0};
  std::vector<std::array<std::int64_t, kMaxDim>> points;
  std::vector<double> mass;
  int step_count = 0;

  std::size_t support_size() const { return points.size(); }
  void point_coords(std::size_t j, double* x) const {
    for (int i = 0; i < dim; ++i) x[i] = unit[i] * static_cast<double>(points[j][i]);
  }
  double total_mass() const;
  void mean(double* mu) const;
  SymMat covariance() const;

  // Exact convolution of two pmfs on compatible grids.
  LatticePmf convolve(const LatticePmf& other) const;
};

struct ConvolutionBudget {
  // cap on k * |step support| and on the dense index span per axis
  std::int64_t max_work = 1'000'000'000;
  std::int64_t max_span = 1 << 24;
};

enum class Backend { lattice, continuous };

enum class ContinuousFamily { none, uniform, laplace, pareto_sym, gaussian };

// A centered step law X_i with covariance Sigma. Lattice laws carry an exact
// finite support; continuous laws carry a named density and a sampler.
class StepDistribution {
 public:
  const std::string& name() const { return name_; }
  int dim() const { return d_; }
  Backend backend() const { return backend_; }
  ContinuousFamily family() const { return family_; }
  const SymMat& covariance() const { return sigma_; }

  // Gaussian steps make S_k / sqrt(n) exactly normal, so the scheme field
  // coincides in law with the heat solution.
  bool is_gaussian() const { return family_ == ContinuousFamily::gaussian; }

  // lattice access
  std::size_t support_size() const { return points_.size(); }
  void support_point(std::size_t j, double* x) const;
  double support_prob(std::size_t j) const { return prob_[j]; }
  std::array<double, kMaxDim> unit() const { return unit_; }
  double max_support_norm() const;  // max |x_j| over the support

  // E|X|^p, exact for lattice laws, closed-form or quadrature for continuous
  // ones; +inf when the moment diverges. Throws on integration failure.
  double moment_abs(double p) const;

  // Exact law of S_k = X_1 + ... + X_k (lattice backend only).
  LatticePmf convolve_power(int k, const ConvolutionBudget& budget = {}) const;
  LatticePmf pmf() const { return convolve_power(1); }

  // Draw one step into out[0..d).
  void sample_step(CounterRng& rng, double* out) const;

  // Scaled copy: law of c * X (used for Y = X / sqrt(n) in the bound audits).
  StepDistribution scaled(double c) const;

  friend StepDistribution make_step_distribution(const std::string& name,
                                                 const nlohmann::json& params);

 private:
  StepDistribution() = default;
  void validate() const;

  std::string name_;
  int d_ = 1;
  Backend backend_ = Backend::lattice;
  ContinuousFamily family_ = ContinuousFamily::none;
  SymMat sigma_{1};

  // lattice
  std::array<double, kMaxDim> unit_{1.0, 1.0, 1.0};
  std::vector<std::array<std::int64_t, kMaxDim>> points_;
  std::vector<double> prob_;
  std::vector<double> cdf_;  // sampling

  // continuous parameters
  double par_a_ = 0.0;  // family-specific (half-width, scale, alpha)
  double par_b_ = 0.0;  // family-specific (pareto x0)
  SymMat chol_{1};      // gaussian
};

// Catalog: rademacher | asym_lattice | lazy | lattice2d | uniform | laplace |
// pareto_sym(alpha[,x0]) | gaussian(sigma).
StepDistribution make_step_distribution(const std::string& name,
                                        const nlohmann::json& params);
StepDistribution make_step_distribution(const std::string& name);

// N independent realizations of S_k, reproducible per (seed, k, N); walk i
// consumes its own counter-based stream, so any parallel chunking yields
// the same output.
std::vector<std::vector<double>> sample_walk(const StepDistribution& dist, int k, int N,
                                             std::uint64_t seed);

// Streaming kernel: calls visit(walk_index, endpoint) for walks [begin,end).
template <typename Visit>
void walk_endpoints(const StepDistribution& dist, int k, int begin, int end,
                    std::uint64_t seed, Visit&& visit) {
  const int d = dist.dim();
  double step[kMaxDim], pos[kMaxDim];
  for (int i = begin; i < end; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    for (int c = 0; c < d; ++c) pos[c] = 0.0;
    for (int s = 0; s < k; ++s) {
      dist.sample_step(rng, step);
      for (int c = 0; c < d; ++c) pos[c] += step[c];
    }
    visit(i, std::span<const double>(pos, static_cast<std::size_t>(d)));
  }
}

}  // namespace cltlab::distributions
