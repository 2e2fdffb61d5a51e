#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cltlab/distributions.hpp"
#include "cltlab/numeric.hpp"
#include "cltlab/testfn.hpp"

namespace cltlab::scheme {

using distributions::LatticePmf;
using distributions::StepDistribution;
using testfn::TestFunction;
using testfn::TestFunctionPtr;

struct BoxSpec {
  double half_width = 0.0;  // L: box is [-L, L]^d
  double step = 0.05;       // grid spacing
};

// Provable bound on what the box truncation can hide from a sup.
struct TailBound {
  double half_width = 0.0;   // L: sup taken over [-L,L]^d instead of R^d
  double walk_radius = 0.0;  // rho with P(|S_k|/sqrt(n) >= rho) controlled
  double bound = 0.0;        // absolute sup-norm slack from the truncation
  double grid_slack = 0.0;   // delta * ||f||_C1: off-node sup excess
  std::string method;        // "exact-support" | "hoeffding" | ...
};

// Choose [-L,L]^d and walk radius so that truncating f's tail and the walk's
// tail perturbs sup-norm comparisons by at most rel_tol * ||f||_inf.
// Requires vanishing f; lattice steps (bounded support) only.
TailBound choose_box(const TestFunction& f, const StepDistribution& dist, int n, double horizon,
                     double rel_tol = 1e-6);

// u_n(x, k/n) = E[f(x + S_k / sqrt(n))] tabulated on a grid for k = 0..ceil(n*horizon),
// computed by exact lattice convolution (no sampling, no interpolation).
// With max_deriv = 2, first and second spatial derivative planes are stored too
// (derivatives pass through the expectation onto f).
class LatticeField {
 public:
  int n = 0;
  double horizon = 0.0;
  int max_deriv = 0;
  Grid grid;
  TailBound tail;
  TestFunctionPtr f;
  std::optional<StepDistribution> dist;

  int columns() const { return cols_; }
  double time_of(int k) const { return static_cast<double>(k) / n; }

  double value(int k, std::size_t g) const { return plane(0)[idx(k, g)]; }
  double grad(int axis, int k, std::size_t g) const { return plane(1 + axis)[idx(k, g)]; }
  double hess(int i, int j, int k, std::size_t g) const;                 // d^2 u_n / dx_i dx_j
  double hess_trace(int k, std::size_t g) const;                         // tr D^2 u_n
  double sigma_hess_trace(const SymMat& s, int k, std::size_t g) const;  // tr(S D^2 u_n)

  std::size_t plane_count() const { return planes_.size(); }

 private:
  friend LatticeField build_field(const TestFunctionPtr&, const StepDistribution&, int, double,
                                  const std::optional<BoxSpec>&, int, int);
  int cols_ = 0;
  // planes_[p][k * grid.size() + g]; p = 0 value, 1..d gradient, then packed Hessian
  std::vector<std::vector<double>> planes_;

  std::size_t idx(int k, std::size_t g) const { return static_cast<std::size_t>(k) * grid.size() + g; }
  const std::vector<double>& plane(std::size_t p) const { return planes_[p]; }
};

// Exact construction; throws std::invalid_argument for continuous-backend
// distributions (use mc_value) and when ceil(n * horizon) overflows the
// convolution budget. max_deriv in {0, 2}. jobs >= 1 partitions grid rows;
// results are independent of jobs.
LatticeField build_field(const TestFunctionPtr& f, const StepDistribution& dist, int n,
                         double horizon, const std::optional<BoxSpec>& box = std::nullopt,
                         int max_deriv = 0, int jobs = 1);

// Point evaluations through an explicit k-step pmf (off-grid x allowed; the
// expectation is re-expanded through f exactly).
double eval_exact(const TestFunction& f, const LatticePmf& pmf_k, int n,
                  std::span<const double> x);
double eval_exact_sigma_hess(const TestFunction& f, const LatticePmf& pmf_k, int n,
                             const SymMat& sigma, std::span<const double> x);

// Column k+1 recomputed from column-k data via the one-step mixture
// u_n(x, (k+1)/n) = E[u_n(x + X/sqrt(n), k/n)]; returns the new value plane.
// Off-grid points x + X/sqrt(n) are evaluated exactly through f.
std::vector<double> step_once(const LatticeField& field, int k);

// n * (u_n(x, (k+1)/n) - u_n(x, k/n)) at grid node g.
double scheme_generator(const LatticeField& field, int k, std::size_t g);

struct McValue {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::int64_t samples = 0;
  int k = 0;  // floor(n * t) steps taken
};

// Monte Carlo u_n(x,t) for any backend: average of f(x + S_k/sqrt(n)) over N
// independent walks. Deterministic for fixed (seed, N) regardless of jobs.
McValue mc_value(const TestFunction& f, const StepDistribution& dist, int n,
                 std::span<const double> x, double t, std::int64_t N, std::uint64_t seed,
                 int jobs = 1);

}  // namespace cltlab::scheme
