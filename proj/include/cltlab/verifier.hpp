#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cltlab/heatref.hpp"
#include "cltlab/lattice_scheme.hpp"

namespace cltlab::verify {

using distributions::StepDistribution;
using heat::HeatReference;
using scheme::BoxSpec;
using scheme::LatticeField;
using scheme::TailBound;
using testfn::TestFunctionPtr;

// ---------------------------------------------------------------------------
// One-step expectation bound: |E g(x+Y) - g(x)| <= ||g||_C2 tr(Cov Y) / 2.
struct OneStepBound {
  double lhs_sup = 0.0;    // max over the audit grid
  double rhs = 0.0;        // may be +inf (vacuous)
  bool vacuous = false;
  bool pass = false;       // lhs <= rhs * (1 + 1e-8), or vacuous
  std::array<double, kMaxDim> argmax{};
};

OneStepBound one_step_bound_check(const testfn::TestFunction& g, const StepDistribution& y,
                                  const std::optional<BoxSpec>& box = std::nullopt);

// ---------------------------------------------------------------------------
// Time-regularity audits over a tabulated field and its heat reference:
//   (a) |u_n(x,t+1/n) - u_n(x,t)|          <= ||f||_C2 tr(S)/(2n)
//   (b) |tr D^2 u_n(x,t+1/n) - tr D^2 u_n(x,t)| <= d ||f||_C4 tr(S)/(2n)
//   (c) |u(x,t+h) - u(x,t)|                <= h ||f||_C2 tr(S)/2, h = 1/n
struct RegularityAudit {
  struct Item {
    double ratio = 0.0;  // max observed lhs / rhs
    double lhs_sup = 0.0;
    double rhs = 0.0;
    bool vacuous = false;
  };
  Item value_step;       // (a)
  Item hess_trace_step;  // (b)
  Item heat_time;        // (c)
  bool pass = false;     // every non-vacuous ratio <= 1 + 1e-8
};

RegularityAudit regularity_audit(const LatticeField& field, const HeatReference& ref);

// ---------------------------------------------------------------------------
// Consistency error of the scheme against the generator:
//   eps_n = sup_{x,k} | n E[u_n(x + X/sqrt(n), k/n) - u_n(x, k/n)]
//                       - tr(Sigma D^2 u_n(x, k/n)) / 2 |
// taken over the box grid and k = 0..ceil(n*horizon). Exact backends only.
struct ConsistencyResult {
  double epsilon = 0.0;
  int argmax_k = 0;
  std::array<double, kMaxDim> argmax_x{};
  TailBound tail;
};

ConsistencyResult epsilon_n(const TestFunctionPtr& f, const StepDistribution& dist, int n,
                            double horizon = 2.0, const std::optional<BoxSpec>& box = std::nullopt,
                            int jobs = 1);

// ---------------------------------------------------------------------------
// sigma_n = sup (u_n - u)_+, sigma~_n = sup (u - u_n)_+ over grid x time,
// t in [0, horizon]; sup_gap = max of the two.
struct GapReport {
  int n = 0;
  double horizon = 2.0;
  double sup_gap = 0.0;
  double sigma_n = 0.0;
  double sigma_tilde_n = 0.0;
  int argmax_k = 0;
  std::array<double, kMaxDim> argmax_x{};
  double gap_origin_t1 = 0.0;    // |u_n - u| at x = 0, t = 1
  double pc_correction = 0.0;    // ||f||_C2 tr(Sigma) / (2n), reported alongside
  TailBound tail;
  bool monte_carlo = false;      // probe-based branch for continuous steps
  double max_stderr = 0.0;
  std::int64_t mc_samples = 0;
};

GapReport sup_gap(const TestFunctionPtr& f, const StepDistribution& dist, int n,
                  const HeatReference& ref, double horizon = 2.0,
                  const std::optional<BoxSpec>& box = std::nullopt, std::int64_t mc_samples = 0,
                  std::uint64_t seed = 1, int jobs = 1);

// ---------------------------------------------------------------------------
// Log-log least squares y = C n^slope through (n_i, v_i), v_i > 0.
struct RatePoint {
  double n = 0.0;
  double value = 0.0;
  std::optional<double> stderr_;  // Monte Carlo points carry an uncertainty
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;  // log C
  double r2 = 1.0;
  int points_used = 0;
  int points_dropped = 0;  // MC points with stderr > 20% of value
};

RateFit fit_rate(const std::vector<RatePoint>& pts);

// ---------------------------------------------------------------------------
// Doubling-of-variables exploration at one n (time horizon 2):
//   phi_n(x,k,s) = u_n(x,k/n) - u(x,s) - c_n (k/n + s) - C_n (k/n - s)^2,
//   c_n = sigma_n / 8,  C_n = 2 ||f||_inf sqrt(n).
struct DoublingReport {
  int n = 0;
  double sigma_n = 0.0;
  double sigma_tilde_n = 0.0;
  bool degenerate = false;  // sigma_n <= tol: nothing to explore
  double c_n = 0.0;
  double big_c_n = 0.0;
  double sup_phi = 0.0;
  std::array<double, kMaxDim> x0{};
  int k0 = 0;
  double s0 = 0.0;
  double time_split = 0.0;  // |k0/n - s0|
  std::string case_label;   // "interior" | "k0=0" | "s0=0"
  bool x0_interior = false;
  bool sup_phi_exceeds_half_sigma = false;  // hard requirement when not degenerate
  // first-order residuals at the maximizer (rhs - c_n of the two case bounds)
  double residual_s = 0.0;  // 2 C_n (k0/n - s0) - tr(Sigma D^2 u(x0,s0))/2 - c_n
  double residual_k = 0.0;  // n [u_n(x0,k0/n) - u_n(x0,(k0-1)/n)] - 2 C_n (k0/n - s0) + C_n/n - c_n
  bool residual_k_defined = false;  // needs k0 >= 1
  double hess_trace_scheme = 0.0;   // tr(Sigma D^2 u_n) at (x0, k0/n)
  double hess_trace_heat = 0.0;     // tr(Sigma D^2 u)   at (x0, s0)
  TailBound tail;
};

// Exact evaluation only: lattice steps, or Gaussian steps (where the walk
// marginal at every k/n is N(0, (k/n) Sigma) exactly and the gap vanishes).
DoublingReport doubling_explore(const TestFunctionPtr& f, const StepDistribution& dist, int n,
                                const HeatReference& ref,
                                const std::optional<BoxSpec>& box = std::nullopt,
                                double degenerate_tol = 1e-9, int jobs = 1);

// ---------------------------------------------------------------------------
// Rate certificate at (x,t) = (0,1): gap_n * n^{gamma/2} / E|X|^{2+gamma}
// should stay bounded along the schedule.
struct RateCertRow {
  int n = 0;
  double gap = 0.0;
  double stderr_ = 0.0;
  double constant = 0.0;  // gap * n^{gamma/2} / moment
};

struct RateCertReport {
  double gamma = 0.0;
  double moment = 0.0;  // E|X|^{2+gamma}
  bool monte_carlo = false;
  std::vector<RateCertRow> rows;
  bool bounded = false;
  std::string verdict;
};

RateCertReport rate_certificate(const TestFunctionPtr& f, const StepDistribution& dist,
                                const HeatReference& ref, const std::vector<int>& ns, double gamma,
                                std::int64_t mc_samples = 0, std::uint64_t seed = 1, int jobs = 1);

}  // namespace cltlab::verify
