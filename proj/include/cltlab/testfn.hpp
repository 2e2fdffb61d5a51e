#pragma once

#include <array>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cltlab/linalg.hpp"
#include "cltlab/multiindex.hpp"
#include "cltlab/numeric.hpp"

namespace cltlab::testfn {

enum class Decay { vanishing, bounded_uc, test_only_nondecaying };

const char* decay_name(Decay d);

// Value, gradient and packed upper-triangular Hessian at a point.
// Hessian packing for d<=3: (0,0),(0,1),(0,2),(1,1),(1,2),(2,2).
struct Jet {
  double f = 0.0;
  std::array<double, kMaxDim> grad{};
  std::array<double, 6> hess{};

  static int hess_index(int i, int j) {
    static constexpr int idx[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
    return idx[i][j];
  }
  double hess_trace(int d) const {
    double t = hess[0];
    if (d >= 2) t += hess[3];
    if (d >= 3) t += hess[5];
    return t;
  }
  double hess_trace_weighted(const SymMat& w) const {
    double t = 0;
    for (int i = 0; i < w.dim(); ++i)
      for (int j = 0; j < w.dim(); ++j) t += w(i, j) * hess[hess_index(i, j)];
    return t;
  }
};

// Certified sup estimate: grid maximum after local refinement, plus a bound
// on how far the true sup can exceed it.
struct NormCertificate {
  double value = 0.0;
  double slack = 0.0;
};

// A test function f: R^d -> R with analytic partial derivatives to order 4,
// certified C^k norms and a decay classification.
class TestFunction {
 public:
  virtual ~TestFunction() = default;

  const std::string& name() const { return name_; }
  int dim() const { return d_; }
  Decay decay() const { return decay_; }

  // Highest derivative order the analytic evaluator supports.
  int analytic_order() const { return kMaxDerivOrder; }
  // Largest k <= 4 with finite C^k norm, or -1 when even ||f||_inf = inf.
  int smoothness_class() const;

  double value(std::span<const double> x) const {
    return deriv(MultiIndex(std::vector<int>(d_, 0)), x);
  }
  virtual double deriv(const MultiIndex& alpha, std::span<const double> x) const = 0;

  // f, Df, D^2f in one pass; order in {0,1,2}.
  virtual void eval_jet(std::span<const double> x, int order, Jet& out) const;

  // ||f||_{C^k} = sum over |alpha| <= k of certified sup |d^alpha f|.
  double ck_norm(int k) const;
  NormCertificate ck_certificate(int k) const;
  // certified sup |d^alpha f| for one multi-index
  NormCertificate sup_certificate(const MultiIndex& alpha) const;

  // Upper bound for sup over |x| >= R of max_{|alpha| = order} |d^alpha f(x)|.
  // R = 0 bounds the global sup. May be +inf.
  virtual double tail_sup_bound(int order, double R) const = 0;

  // Smallest radius (within search limits) with tail_sup_bound(0, R) <= eps.
  double vanishing_radius(double eps) const;

 protected:
  TestFunction(std::string name, int d, Decay decay, double scale_hint)
      : name_(std::move(name)), d_(d), decay_(decay), scale_hint_(scale_hint) {}

  // Known-exact sup for one multi-index (polynomials); nullopt -> certify by grid.
  virtual std::optional<double> exact_sup(const MultiIndex&) const { return std::nullopt; }

  double scale_hint() const { return scale_hint_; }

 private:
  NormCertificate certify_sup(const MultiIndex& alpha) const;

  std::string name_;
  int d_;
  Decay decay_;
  double scale_hint_;

  mutable std::mutex cache_mutex_;
  mutable std::vector<std::pair<MultiIndex, NormCertificate>> sup_cache_;
};

using TestFunctionPtr = std::shared_ptr<const TestFunction>;

// f(x) = c * exp(-x'Ax/2), A symmetric positive definite. Covers the
// gauss_bump family, tensor bumps, and closed-form heat/mollification images.
class GaussQuadform : public TestFunction {
 public:
  GaussQuadform(std::string name, double c, const SymMat& a);

  double coefficient() const { return c_; }
  const SymMat& quadform() const { return a_; }

  double deriv(const MultiIndex& alpha, std::span<const double> x) const override;
  void eval_jet(std::span<const double> x, int order, Jet& out) const override;
  double tail_sup_bound(int order, double R) const override;

 private:
  struct Term {
    std::array<int, kMaxDim> e;
    double coef;
  };
  using Poly = std::vector<Term>;

  double c_;
  SymMat a_;
  double lam_min_;
  std::vector<std::pair<MultiIndex, Poly>> polys_;  // d^alpha f = c * p_alpha * exp(-q/2)
  std::array<std::vector<double>, kMaxDerivOrder + 1> hat_;  // radial envelope coeffs per order
};

// f(x) = sin(w x_1) * exp(-|x|^2/2)
class SineBump : public TestFunction {
 public:
  SineBump(double omega, int d);

  double deriv(const MultiIndex& alpha, std::span<const double> x) const override;
  void eval_jet(std::span<const double> x, int order, Jet& out) const override;
  double tail_sup_bound(int order, double R) const override;

 private:
  double omega_;
  std::array<std::vector<double>, kMaxDerivOrder + 1> hat_;
};

// Test-only polynomial f(x) = c0 + b'x + x'Qx/2 (degree <= 2). Used for
// oracle identities; nonconstant ones have infinite sup norms.
class Poly2 : public TestFunction {
 public:
  Poly2(std::string name, double c0, std::vector<double> b, const SymMat& q);

  double c0() const { return c0_; }
  const SymMat& q() const { return q_; }
  bool is_constant() const;

  double deriv(const MultiIndex& alpha, std::span<const double> x) const override;
  void eval_jet(std::span<const double> x, int order, Jet& out) const override;
  double tail_sup_bound(int order, double R) const override;

 protected:
  std::optional<double> exact_sup(const MultiIndex& alpha) const override;

 private:
  double c0_;
  std::vector<double> b_;
  SymMat q_;
};

// Catalog: gauss_bump{a,d} | sine_bump{omega,d} | tensor_bump{a:[..]} |
// quadratic{c0,b,Q} | constant{c,d}.
TestFunctionPtr make_test_function(const std::string& name, const nlohmann::json& params);
TestFunctionPtr make_test_function(const std::string& name);

// f^t = u_f(.,t): Gaussian mollification with kernel N(0, t*Sigma).
// Closed form for the Gaussian-quadform family and for degree<=2 polynomials;
// otherwise Gauss-Hermite quadrature evaluators for f^t and its derivatives.
// Requires bounded f.
TestFunctionPtr mollify(const TestFunctionPtr& f, double t, const SymMat& sigma,
                        int quad_order = 64);

// Same transform without the boundedness gate: degree<=2 polynomials are
// admitted (their evolution is the classic polynomial solution). t = 0
// returns f itself.
TestFunctionPtr heat_slice(const TestFunctionPtr& f, double t, const SymMat& sigma,
                           int quad_order = 64);

}  // namespace cltlab::testfn
