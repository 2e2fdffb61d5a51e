#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>

#include "cltlab/linalg.hpp"
#include "cltlab/testfn.hpp"

namespace cltlab::heat {

// u(x,t) = E[f(x + sqrt(t) xi)], xi ~ N(0, Sigma). Solves du/dt = tr(Sigma D^2 u)/2
// with u(.,0) = f. Closed form for Gaussian-quadform and degree<=2 polynomial
// initial data; tensor Gauss-Hermite quadrature otherwise (d <= 3).
class HeatReference {
 public:
  HeatReference(testfn::TestFunctionPtr f, const SymMat& sigma, int quad_order = 64);

  const testfn::TestFunctionPtr& initial() const { return f_; }
  const SymMat& sigma() const { return sigma_; }
  bool closed_form() const { return closed_form_; }
  int quad_order() const { return quad_order_; }

  // u(.,t) as a function of x; cached per t. t = 0 returns f itself.
  testfn::TestFunctionPtr at_time(double t) const;

  double value(std::span<const double> x, double t) const;
  double deriv(const MultiIndex& alpha, std::span<const double> x, double t) const;
  void jet(std::span<const double> x, double t, int order, testfn::Jet& out) const;

  double hessian_trace(std::span<const double> x, double t) const;        // tr D^2 u
  double hessian_trace_sigma(std::span<const double> x, double t) const;  // tr(Sigma D^2 u)

  // |centered d/dt - tr(Sigma D^2 u)/2| at (x,t); requires t - h > 0.
  double pde_residual(std::span<const double> x, double t, double h) const;

  // |E[u(x + sqrt(h) xi, t)] - u(x, t+h)|: one-step semigroup defect.
  double semigroup_gap(std::span<const double> x, double t, double h) const;

  // Quadrature self-check: |value at full order - value at half order|.
  // Zero when the closed form is in use.
  double quadrature_error(std::span<const double> x, double t) const;

 private:
  testfn::TestFunctionPtr f_;
  SymMat sigma_;
  int quad_order_;
  bool closed_form_;

  mutable std::mutex cache_mutex_;
  mutable std::map<double, testfn::TestFunctionPtr> slices_;
};

}  // namespace cltlab::heat
