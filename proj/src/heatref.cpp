#include "cltlab/heatref.hpp"

#include <cmath>
#include <stdexcept>

#include "cltlab/quadrature.hpp"

namespace cltlab::heat {

using testfn::Jet;
using testfn::TestFunctionPtr;

HeatReference::HeatReference(TestFunctionPtr f, const SymMat& sigma, int quad_order)
    : f_(std::move(f)), sigma_(sigma), quad_order_(quad_order) {
  if (!f_) throw std::invalid_argument("heat reference: null initial function");
  if (sigma_.dim() != f_->dim())
    throw std::invalid_argument("heat reference: covariance dimension mismatch");
  sigma_.cholesky();  // SPD gate
  if (quad_order_ < 2) throw std::invalid_argument("heat reference: quadrature order too small");
  closed_form_ =
      std::dynamic_pointer_cast<const testfn::GaussQuadform>(f_) != nullptr ||
      std::dynamic_pointer_cast<const testfn::Poly2>(f_) != nullptr;
}

TestFunctionPtr HeatReference::at_time(double t) const {
  if (t < 0) throw std::invalid_argument("heat reference: t must be >= 0");
  if (t == 0) return f_;
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = slices_.find(t);
    if (it != slices_.end()) return it->second;
  }
  TestFunctionPtr slice = testfn::heat_slice(f_, t, sigma_, quad_order_);
  if (!closed_form_) {
    double origin[kMaxDim] = {0, 0, 0};
    std::span<const double> x(origin, static_cast<std::size_t>(f_->dim()));
    double err = quadrature_error(x, t);
    if (err > 1e-7 * (1.0 + std::abs(slice->value(x))))
      throw std::runtime_error("heat reference: quadrature order insufficient (self-check)");
  }
  std::lock_guard<std::mutex> lock(cache_mutex_);
  if (slices_.size() > 8192) slices_.clear();
  return slices_.emplace(t, std::move(slice)).first->second;
}

double HeatReference::value(std::span<const double> x, double t) const {
  return at_time(t)->value(x);
}

double HeatReference::deriv(const MultiIndex& alpha, std::span<const double> x, double t) const {
  return at_time(t)->deriv(alpha, x);
}

void HeatReference::jet(std::span<const double> x, double t, int order, Jet& out) const {
  at_time(t)->eval_jet(x, order, out);
}

double HeatReference::hessian_trace(std::span<const double> x, double t) const {
  Jet j;
  at_time(t)->eval_jet(x, 2, j);
  return j.hess_trace(f_->dim());
}

double HeatReference::hessian_trace_sigma(std::span<const double> x, double t) const {
  Jet j;
  at_time(t)->eval_jet(x, 2, j);
  return j.hess_trace_weighted(sigma_);
}

double HeatReference::pde_residual(std::span<const double> x, double t, double h) const {
  if (!(h > 0)) throw std::invalid_argument("pde_residual: h must be > 0");
  if (!(t - h > 0)) throw std::invalid_argument("pde_residual: need t - h > 0");
  double dt = (value(x, t + h) - value(x, t - h)) / (2.0 * h);
  return std::abs(dt - 0.5 * hessian_trace_sigma(x, t));
}

double HeatReference::semigroup_gap(std::span<const double> x, double t, double h) const {
  if (t < 0 || h < 0) throw std::invalid_argument("semigroup_gap: t, h must be >= 0");
  TestFunctionPtr slice = at_time(t);
  GaussianExpectation ge(sigma_, quad_order_);
  double mixed = ge.expect(x, h, [&](std::span<const double> p) { return slice->value(p); });
  return std::abs(mixed - value(x, t + h));
}

double HeatReference::quadrature_error(std::span<const double> x, double t) const {
  if (closed_form_) return 0.0;
  if (t == 0) return 0.0;
  GaussianExpectation ge(sigma_, quad_order_);
  auto g = [&](std::span<const double> p) { return f_->value(p); };
  return std::abs(ge.expect(x, t, g) - ge.expect_check(x, t, g));
}

}  // namespace cltlab::heat
