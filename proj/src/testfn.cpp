#include "cltlab/testfn.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "cltlab/quadrature.hpp"

namespace cltlab::testfn {

using nlohmann::json;

const char* decay_name(Decay d) {
  switch (d) {
    case Decay::vanishing:
      return "vanishing";
    case Decay::bounded_uc:
      return "bounded-uniformly-continuous";
    case Decay::test_only_nondecaying:
      return "test-only-nondecaying";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// radial envelopes: bound(R) = scale * sum_m hat[m] * sup_{r>=R} r^m e^{-lam r^2/2}

namespace {

double radial_term_sup(int m, double lam, double R) {
  if (m == 0) return std::exp(-0.5 * lam * R * R);
  double rstar = std::sqrt(m / lam);
  double r = std::max(R, rstar);
  return std::pow(r, m) * std::exp(-0.5 * lam * r * r);
}

double envelope_sup(const std::vector<double>& hat, double lam, double R) {
  double b = 0;
  for (std::size_t m = 0; m < hat.size(); ++m)
    if (hat[m] != 0.0) b += hat[m] * radial_term_sup(static_cast<int>(m), lam, R);
  return b;
}

// coefficient-wise: c <- max(c, other), padding with zeros
void hat_max_in(std::vector<double>& c, const std::vector<double>& other) {
  if (other.size() > c.size()) c.resize(other.size(), 0.0);
  for (std::size_t i = 0; i < other.size(); ++i) c[i] = std::max(c[i], other[i]);
}

std::vector<double> hat_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

double binom(int n, int k) {
  double r = 1;
  for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
  return r;
}

// probabilists' Hermite He_m, and |coefficient| envelopes
double hermite_he(int m, double x) {
  switch (m) {
    case 0:
      return 1;
    case 1:
      return x;
    case 2:
      return x * x - 1;
    case 3:
      return x * (x * x - 3);
    case 4:
      return x * x * (x * x - 6) + 3;
  }
  throw std::logic_error("hermite_he: order out of range");
}

const std::vector<double>& hermite_abs_coeffs(int m) {
  static const std::vector<double> tab[5] = {
      {1}, {0, 1}, {1, 0, 1}, {0, 3, 0, 1}, {3, 0, 6, 0, 1}};
  return tab[m];
}

}  // namespace

// ---------------------------------------------------------------------------
// TestFunction: jets, certified norms

void TestFunction::eval_jet(std::span<const double> x, int order, Jet& out) const {
  if (order < 0 || order > 2) throw std::invalid_argument("eval_jet: order must be 0..2");
  std::vector<int> a(d_, 0);
  out.f = deriv(MultiIndex(a), x);
  if (order >= 1)
    for (int i = 0; i < d_; ++i) {
      a.assign(d_, 0);
      a[i] = 1;
      out.grad[i] = deriv(MultiIndex(a), x);
    }
  if (order >= 2)
    for (int i = 0; i < d_; ++i)
      for (int j = i; j < d_; ++j) {
        a.assign(d_, 0);
        a[i] += 1;
        a[j] += 1;
        out.hess[Jet::hess_index(i, j)] = deriv(MultiIndex(a), x);
      }
}

namespace {

// |d^alpha f| maximized over the box [-R,R]^d with the given step
std::pair<double, std::array<double, kMaxDim>> box_scan(const TestFunction& f,
                                                        const MultiIndex& alpha, double R,
                                                        double step) {
  Grid grid(f.dim(), R, step);
  double best = -1;
  std::array<double, kMaxDim> arg{};
  double x[kMaxDim];
  const std::size_t total = grid.size();
  for (std::size_t g = 0; g < total; ++g) {
    grid.coords(g, x);
    double v = std::abs(f.deriv(alpha, std::span<const double>(x, static_cast<std::size_t>(f.dim()))));
    if (v > best) {
      best = v;
      for (int i = 0; i < f.dim(); ++i) arg[i] = x[i];
    }
  }
  return {best, arg};
}

}  // namespace

NormCertificate TestFunction::certify_sup(const MultiIndex& alpha) const {
  if (alpha.dim != d_) throw std::invalid_argument("sup certificate: dimension mismatch");
  for (int i = 0; i < d_; ++i)
    if (alpha[i] < 0) throw std::invalid_argument("sup certificate: negative multi-index");
  if (alpha.order() > kMaxDerivOrder)
    throw std::invalid_argument("sup certificate: derivative order exceeds 4");
  if (auto exact = exact_sup(alpha)) return {*exact, 0.0};

  const int ord = alpha.order();
  double R = std::max(scale_hint_, 1.0);
  double coarse_max = 0.0;
  for (int iter = 0; iter < 80; ++iter) {
    double tb = tail_sup_bound(ord, R);
    if (std::isinf(tb)) return {kInf, 0.0};
    coarse_max = box_scan(*this, alpha, R, std::max(0.05, R / 200.0)).first;
    if (tb <= coarse_max || tb <= 1e-300 || R > 1e5) break;
    R *= 1.4;
  }

  const double h = d_ == 1 ? 1e-3 : (d_ == 2 ? 1e-2 : 5e-2);
  auto [value, arg] = box_scan(*this, alpha, R, h);

  // golden refinement around the grid argmax, one axis at a time
  auto eval_at = [&](const std::array<double, kMaxDim>& p) {
    return std::abs(deriv(alpha, std::span<const double>(p.data(), static_cast<std::size_t>(d_))));
  };
  for (int round = 0; round < 2; ++round)
    for (int axis = 0; axis < d_; ++axis) {
      auto line = [&](double v) {
        std::array<double, kMaxDim> p = arg;
        p[axis] = v;
        return eval_at(p);
      };
      auto [xm, fm] = golden_max(line, arg[axis] - h, arg[axis] + h, 1e-12);
      if (fm > value) {
        value = fm;
        arg[axis] = xm;
      }
    }

  // excess bound: local curvature over one cell, plus any tail leftover
  double curv = 0.0;
  for (int axis = 0; axis < d_; ++axis) {
    std::array<double, kMaxDim> pp = arg, pm = arg;
    pp[axis] += h;
    pm[axis] -= h;
    curv += std::abs(eval_at(pp) - 2.0 * value + eval_at(pm)) / (h * h);
  }
  double slack = 0.25 * curv * h * h + 1e-13 * (1.0 + value);
  double tb = tail_sup_bound(ord, R);
  if (tb > value) slack += tb - value;
  return {value, slack};
}

NormCertificate TestFunction::sup_certificate(const MultiIndex& alpha) const {
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    for (const auto& [a, c] : sup_cache_)
      if (a == alpha) return c;
  }
  NormCertificate c = certify_sup(alpha);
  std::lock_guard<std::mutex> lock(cache_mutex_);
  for (const auto& [a, cached] : sup_cache_)
    if (a == alpha) return cached;
  sup_cache_.emplace_back(alpha, c);
  return c;
}

NormCertificate TestFunction::ck_certificate(int k) const {
  if (k < 0 || k > kMaxDerivOrder) throw std::invalid_argument("ck_norm: k must be 0..4");
  KahanSum value, slack;
  for (const MultiIndex& alpha : multi_indices(d_, 0, k)) {
    NormCertificate c = sup_certificate(alpha);
    if (std::isinf(c.value)) return {kInf, 0.0};
    value.add(c.value);
    slack.add(c.slack);
  }
  return {value.value(), slack.value()};
}

double TestFunction::ck_norm(int k) const { return ck_certificate(k).value; }

int TestFunction::smoothness_class() const {
  for (int k = 0; k <= kMaxDerivOrder; ++k)
    if (std::isinf(ck_norm(k))) return k - 1;
  return kMaxDerivOrder;
}

double TestFunction::vanishing_radius(double eps) const {
  if (decay_ != Decay::vanishing)
    throw std::domain_error("vanishing_radius: function does not vanish at infinity");
  if (!(eps > 0)) throw std::invalid_argument("vanishing_radius: eps must be > 0");
  double R = std::max(scale_hint_, 1.0);
  while (tail_sup_bound(0, R) > eps) {
    R *= 1.2;
    if (R > 1e6) throw std::runtime_error("vanishing_radius: no radius certified below eps");
  }
  return R;
}

// ---------------------------------------------------------------------------
// GaussQuadform

GaussQuadform::GaussQuadform(std::string name, double c, const SymMat& a)
    : TestFunction(std::move(name), a.dim(), Decay::vanishing,
                   4.0 / std::sqrt(std::max(a.lambda_min(), 1e-300))),
      c_(c),
      a_(a) {
  if (!a.is_symmetric(1e-12)) throw std::invalid_argument("gauss quadform: A not symmetric");
  a.cholesky();  // SPD gate
  lam_min_ = a.lambda_min();
  const int d = dim();

  using Key = std::array<int, kMaxDim>;
  auto poly_derive = [&](const Poly& p, int axis) {
    std::map<Key, double> acc;
    for (const Term& t : p) {
      if (t.e[axis] > 0) {
        Key e = t.e;
        e[axis] -= 1;
        acc[e] += t.coef * (t.e[axis]);
      }
      for (int j = 0; j < d; ++j) {
        if (a_(axis, j) == 0.0) continue;
        Key e = t.e;
        e[j] += 1;
        acc[e] -= t.coef * a_(axis, j);
      }
    }
    Poly out;
    for (const auto& [e, coef] : acc)
      if (coef != 0.0) out.push_back({e, coef});
    return out;
  };

  for (const MultiIndex& alpha : multi_indices(d, 0, kMaxDerivOrder)) {
    if (alpha.order() == 0) {
      polys_.emplace_back(alpha, Poly{{{0, 0, 0}, 1.0}});
      continue;
    }
    int axis = 0;
    while (alpha[axis] == 0) ++axis;
    MultiIndex parent = alpha;
    parent.a[axis] -= 1;
    const Poly* pp = nullptr;
    for (const auto& [idx, poly] : polys_)
      if (idx == parent) pp = &poly;
    polys_.emplace_back(alpha, poly_derive(*pp, axis));
  }

  for (auto& h : hat_) h.assign(1, 0.0);
  for (const auto& [alpha, poly] : polys_) {
    std::vector<double> hp(1, 0.0);
    for (const Term& t : poly) {
      std::size_t deg = static_cast<std::size_t>(t.e[0] + t.e[1] + t.e[2]);
      if (hp.size() <= deg) hp.resize(deg + 1, 0.0);
      hp[deg] += std::abs(t.coef);
    }
    hat_max_in(hat_[alpha.order()], hp);
  }
}

double GaussQuadform::deriv(const MultiIndex& alpha, std::span<const double> x) const {
  if (alpha.dim != dim()) throw std::invalid_argument("deriv: dimension mismatch");
  if (alpha.order() > kMaxDerivOrder)
    throw std::invalid_argument("deriv: order exceeds the supported 4");
  const Poly* poly = nullptr;
  for (const auto& [idx, p] : polys_)
    if (idx == alpha) poly = &p;
  if (!poly) throw std::invalid_argument("deriv: negative multi-index entry");
  double q = a_.quadform(x);
  double e = c_ * std::exp(-0.5 * q);
  double s = 0;
  for (const Term& t : *poly) {
    double v = t.coef;
    for (int i = 0; i < dim(); ++i)
      for (int k = 0; k < t.e[i]; ++k) v *= x[i];
    s += v;
  }
  return s * e;
}

void GaussQuadform::eval_jet(std::span<const double> x, int order, Jet& out) const {
  if (order < 0 || order > 2) throw std::invalid_argument("eval_jet: order must be 0..2");
  const int d = dim();
  double ax[kMaxDim];
  a_.mul(x, ax);
  double q = 0;
  for (int i = 0; i < d; ++i) q += x[i] * ax[i];
  double f = c_ * std::exp(-0.5 * q);
  out.f = f;
  if (order >= 1)
    for (int i = 0; i < d; ++i) out.grad[i] = -ax[i] * f;
  if (order >= 2)
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j)
        out.hess[Jet::hess_index(i, j)] = (ax[i] * ax[j] - a_(i, j)) * f;
}

double GaussQuadform::tail_sup_bound(int order, double R) const {
  if (order < 0 || order > kMaxDerivOrder)
    throw std::invalid_argument("tail_sup_bound: order must be 0..4");
  return std::abs(c_) * envelope_sup(hat_[order], lam_min_, R);
}

// ---------------------------------------------------------------------------
// SineBump

SineBump::SineBump(double omega, int d)
    : TestFunction("sine_bump", d, Decay::vanishing, 4.0 + omega), omega_(omega) {
  if (!(omega > 0)) throw std::invalid_argument("sine_bump: omega must be > 0");
  for (auto& h : hat_) h.assign(1, 0.0);
  for (const MultiIndex& alpha : multi_indices(d, 0, kMaxDerivOrder)) {
    // axis 1 envelope: sum_j C(k,j) w^j |He_{k-j}|-hat
    int k = alpha[0];
    std::vector<double> h0(1, 0.0);
    for (int j = 0; j <= k; ++j) {
      std::vector<double> c = hermite_abs_coeffs(k - j);
      double w = binom(k, j) * std::pow(omega_, j);
      for (double& v : c) v *= w;
      if (c.size() > h0.size()) h0.resize(c.size(), 0.0);
      for (std::size_t i = 0; i < c.size(); ++i) h0[i] += c[i];
    }
    std::vector<double> hp = h0;
    for (int i = 1; i < d; ++i) hp = hat_mul(hp, hermite_abs_coeffs(alpha[i]));
    hat_max_in(hat_[alpha.order()], hp);
  }
}

double SineBump::deriv(const MultiIndex& alpha, std::span<const double> x) const {
  if (alpha.dim != dim()) throw std::invalid_argument("deriv: dimension mismatch");
  if (alpha.order() > kMaxDerivOrder)
    throw std::invalid_argument("deriv: order exceeds the supported 4");
  for (int i = 0; i < dim(); ++i)
    if (alpha[i] < 0) throw std::invalid_argument("deriv: negative multi-index entry");
  const int k = alpha[0];
  double phase[4] = {std::sin(omega_ * x[0]), std::cos(omega_ * x[0]), -std::sin(omega_ * x[0]),
                     -std::cos(omega_ * x[0])};
  double axis0 = 0;
  for (int j = 0; j <= k; ++j) {
    int m = k - j;
    double sgn = (m % 2 == 0) ? 1.0 : -1.0;
    axis0 += binom(k, j) * std::pow(omega_, j) * phase[j % 4] * sgn * hermite_he(m, x[0]);
  }
  double v = axis0;
  double q = x[0] * x[0];
  for (int i = 1; i < dim(); ++i) {
    int m = alpha[i];
    double sgn = (m % 2 == 0) ? 1.0 : -1.0;
    v *= sgn * hermite_he(m, x[i]);
    q += x[i] * x[i];
  }
  return v * std::exp(-0.5 * q);
}

void SineBump::eval_jet(std::span<const double> x, int order, Jet& out) const {
  if (order < 0 || order > 2) throw std::invalid_argument("eval_jet: order must be 0..2");
  const int d = dim();
  double q = 0;
  for (int i = 0; i < d; ++i) q += x[i] * x[i];
  double env = std::exp(-0.5 * q);
  double s = std::sin(omega_ * x[0]), c = std::cos(omega_ * x[0]);
  out.f = s * env;
  if (order >= 1) {
    out.grad[0] = (omega_ * c - x[0] * s) * env;
    for (int i = 1; i < d; ++i) out.grad[i] = -x[i] * s * env;
  }
  if (order >= 2) {
    out.hess[Jet::hess_index(0, 0)] =
        (-omega_ * omega_ * s - 2.0 * omega_ * x[0] * c + (x[0] * x[0] - 1.0) * s) * env;
    for (int i = 1; i < d; ++i) {
      out.hess[Jet::hess_index(0, i)] = -x[i] * (omega_ * c - x[0] * s) * env;
      out.hess[Jet::hess_index(i, i)] = (x[i] * x[i] - 1.0) * s * env;
      for (int j = i + 1; j < d; ++j) out.hess[Jet::hess_index(i, j)] = x[i] * x[j] * s * env;
    }
  }
}

double SineBump::tail_sup_bound(int order, double R) const {
  if (order < 0 || order > kMaxDerivOrder)
    throw std::invalid_argument("tail_sup_bound: order must be 0..4");
  return envelope_sup(hat_[order], 1.0, R);
}

// ---------------------------------------------------------------------------
// Poly2

Poly2::Poly2(std::string name, double c0, std::vector<double> b, const SymMat& q)
    : TestFunction(std::move(name), q.dim(),
                   (std::all_of(b.begin(), b.end(), [](double v) { return v == 0.0; }) &&
                    [&q] {
                      for (int i = 0; i < q.dim(); ++i)
                        for (int j = 0; j < q.dim(); ++j)
                          if (q(i, j) != 0.0) return false;
                      return true;
                    }())
                       ? Decay::bounded_uc
                       : Decay::test_only_nondecaying,
                   3.0),
      c0_(c0),
      b_(std::move(b)),
      q_(q) {
  if (static_cast<int>(b_.size()) != q.dim())
    throw std::invalid_argument("poly2: b/Q dimension mismatch");
  if (!q.is_symmetric(1e-12)) throw std::invalid_argument("poly2: Q not symmetric");
}

bool Poly2::is_constant() const {
  if (std::any_of(b_.begin(), b_.end(), [](double v) { return v != 0.0; })) return false;
  for (int i = 0; i < dim(); ++i)
    for (int j = 0; j < dim(); ++j)
      if (q_(i, j) != 0.0) return false;
  return true;
}

double Poly2::deriv(const MultiIndex& alpha, std::span<const double> x) const {
  if (alpha.dim != dim()) throw std::invalid_argument("deriv: dimension mismatch");
  if (alpha.order() > kMaxDerivOrder)
    throw std::invalid_argument("deriv: order exceeds the supported 4");
  for (int i = 0; i < dim(); ++i)
    if (alpha[i] < 0) throw std::invalid_argument("deriv: negative multi-index entry");
  switch (alpha.order()) {
    case 0:
      return c0_ + [&] {
        double s = 0;
        for (int i = 0; i < dim(); ++i) s += b_[i] * x[i];
        return s + 0.5 * q_.quadform(x);
      }();
    case 1: {
      int i = 0;
      while (alpha[i] == 0) ++i;
      double s = b_[i];
      for (int j = 0; j < dim(); ++j) s += q_(i, j) * x[j];
      return s;
    }
    case 2: {
      int i = 0;
      while (alpha[i] == 0) ++i;
      if (alpha[i] == 2) return q_(i, i);
      int j = i + 1;
      while (alpha[j] == 0) ++j;
      return q_(i, j);
    }
    default:
      return 0.0;
  }
}

void Poly2::eval_jet(std::span<const double> x, int order, Jet& out) const {
  if (order < 0 || order > 2) throw std::invalid_argument("eval_jet: order must be 0..2");
  const int d = dim();
  double qx[kMaxDim];
  q_.mul(x, qx);
  double s = c0_;
  for (int i = 0; i < d; ++i) s += b_[i] * x[i] + 0.5 * x[i] * qx[i];
  out.f = s;
  if (order >= 1)
    for (int i = 0; i < d; ++i) out.grad[i] = b_[i] + qx[i];
  if (order >= 2)
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) out.hess[Jet::hess_index(i, j)] = q_(i, j);
}

std::optional<double> Poly2::exact_sup(const MultiIndex& alpha) const {
  switch (alpha.order()) {
    case 0:
      return is_constant() ? std::abs(c0_) : kInf;
    case 1: {
      int i = 0;
      while (alpha[i] == 0) ++i;
      for (int j = 0; j < dim(); ++j)
        if (q_(i, j) != 0.0) return kInf;
      return std::abs(b_[i]);
    }
    case 2: {
      int i = 0;
      while (alpha[i] == 0) ++i;
      if (alpha[i] == 2) return std::abs(q_(i, i));
      int j = i + 1;
      while (alpha[j] == 0) ++j;
      return std::abs(q_(i, j));
    }
    default:
      return 0.0;
  }
}

double Poly2::tail_sup_bound(int order, double R) const {
  (void)R;
  if (order < 0 || order > kMaxDerivOrder)
    throw std::invalid_argument("tail_sup_bound: order must be 0..4");
  if (order >= 3) return 0.0;
  double m = 0;
  for (const MultiIndex& alpha : multi_indices(dim(), order, order))
    m = std::max(m, *exact_sup(alpha));
  return m;
}

// ---------------------------------------------------------------------------
// factory

namespace {

void reject_unknown_params(const json& params, std::initializer_list<const char*> known,
                           const std::string& family) {
  if (params.is_null()) return;
  for (auto it = params.begin(); it != params.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok)
      throw std::invalid_argument("test function " + family + ": unknown parameter '" + it.key() +
                                  "'");
  }
}

double number_param(const json& params, const char* key, double dflt) {
  if (params.is_null() || !params.contains(key)) return dflt;
  if (!params[key].is_number())
    throw std::invalid_argument(std::string("test function parameter '") + key +
                                "' must be a number");
  return params[key].get<double>();
}

int int_param(const json& params, const char* key, int dflt) {
  if (params.is_null() || !params.contains(key)) return dflt;
  if (!params[key].is_number_integer())
    throw std::invalid_argument(std::string("test function parameter '") + key +
                                "' must be an integer");
  return params[key].get<int>();
}

}  // namespace

TestFunctionPtr make_test_function(const std::string& name, const json& params) {
  if (!params.is_object() && !params.is_null())
    throw std::invalid_argument("test function params must be an object");
  if (name == "gauss_bump") {
    reject_unknown_params(params, {"a", "d"}, name);
    double a = number_param(params, "a", 1.0);
    int d = int_param(params, "d", 1);
    if (!(a > 0)) throw std::invalid_argument("gauss_bump: a must be > 0");
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("gauss_bump: d must be 1..3");
    return std::make_shared<GaussQuadform>("gauss_bump", 1.0, SymMat::scalar(d, 1.0 / (a * a)));
  }
  if (name == "sine_bump") {
    reject_unknown_params(params, {"omega", "d"}, name);
    double omega = number_param(params, "omega", 1.0);
    int d = int_param(params, "d", 1);
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("sine_bump: d must be 1..3");
    return std::make_shared<SineBump>(omega, d);
  }
  if (name == "tensor_bump") {
    reject_unknown_params(params, {"a"}, name);
    if (params.is_null() || !params.contains("a") || !params["a"].is_array())
      throw std::invalid_argument("tensor_bump: parameter 'a' must be an array of widths");
    const json& arr = params["a"];
    int d = static_cast<int>(arr.size());
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("tensor_bump: need 1..3 widths");
    SymMat a(d);
    for (int i = 0; i < d; ++i) {
      double w = arr[i].get<double>();
      if (!(w > 0)) throw std::invalid_argument("tensor_bump: widths must be > 0");
      a(i, i) = 1.0 / (w * w);
    }
    return std::make_shared<GaussQuadform>("tensor_bump", 1.0, a);
  }
  if (name == "quadratic") {
    reject_unknown_params(params, {"c0", "b", "Q"}, name);
    double c0 = number_param(params, "c0", 0.0);
    std::vector<double> b{0.0};
    if (!params.is_null() && params.contains("b")) b = params["b"].get<std::vector<double>>();
    int d = static_cast<int>(b.size());
    SymMat q(d);
    if (!params.is_null() && params.contains("Q")) {
      const json& m = params["Q"];
      if (static_cast<int>(m.size()) != d)
        throw std::invalid_argument("quadratic: Q/b dimension mismatch");
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) q(i, j) = m[i][j].get<double>();
    } else if (params.is_null() || !params.contains("b")) {
      q(0, 0) = 2.0;  // default: f(x) = x^2
    }
    return std::make_shared<Poly2>("quadratic", c0, std::move(b), q);
  }
  if (name == "constant") {
    reject_unknown_params(params, {"c", "d"}, name);
    double c = number_param(params, "c", 1.0);
    int d = int_param(params, "d", 1);
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("constant: d must be 1..3");
    return std::make_shared<Poly2>("constant", c, std::vector<double>(d, 0.0), SymMat(d));
  }
  throw std::invalid_argument("unknown test function '" + name + "'");
}

TestFunctionPtr make_test_function(const std::string& name) {
  return make_test_function(name, json());
}

// ---------------------------------------------------------------------------
// mollification / heat transform

namespace {

class MollifiedFn : public TestFunction {
 public:
  MollifiedFn(TestFunctionPtr base, double t, const SymMat& sigma, int order)
      : TestFunction(base->name() + ".mollified", base->dim(),
                     base->decay() == Decay::vanishing ? Decay::vanishing : Decay::bounded_uc,
                     4.0 + 3.0 * std::sqrt(t * sigma.lambda_max_abs())),
        base_(std::move(base)),
        t_(t),
        lam_max_(sigma.lambda_max_abs()),
        ge_(sigma, order) {}

  double deriv(const MultiIndex& alpha, std::span<const double> x) const override {
    if (alpha.order() > kMaxDerivOrder)
      throw std::invalid_argument("deriv: order exceeds the supported 4");
    return ge_.expect(x, t_,
                      [&](std::span<const double> p) { return base_->deriv(alpha, p); });
  }

  double tail_sup_bound(int order, double R) const override {
    double rho = 0.5 * R;
    double tail_prob =
        std::min(1.0, dim() * std::exp(-rho * rho / (2.0 * dim() * t_ * lam_max_)));
    return base_->tail_sup_bound(order, R - rho) + base_->tail_sup_bound(order, 0.0) * tail_prob;
  }

  // quadrature self-check hook used by the heat module
  double quad_check(std::span<const double> x) const {
    auto g = [&](std::span<const double> p) { return base_->value(p); };
    return std::abs(ge_.expect(x, t_, g) - ge_.expect_check(x, t_, g));
  }

 private:
  TestFunctionPtr base_;
  double t_;
  double lam_max_;
  GaussianExpectation ge_;
};

}  // namespace

TestFunctionPtr heat_slice(const TestFunctionPtr& f, double t, const SymMat& sigma,
                           int quad_order) {
  if (!f) throw std::invalid_argument("heat_slice: null function");
  if (t < 0) throw std::invalid_argument("heat_slice: t must be >= 0");
  if (sigma.dim() != f->dim()) throw std::invalid_argument("heat_slice: dimension mismatch");
  sigma.cholesky();  // SPD gate
  if (t == 0) return f;

  if (auto gq = std::dynamic_pointer_cast<const GaussQuadform>(f)) {
    // exp(-x'Ax/2) * N(0,tS) kernel -> det(I+tSA)^{-1/2} exp(-x'(A^{-1}+tS)^{-1}x/2)
    SymMat ainv = gq->quadform().inverse_spd();
    SymMat m = ainv.plus(sigma.scaled(t));
    SymMat anew = m.inverse_spd();
    double det = m.det_spd() * gq->quadform().det_spd();
    double cnew = gq->coefficient() / std::sqrt(det);
    return std::make_shared<GaussQuadform>(gq->name() + ".heat", cnew, anew);
  }
  if (auto p2 = std::dynamic_pointer_cast<const Poly2>(f)) {
    // E[f(x+Z)] = f(x) + t tr(Q Sigma)/2 for degree <= 2
    std::vector<double> b(static_cast<std::size_t>(p2->dim()));
    double shift = 0.5 * t * trace_product(p2->q(), sigma);
    for (int i = 0; i < p2->dim(); ++i) {
      std::vector<int> a(p2->dim(), 0);
      a[i] = 1;
      std::vector<double> origin(static_cast<std::size_t>(p2->dim()), 0.0);
      b[static_cast<std::size_t>(i)] = p2->deriv(MultiIndex(a), origin);
    }
    return std::make_shared<Poly2>(p2->name() + ".heat", p2->c0() + shift, std::move(b),
                                   p2->q());
  }
  return std::make_shared<MollifiedFn>(f, t, sigma, quad_order);
}

TestFunctionPtr mollify(const TestFunctionPtr& f, double t, const SymMat& sigma, int quad_order) {
  if (!f) throw std::invalid_argument("mollify: null function");
  if (!(t > 0)) throw std::invalid_argument("mollify: t must be > 0");
  bool bounded = f->decay() != Decay::test_only_nondecaying;
  if (!bounded)
    if (auto p2 = std::dynamic_pointer_cast<const Poly2>(f); p2 && p2->is_constant())
      bounded = true;
  if (!bounded) throw std::invalid_argument("mollify: f must be bounded");
  return heat_slice(f, t, sigma, quad_order);
}

}  // namespace cltlab::testfn
