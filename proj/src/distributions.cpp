#include "cltlab/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cltlab/numeric.hpp"
#include "cltlab/quadrature.hpp"

namespace cltlab::distributions {

using nlohmann::json;

// ---------------------------------------------------------------------------
// LatticePmf

double LatticePmf::total_mass() const {
  KahanSum s;
  for (double m : mass) s.add(m);
  return s.value();
}

void LatticePmf::mean(double* mu) const {
  for (int i = 0; i < dim; ++i) {
    KahanSum s;
    for (std::size_t j = 0; j < points.size(); ++j)
      s.add(mass[j] * unit[i] * static_cast<double>(points[j][i]));
    mu[i] = s.value();
  }
}

SymMat LatticePmf::covariance() const {
  double mu[kMaxDim];
  mean(mu);
  SymMat c(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) {
      KahanSum s;
      for (std::size_t p = 0; p < points.size(); ++p) {
        double xi = unit[i] * static_cast<double>(points[p][i]) - mu[i];
        double xj = unit[j] * static_cast<double>(points[p][j]) - mu[j];
        s.add(mass[p] * xi * xj);
      }
      c(i, j) = s.value();
      c(j, i) = s.value();
    }
  return c;
}

LatticePmf LatticePmf::convolve(const LatticePmf& other) const {
  if (dim != other.dim) throw std::invalid_argument("pmf convolve: dimension mismatch");
  for (int i = 0; i < dim; ++i) {
    double scale = std::max({std::abs(unit[i]), std::abs(other.unit[i]), 1e-300});
    if (std::abs(unit[i] - other.unit[i]) > 1e-12 * scale)
      throw std::invalid_argument("pmf convolve: lattice units differ");
  }
  std::int64_t lo[kMaxDim] = {0, 0, 0}, hi[kMaxDim] = {0, 0, 0};
  for (int i = 0; i < dim; ++i) {
    std::int64_t amin = points[0][i], amax = points[0][i];
    for (const auto& p : points) {
      amin = std::min(amin, p[i]);
      amax = std::max(amax, p[i]);
    }
    std::int64_t bmin = other.points[0][i], bmax = other.points[0][i];
    for (const auto& p : other.points) {
      bmin = std::min(bmin, p[i]);
      bmax = std::max(bmax, p[i]);
    }
    lo[i] = amin + bmin;
    hi[i] = amax + bmax;
  }
  std::size_t cells = 1;
  for (int i = 0; i < dim; ++i) {
    std::int64_t span = hi[i] - lo[i] + 1;
    if (span > (std::int64_t{1} << 24)) throw std::invalid_argument("pmf convolve: span budget exceeded");
    cells *= static_cast<std::size_t>(span);
    if (cells > (std::size_t{1} << 24)) throw std::invalid_argument("pmf convolve: cell budget exceeded");
  }
  std::vector<double> acc(cells, 0.0);
  auto flatten = [&](const std::array<std::int64_t, kMaxDim>& a,
                     const std::array<std::int64_t, kMaxDim>& b) {
    std::size_t f = 0;
    for (int i = 0; i < dim; ++i)
      f = f * static_cast<std::size_t>(hi[i] - lo[i] + 1) +
          static_cast<std::size_t>(a[i] + b[i] - lo[i]);
    return f;
  };
  for (std::size_t pa = 0; pa < points.size(); ++pa)
    for (std::size_t pb = 0; pb < other.points.size(); ++pb)
      acc[flatten(points[pa], other.points[pb])] += mass[pa] * other.mass[pb];

  LatticePmf out;
  out.dim = dim;
  out.unit = unit;
  out.step_count = step_count + other.step_count;
  for (std::size_t f = 0; f < cells; ++f) {
    if (acc[f] == 0.0) continue;
    std::array<std::int64_t, kMaxDim> pt{0, 0, 0};
    std::size_t r = f;
    for (int i = dim - 1; i >= 0; --i) {
      std::size_t span = static_cast<std::size_t>(hi[i] - lo[i] + 1);
      pt[i] = lo[i] + static_cast<std::int64_t>(r % span);
      r /= span;
    }
    out.points.push_back(pt);
    out.mass.push_back(acc[f]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// StepDistribution

void StepDistribution::support_point(std::size_t j, double* x) const {
  for (int i = 0; i < d_; ++i) x[i] = unit_[i] * static_cast<double>(points_[j][i]);
}

double StepDistribution::max_support_norm() const {
  if (backend_ != Backend::lattice)
    throw std::invalid_argument("max_support_norm: lattice backend only");
  double m = 0;
  double x[kMaxDim];
  for (std::size_t j = 0; j < points_.size(); ++j) {
    support_point(j, x);
    double r2 = 0;
    for (int i = 0; i < d_; ++i) r2 += x[i] * x[i];
    m = std::max(m, std::sqrt(r2));
  }
  return m;
}

double StepDistribution::moment_abs(double p) const {
  if (p < 0) throw std::invalid_argument("moment_abs: p must be >= 0");
  if (p == 0) return 1.0;
  switch (backend_) {
    case Backend::lattice: {
      KahanSum s;
      double x[kMaxDim];
      for (std::size_t j = 0; j < points_.size(); ++j) {
        support_point(j, x);
        double r2 = 0;
        for (int i = 0; i < d_; ++i) r2 += x[i] * x[i];
        s.add(prob_[j] * std::pow(std::sqrt(r2), p));
      }
      return s.value();
    }
    case Backend::continuous:
      break;
  }
  switch (family_) {
    case ContinuousFamily::uniform:
      return std::pow(par_a_, p) / (p + 1.0);
    case ContinuousFamily::laplace:
      return std::pow(par_a_, p) * std::tgamma(p + 1.0);
    case ContinuousFamily::pareto_sym:
      if (p >= par_a_) return kInf;
      return par_a_ * std::pow(par_b_, p) / (par_a_ - p);
    case ContinuousFamily::gaussian: {
      if (d_ == 1) {
        double s = std::sqrt(sigma_(0, 0));
        return std::pow(s, p) * std::pow(2.0, p / 2.0) * std::tgamma((p + 1.0) / 2.0) /
               std::sqrt(M_PI);
      }
      GaussianExpectation ge(sigma_, 96);
      double origin[kMaxDim] = {0, 0, 0};
      auto g = [&](std::span<const double> y) {
        double r2 = 0;
        for (int i = 0; i < d_; ++i) r2 += y[i] * y[i];
        return std::pow(r2, p / 2.0);
      };
      double full = ge.expect(std::span<const double>(origin, static_cast<std::size_t>(d_)), 1.0, g);
      double half = ge.expect_check(std::span<const double>(origin, static_cast<std::size_t>(d_)), 1.0, g);
      if (std::abs(full - half) > 1e-6 * (1.0 + std::abs(full)))
        throw std::runtime_error("moment_abs: quadrature did not converge");
      return full;
    }
    default:
      throw std::logic_error("moment_abs: unknown continuous family");
  }
}

LatticePmf StepDistribution::convolve_power(int k, const ConvolutionBudget& budget) const {
  if (backend_ != Backend::lattice)
    throw std::invalid_argument("convolve_power: continuous backend has no exact pmf");
  if (k < 0) throw std::invalid_argument("convolve_power: k must be >= 0");
  if (static_cast<std::int64_t>(k) * static_cast<std::int64_t>(points_.size()) > budget.max_work)
    throw std::invalid_argument("convolve_power: budget exceeded");
  LatticePmf step;
  step.dim = d_;
  step.unit = unit_;
  step.points = points_;
  step.mass = prob_;
  step.step_count = 1;
  LatticePmf acc;
  acc.dim = d_;
  acc.unit = unit_;
  acc.points.push_back({0, 0, 0});
  acc.mass.push_back(1.0);
  acc.step_count = 0;
  std::int64_t work = 0;
  for (int i = 0; i < k; ++i) {
    work += static_cast<std::int64_t>(acc.points.size()) *
            static_cast<std::int64_t>(step.points.size());
    if (work > budget.max_work) throw std::invalid_argument("convolve_power: budget exceeded");
    acc = acc.convolve(step);
  }
  return acc;
}

void StepDistribution::sample_step(CounterRng& rng, double* out) const {
  switch (family_) {
    case ContinuousFamily::none: {  // lattice
      double u = rng.uniform01();
      std::size_t j =
          std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin();
      if (j >= points_.size()) j = points_.size() - 1;
      support_point(j, out);
      return;
    }
    case ContinuousFamily::uniform:
      out[0] = par_a_ * (2.0 * rng.uniform01() - 1.0);
      return;
    case ContinuousFamily::laplace: {
      double e = -std::log(rng.uniform01_open0());
      double s = rng.uniform01() < 0.5 ? -1.0 : 1.0;
      out[0] = s * par_a_ * e;
      return;
    }
    case ContinuousFamily::pareto_sym: {
      double v = rng.uniform01_open0();
      double s = rng.uniform01() < 0.5 ? -1.0 : 1.0;
      out[0] = s * par_b_ * std::pow(v, -1.0 / par_a_);
      return;
    }
    case ContinuousFamily::gaussian: {
      double z[kMaxDim];
      for (int i = 0; i < d_; ++i) z[i] = rng.normal();
      for (int i = 0; i < d_; ++i) {
        double s = 0;
        for (int l = 0; l <= i; ++l) s += chol_(i, l) * z[l];
        out[i] = s;
      }
      return;
    }
  }
}

StepDistribution StepDistribution::scaled(double c) const {
  if (!(c > 0)) throw std::invalid_argument("scaled: factor must be positive");
  StepDistribution r = *this;
  r.name_ = name_ + ".scaled";
  r.sigma_ = sigma_.scaled(c * c);
  switch (family_) {
    case ContinuousFamily::none:
      for (int i = 0; i < d_; ++i) r.unit_[i] *= c;
      break;
    case ContinuousFamily::uniform:
    case ContinuousFamily::laplace:
      r.par_a_ *= c;
      break;
    case ContinuousFamily::pareto_sym:
      r.par_b_ *= c;
      break;
    case ContinuousFamily::gaussian:
      r.chol_ = chol_.scaled(c);
      break;
  }
  return r;
}

void StepDistribution::validate() const {
  if (d_ < 1 || d_ > kMaxDim) throw std::invalid_argument("distribution: d must be 1..3");
  if (name_.empty()) throw std::invalid_argument("distribution: empty name");
  if (!sigma_.is_symmetric(1e-12))
    throw std::invalid_argument("distribution: covariance not symmetric");
  sigma_.cholesky();  // positive definite gate
  if (backend_ == Backend::lattice) {
    if (points_.empty()) throw std::invalid_argument("distribution: empty lattice support");
    if (points_.size() != prob_.size())
      throw std::invalid_argument("distribution: support/probability size mismatch");
    KahanSum total;
    for (double p : prob_) {
      if (p < 0) throw std::invalid_argument("distribution: negative probability");
      total.add(p);
    }
    if (std::abs(total.value() - 1.0) > 1e-12)
      throw std::invalid_argument("distribution: probabilities do not sum to 1");
    std::set<std::array<std::int64_t, kMaxDim>> seen(points_.begin(), points_.end());
    if (seen.size() != points_.size())
      throw std::invalid_argument("distribution: duplicate support points");
    LatticePmf p = pmf();
    double mu[kMaxDim];
    p.mean(mu);
    for (int i = 0; i < d_; ++i)
      if (std::abs(mu[i]) > 1e-12) throw std::invalid_argument("distribution: mean not zero");
    SymMat emp = p.covariance();
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        if (std::abs(emp(i, j) - sigma_(i, j)) > 1e-10)
          throw std::invalid_argument("distribution: covariance mismatch");
  }
}

// ---------------------------------------------------------------------------
// catalog

namespace {

void reject_unknown_params(const json& params, std::initializer_list<const char*> known,
                           const std::string& family) {
  for (auto it = params.begin(); it != params.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok)
      throw std::invalid_argument("distribution " + family + ": unknown parameter '" + it.key() +
                                  "'");
  }
}

double number_param(const json& params, const char* key, double dflt) {
  if (!params.contains(key)) return dflt;
  if (!params[key].is_number())
    throw std::invalid_argument(std::string("distribution parameter '") + key +
                                "' must be a number");
  return params[key].get<double>();
}

SymMat sigma_param(const json& params, const char* key) {
  if (!params.contains(key)) return SymMat::identity(1);
  const json& v = params[key];
  if (v.is_number()) {
    SymMat s(1);
    s(0, 0) = v.get<double>();
    return s;
  }
  if (v.is_array() && !v.empty() && v[0].is_array()) {
    int d = static_cast<int>(v.size());
    if (d > kMaxDim) throw std::invalid_argument("distribution: sigma dimension must be <= 3");
    SymMat s(d);
    for (int i = 0; i < d; ++i) {
      if (static_cast<int>(v[i].size()) != d)
        throw std::invalid_argument("distribution: sigma must be square");
      for (int j = 0; j < d; ++j) s(i, j) = v[i][j].get<double>();
    }
    return s;
  }
  throw std::invalid_argument("distribution: sigma must be a number or a square matrix");
}

}  // namespace

StepDistribution make_step_distribution(const std::string& name, const json& params) {
  if (!params.is_object() && !params.is_null())
    throw std::invalid_argument("distribution params must be an object");
  StepDistribution r;
  r.name_ = name;
  auto add_point = [&](std::initializer_list<std::int64_t> coords, double p) {
    std::array<std::int64_t, kMaxDim> pt{0, 0, 0};
    int i = 0;
    for (auto c : coords) pt[i++] = c;
    r.points_.push_back(pt);
    r.prob_.push_back(p);
  };

  if (name == "rademacher") {
    reject_unknown_params(params, {}, name);
    r.d_ = 1;
    add_point({-1}, 0.5);
    add_point({+1}, 0.5);
    r.sigma_ = SymMat::identity(1);
  } else if (name == "asym_lattice") {
    reject_unknown_params(params, {}, name);
    r.d_ = 1;
    add_point({-1}, 2.0 / 3.0);
    add_point({+2}, 1.0 / 3.0);
    r.sigma_ = SymMat::scalar(1, 2.0);
  } else if (name == "lazy") {
    reject_unknown_params(params, {"stay"}, name);
    double stay = number_param(params, "stay", 0.5);
    if (!(stay >= 0.0 && stay < 1.0))
      throw std::invalid_argument("distribution lazy: stay must be in [0,1)");
    r.d_ = 1;
    add_point({-1}, (1.0 - stay) / 2.0);
    if (stay > 0.0) add_point({0}, stay);
    add_point({+1}, (1.0 - stay) / 2.0);
    r.sigma_ = SymMat::scalar(1, 1.0 - stay);
  } else if (name == "lattice2d") {
    reject_unknown_params(params, {"rho"}, name);
    double rho = number_param(params, "rho", 0.5);
    if (!(rho > -1.0 && rho < 1.0))
      throw std::invalid_argument("distribution lattice2d: rho must be in (-1,1)");
    r.d_ = 2;
    add_point({+1, +1}, (1.0 + rho) / 4.0);
    add_point({-1, -1}, (1.0 + rho) / 4.0);
    add_point({+1, -1}, (1.0 - rho) / 4.0);
    add_point({-1, +1}, (1.0 - rho) / 4.0);
    r.sigma_ = SymMat::identity(2);
    r.sigma_(0, 1) = rho;
    r.sigma_(1, 0) = rho;
  } else if (name == "uniform") {
    reject_unknown_params(params, {"half_width"}, name);
    double a = number_param(params, "half_width", std::sqrt(3.0));
    if (!(a > 0)) throw std::invalid_argument("distribution uniform: half_width must be > 0");
    r.d_ = 1;
    r.backend_ = Backend::continuous;
    r.family_ = ContinuousFamily::uniform;
    r.par_a_ = a;
    r.sigma_ = SymMat::scalar(1, a * a / 3.0);
  } else if (name == "laplace") {
    reject_unknown_params(params, {"scale"}, name);
    double b = number_param(params, "scale", 1.0 / std::sqrt(2.0));
    if (!(b > 0)) throw std::invalid_argument("distribution laplace: scale must be > 0");
    r.d_ = 1;
    r.backend_ = Backend::continuous;
    r.family_ = ContinuousFamily::laplace;
    r.par_a_ = b;
    r.sigma_ = SymMat::scalar(1, 2.0 * b * b);
  } else if (name == "pareto_sym") {
    reject_unknown_params(params, {"alpha", "x0"}, name);
    if (!params.contains("alpha"))
      throw std::invalid_argument("distribution pareto_sym: alpha is required");
    double alpha = number_param(params, "alpha", 0.0);
    if (!(alpha > 2.0))
      throw std::invalid_argument("distribution pareto_sym: alpha must be > 2 (finite variance)");
    double x0 = number_param(params, "x0", std::sqrt((alpha - 2.0) / alpha));
    if (!(x0 > 0)) throw std::invalid_argument("distribution pareto_sym: x0 must be > 0");
    r.d_ = 1;
    r.backend_ = Backend::continuous;
    r.family_ = ContinuousFamily::pareto_sym;
    r.par_a_ = alpha;
    r.par_b_ = x0;
    r.sigma_ = SymMat::scalar(1, alpha * x0 * x0 / (alpha - 2.0));
  } else if (name == "gaussian") {
    reject_unknown_params(params, {"sigma"}, name);
    SymMat s = sigma_param(params, "sigma");
    r.d_ = s.dim();
    r.backend_ = Backend::continuous;
    r.family_ = ContinuousFamily::gaussian;
    r.sigma_ = s;
    r.chol_ = s.cholesky();
  } else {
    throw std::invalid_argument("unknown distribution family '" + name + "'");
  }

  if (r.backend_ == Backend::lattice) {
    // record the exact support covariance, then gate everything
    r.sigma_ = r.pmf().covariance();
    r.cdf_.resize(r.prob_.size());
    double run = 0;
    for (std::size_t j = 0; j < r.prob_.size(); ++j) {
      run += r.prob_[j];
      r.cdf_[j] = run;
    }
    r.cdf_.back() = 1.0;
  }
  r.validate();
  return r;
}

StepDistribution make_step_distribution(const std::string& name) {
  return make_step_distribution(name, json::object());
}

std::vector<std::vector<double>> sample_walk(const StepDistribution& dist, int k, int N,
                                             std::uint64_t seed) {
  if (N < 1) throw std::invalid_argument("sample_walk: N must be >= 1");
  if (k < 0) throw std::invalid_argument("sample_walk: k must be >= 0");
  std::vector<std::vector<double>> out(static_cast<std::size_t>(N));
  walk_endpoints(dist, k, 0, N, seed, [&](int i, std::span<const double> x) {
    out[static_cast<std::size_t>(i)].assign(x.begin(), x.end());
  });
  return out;
}

}  // namespace cltlab::distributions
