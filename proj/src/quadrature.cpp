#include "cltlab/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include <Eigen/Dense>

#include "cltlab/numeric.hpp"

namespace cltlab {

namespace {

GaussHermite build_rule(int q) {
  // Jacobi matrix of the (physicists') Hermite recurrence: zero diagonal,
  // off-diagonal sqrt(i/2). Eigenvalues are the nodes; weights come from the
  // first components of the eigenvectors scaled by mu0 = sqrt(pi).
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(q, q);
  for (int i = 1; i < q; ++i) {
    double b = std::sqrt(i / 2.0);
    j(i, i - 1) = b;
    j(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  if (es.info() != Eigen::Success) throw std::runtime_error("gauss-hermite: eigensolver failed");
  GaussHermite rule;
  rule.nodes.resize(q);
  rule.weights.resize(q);
  const double mu0 = std::sqrt(M_PI);
  for (int i = 0; i < q; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    double v = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v * v;
  }
  return rule;
}

}  // namespace

const GaussHermite& GaussHermite::order(int q) {
  if (q < 1 || q > 512) throw std::invalid_argument("gauss-hermite: order must be 1..512");
  static std::mutex mu;
  static std::map<int, GaussHermite> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(q);
  if (it == cache.end()) it = cache.emplace(q, build_rule(q)).first;
  return it->second;
}

GaussianExpectation::GaussianExpectation(const SymMat& sigma, int order)
    : d_(sigma.dim()), order_(order), chol_(sigma.cholesky()) {
  if (order < 2) throw std::invalid_argument("gaussian expectation: order must be >= 2");
}

double GaussianExpectation::tensor(const GaussHermite& rule, std::span<const double> x, double t,
                                   const std::function<double(std::span<const double>)>& g) const {
  const double st = std::sqrt(2.0 * t);  // xi = L z, z = sqrt(2) y
  const int q = static_cast<int>(rule.nodes.size());
  double pt[kMaxDim];
  double y[kMaxDim];
  KahanSum acc;
  int idx[kMaxDim] = {0, 0, 0};
  std::size_t total = 1;
  for (int i = 0; i < d_; ++i) total *= static_cast<std::size_t>(q);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t r = flat;
    double w = 1.0;
    for (int i = d_ - 1; i >= 0; --i) {
      idx[i] = static_cast<int>(r % q);
      r /= q;
      w *= rule.weights[idx[i]];
      y[i] = rule.nodes[idx[i]];
    }
    for (int i = 0; i < d_; ++i) {
      double s = 0;
      for (int l = 0; l <= i; ++l) s += chol_(i, l) * y[l];
      pt[i] = x[i] + st * s;
    }
    acc.add(w * g(std::span<const double>(pt, static_cast<std::size_t>(d_))));
  }
  return acc.value() / std::pow(M_PI, d_ / 2.0);
}

double GaussianExpectation::expect(std::span<const double> x, double t,
                                   const std::function<double(std::span<const double>)>& g) const {
  if (t < 0) throw std::invalid_argument("gaussian expectation: t must be >= 0");
  if (t == 0) return g(x);
  return tensor(GaussHermite::order(order_), x, t, g);
}

double GaussianExpectation::expect_check(
    std::span<const double> x, double t,
    const std::function<double(std::span<const double>)>& g) const {
  if (t < 0) throw std::invalid_argument("gaussian expectation: t must be >= 0");
  if (t == 0) return g(x);
  return tensor(GaussHermite::order(std::max(2, order_ / 2)), x, t, g);
}

}  // namespace cltlab
