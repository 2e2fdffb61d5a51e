#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cltlab/linalg.hpp"

namespace cltlab {

// Physicists' Gauss-Hermite rule: integral of e^{-y^2} g(y) dy ~ sum w_i g(y_i).
// Nodes/weights from the Golub-Welsch eigenproblem of the Jacobi matrix.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;

  static const GaussHermite& order(int q);  // cached, thread-safe
};

// E[g(m + sqrt(t) * xi)] with xi ~ N(0, Sigma), by tensor Gauss-Hermite after
// Cholesky whitening. d <= 3.
class GaussianExpectation {
 public:
  GaussianExpectation(const SymMat& sigma, int order);

  int dim() const { return d_; }
  int order() const { return order_; }

  // g receives the shifted point x + sqrt(t)*L*(sqrt(2) y) in out[0..d).
  double expect(std::span<const double> x, double t,
                const std::function<double(std::span<const double>)>& g) const;

  // Same expectation computed at half order, for error estimation.
  double expect_check(std::span<const double> x, double t,
                      const std::function<double(std::span<const double>)>& g) const;

 private:
  double tensor(const GaussHermite& rule, std::span<const double> x, double t,
                const std::function<double(std::span<const double>)>& g) const;

  int d_;
  int order_;
  SymMat chol_;  // lower factor of Sigma
};

}  // namespace cltlab
