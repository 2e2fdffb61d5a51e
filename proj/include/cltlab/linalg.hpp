#pragma once

#include <array>
#include <span>
#include <stdexcept>

#include "cltlab/multiindex.hpp"

namespace cltlab {

// Dense symmetric d x d matrix, d <= 3. Row-major storage.
class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(int d) : d_(d) {
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("SymMat: d must be 1..3");
    m_.fill(0.0);
  }
  static SymMat identity(int d) {
    SymMat s(d);
    for (int i = 0; i < d; ++i) s(i, i) = 1.0;
    return s;
  }
  static SymMat scalar(int d, double v) {
    SymMat s(d);
    for (int i = 0; i < d; ++i) s(i, i) = v;
    return s;
  }

  int dim() const { return d_; }
  double& operator()(int i, int j) { return m_[i * kMaxDim + j]; }
  double operator()(int i, int j) const { return m_[i * kMaxDim + j]; }

  double trace() const {
    double t = 0;
    for (int i = 0; i < d_; ++i) t += (*this)(i, i);
    return t;
  }
  double quadform(std::span<const double> x) const {
    double q = 0;
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) q += (*this)(i, j) * x[i] * x[j];
    return q;
  }
  // y = M x
  void mul(std::span<const double> x, double* y) const {
    for (int i = 0; i < d_; ++i) {
      double s = 0;
      for (int j = 0; j < d_; ++j) s += (*this)(i, j) * x[j];
      y[i] = s;
    }
  }
  SymMat scaled(double c) const {
    SymMat r = *this;
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) r(i, j) *= c;
    return r;
  }
  SymMat plus(const SymMat& o) const {
    SymMat r = *this;
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) r(i, j) += o(i, j);
    return r;
  }

  bool is_symmetric(double tol = 1e-12) const;
  // Lower-triangular Cholesky factor; throws std::domain_error if not SPD.
  SymMat cholesky() const;
  SymMat inverse_spd() const;
  double det_spd() const;
  // max |eigenvalue| of a symmetric matrix
  double lambda_max_abs() const;
  double lambda_min() const;

 private:
  int d_ = 1;
  std::array<double, kMaxDim * kMaxDim> m_{};
};

// tr(A B) for symmetric A, B of equal dimension.
double trace_product(const SymMat& a, const SymMat& b);

}  // namespace cltlab
