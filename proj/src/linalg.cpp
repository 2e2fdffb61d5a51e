#include "cltlab/linalg.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace cltlab {

namespace {

Eigen::MatrixXd to_eigen(const SymMat& m) {
  Eigen::MatrixXd e(m.dim(), m.dim());
  for (int i = 0; i < m.dim(); ++i)
    for (int j = 0; j < m.dim(); ++j) e(i, j) = m(i, j);
  return e;
}

SymMat from_eigen(const Eigen::MatrixXd& e) {
  SymMat m(static_cast<int>(e.rows()));
  for (int i = 0; i < m.dim(); ++i)
    for (int j = 0; j < m.dim(); ++j) m(i, j) = e(i, j);
  return m;
}

}  // namespace

bool SymMat::is_symmetric(double tol) const {
  for (int i = 0; i < d_; ++i)
    for (int j = i + 1; j < d_; ++j)
      if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
  return true;
}

SymMat SymMat::cholesky() const {
  if (!is_symmetric(1e-10)) throw std::domain_error("cholesky: matrix not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(to_eigen(*this));
  if (llt.info() != Eigen::Success)
    throw std::domain_error("cholesky: matrix not positive definite");
  Eigen::MatrixXd l = llt.matrixL();
  for (int i = 0; i < d_; ++i)
    if (!(l(i, i) > 0.0)) throw std::domain_error("cholesky: matrix not positive definite");
  return from_eigen(l);
}

SymMat SymMat::inverse_spd() const {
  cholesky();  // SPD gate
  Eigen::MatrixXd inv = to_eigen(*this).llt().solve(Eigen::MatrixXd::Identity(d_, d_));
  return from_eigen(inv);
}

double SymMat::det_spd() const {
  SymMat l = cholesky();
  double det = 1.0;
  for (int i = 0; i < d_; ++i) det *= l(i, i) * l(i, i);
  return det;
}

double SymMat::lambda_max_abs() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(*this), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double SymMat::lambda_min() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(*this), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double trace_product(const SymMat& a, const SymMat& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("trace_product: dimension mismatch");
  double t = 0;
  for (int i = 0; i < a.dim(); ++i)
    for (int j = 0; j < a.dim(); ++j) t += a(i, j) * b(j, i);
  return t;
}

}  // namespace cltlab
