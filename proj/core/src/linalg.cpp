#include "kfpo/linalg.hpp"

#include <cmath>

namespace kfpo::linalg {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double min_singular_value(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  return s(s.size() - 1);
}

double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(sym), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(sym), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

int rank(const Matrix& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double cutoff = rel_tol * std::max(1.0, s(0));
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) ++r;
  }
  return r;
}

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  if (smallest == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smallest;
}

Matrix power(const Matrix& m, int exponent) {
  Matrix result = Matrix::Identity(m.rows(), m.cols());
  for (int i = 0; i < exponent; ++i) result = result * m;
  return result;
}

Matrix covariance_factor(const Matrix& cov, const std::string& what, bool require_definite) {
  if (cov.rows() != cov.cols()) {
    throw DimensionError(what, "covariance must be square");
  }
  const Matrix sym = symmetrize(cov);
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() == Eigen::Success) {
    return llt.matrixL();
  }
  if (require_definite) {
    throw NumericalError("Cholesky factorization failed: " + what + " is not positive definite");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Vector& lambda = es.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  if (lambda.minCoeff() < -1e-10 * scale) {
    throw NumericalError("covariance " + what + " is not positive semidefinite");
  }
  const Vector root = lambda.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

double squared_frobenius_norm(const StageMatrices& stages) {
  double total = 0.0;
  for (const auto& s : stages) total += s.squaredNorm();
  return total;
}

double frobenius_norm(const StageMatrices& stages) { return std::sqrt(squared_frobenius_norm(stages)); }

}  // namespace kfpo::linalg
