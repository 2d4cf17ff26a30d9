#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace kfpo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One matrix per stage t = 0..M-1 (gains, gradients, residual maps).
using StageMatrices = std::vector<Matrix>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix shapes. `field()` names the offending input.
class DimensionError : public Error {
 public:
  DimensionError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A modelling assumption (positive definite noise, observability, ...) is violated.
class AssumptionError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: failed factorization, ill-conditioned solve.
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace linalg {

Matrix symmetrize(const Matrix& m);
bool is_symmetric(const Matrix& m, double tol);
bool all_finite(const Matrix& m);

double spectral_norm(const Matrix& m);
double min_singular_value(const Matrix& m);

// Eigenvalues of the symmetric part.
double min_eigenvalue(const Matrix& sym);
double max_eigenvalue(const Matrix& sym);

int rank(const Matrix& m, double rel_tol = 1e-10);
double condition_number(const Matrix& m);

Matrix power(const Matrix& m, int exponent);

/// Square-root factor F with F F^T = cov. Positive definite input goes through
/// Cholesky; a PSD input with eigenvalues >= -1e-10 * ||cov|| goes through the
/// symmetric eigendecomposition. Anything else throws NumericalError naming `what`.
Matrix covariance_factor(const Matrix& cov, const std::string& what, bool require_definite);

double frobenius_norm(const StageMatrices& stages);
double squared_frobenius_norm(const StageMatrices& stages);

}  // namespace linalg
}  // namespace kfpo
