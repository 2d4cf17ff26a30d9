#include "kfpo/riccati.hpp"

namespace kfpo {

RiccatiSolution solve_riccati(const ModelSpec& model, const NoiseSpec& noise) {
  noise.check_compatible(model);
  const Matrix& A = model.A();
  const Matrix& C = model.C();
  const Matrix& CA = model.CA();

  RiccatiSolution sol;
  StageMatrices gains;
  sol.P.push_back(linalg::symmetrize(noise.P0()));
  for (int t = 0; t < model.horizon(); ++t) {
    const Matrix& P = sol.P.back();
    const Matrix& Q = noise.Q(t);
    const Matrix H = linalg::symmetrize(CA * P * CA.transpose() + noise.R(t + 1) + C * Q * C.transpose());
    const Matrix Z = A * P * CA.transpose() + Q * C.transpose();

    const double cond = linalg::condition_number(H);
    sol.max_condition = std::max(sol.max_condition, cond);
    if (!(cond <= kRiccatiConditionLimit)) {
      throw NumericalError("innovation covariance H*_" + std::to_string(t) + " is numerically singular (cond " +
                           std::to_string(cond) + "); Q_t and R_t must be positive definite");
    }
    if (cond > kRiccatiConditionWarn) sol.condition_warning = true;

    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("H*_" + std::to_string(t) + " is not positive definite; Q_t and R_t must be positive definite");
    }
    // K H = Z  <=>  H K^T = Z^T (H symmetric)
    Matrix K = llt.solve(Z.transpose()).transpose();
    Matrix next = A * P * A.transpose() + Q - K * Z.transpose();

    gains.push_back(std::move(K));
    sol.P.push_back(linalg::symmetrize(next));
    sol.H.push_back(H);
    sol.Z.push_back(Z);
  }
  sol.gains = GainSchedule(std::move(gains));
  return sol;
}

}  // namespace kfpo
