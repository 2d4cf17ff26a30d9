#pragma once

#include "kfpo/gains.hpp"
#include "kfpo/model.hpp"

namespace kfpo {

/// Finite-horizon Kalman gains and the matching error covariances.
struct RiccatiSolution {
  GainSchedule gains;         // K*_0..K*_{M-1}
  std::vector<Matrix> P;      // P*_0..P*_M
  std::vector<Matrix> H;      // H*_t, t = 0..M-1 (innovation covariance)
  std::vector<Matrix> Z;      // Z*_t
  double max_condition = 0.0;  // largest cond(H*_t) seen
  bool condition_warning = false;
};

/// Condition number of H*_t above which the recursion is rejected.
inline constexpr double kRiccatiConditionLimit = 1e12;
/// Condition number above which the solution is flagged but still returned.
inline constexpr double kRiccatiConditionWarn = 1e8;

/// Forward recursion
///   H*_t = CA P*_t (CA)^T + R_{t+1} + C Q_t C^T
///   Z*_t = A P*_t (CA)^T + Q_t C^T
///   K*_t = Z*_t (H*_t)^{-1}
///   P*_{t+1} = A P*_t A^T + Q_t - Z*_t (H*_t)^{-1} Z*_t^T
/// starting from P*_0 = P0. Gains come from a Cholesky solve against H*_t.
RiccatiSolution solve_riccati(const ModelSpec& model, const NoiseSpec& noise);

}  // namespace kfpo
