#pragma once

#include "kfpo/gains.hpp"
#include "kfpo/model.hpp"

#include <cstdint>

namespace kfpo {

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Monte-Carlo value of the dual control cost
///   E[ sum_t s_t^T Q s_t + u_t^T (C Q C^T + R) u_t + 2 u_t^T C Q s_t + s_M^T P0 s_M ]
/// with s_{t+1} = A^T s_t + (CA)^T u_t + z_t, u_t = -K_{M-t-1}^T s_t,
/// s_0, z_0..z_{M-2} ~ N(0, Sigma), z_{M-1} = 0 and noise indices Q_{M-t-1}, R_{M-t}.
/// Throws AssumptionError when Sigma is not positive definite.
MonteCarloEstimate dual_cost_mc(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                                std::size_t samples, std::uint64_t seed);

/// Residuals y_{i+n+1} - yhat^n_{i+1} written as linear maps of the stacked noise
/// X = (e_0, w_0..w_{M+N-1}, v_1..v_{M+N}).
struct StackedRepresentation {
  int state_dim = 0;
  int obs_dim = 0;
  int horizon = 0;
  int z_dim = 0;  // N(M+N+1) + m(M+N)

  /// residual_maps[i][n-1] is the m x z matrix mapping X to the residual of stage i, lookahead n.
  std::vector<std::vector<Matrix>> residual_maps;
  /// blockdiag(P0, Q_0..Q_{M+N-1}, R_1..R_{M+N}).
  Matrix D_X;

  Eigen::Index e0_offset() const { return 0; }
  Eigen::Index process_offset(int j) const { return static_cast<Eigen::Index>(state_dim) * (j + 1); }
  /// Offset of v_j, j >= 1.
  Eigen::Index measurement_offset(int j) const {
    return static_cast<Eigen::Index>(state_dim) * (horizon + state_dim + 1) +
           static_cast<Eigen::Index>(obs_dim) * (j - 1);
  }
};

StackedRepresentation build_stacked(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K);

struct StackedCostGradient {
  double f1 = 0.0;          // tr(D_X sum Lambda Lambda^T), includes the K-independent constant
  StageMatrices gradient;   // exact gradient with respect to each K_t
};

/// Exact f_1 and its gradient from the stacked representation, by contracting the
/// perturbation of each residual map with D_X.
StackedCostGradient stacked_cost_and_gradient(const StackedRepresentation& rep, const ModelSpec& model,
                                              const GainSchedule& K);

/// The part of f_1 that does not depend on K:
///   sum_t sum_n ( sum_{j=t+1}^{t+n} tr(C A^{t+n-j} Q_j (C A^{t+n-j})^T) + tr(R_{t+n+1}) ).
double stacked_constant(const ModelSpec& model, const NoiseSpec& noise);

}  // namespace kfpo
