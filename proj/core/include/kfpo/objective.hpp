#pragma once

#include "kfpo/gains.hpp"
#include "kfpo/model.hpp"

namespace kfpo {

// Known-parameter objective f(K) = sum_{t=0}^{M-1} tr(P_{t+1} Sigma), its exact
// gradient and the constants that govern step-size selection.

/// Sigma = sum_{n=1..N} (C A^n)^T (C A^n).
Matrix sigma_weight(const ModelSpec& model);

/// G_t(X) = X + sum_{i=0}^{M-t-1} A_t^T ... A_{M-i-1}^T X A_{M-i-1} ... A_t with
/// A_s = A - K_s C A. G_M(X) = X. Throws std::out_of_range unless 0 <= t <= M.
Matrix apply_G(const ModelSpec& model, const GainSchedule& K, int t, const Matrix& X);

/// Sigma_t = G_{t+1}(Sigma) for t = 0..M-1, from one backward sweep.
std::vector<Matrix> sigma_weights(const ModelSpec& model, const GainSchedule& K);

/// Error covariances P_0..P_M of the filter driven by K:
/// P_t = A_{t-1} P_{t-1} A_{t-1}^T + (I - K_{t-1} C) Q_{t-1} (I - K_{t-1} C)^T + K_{t-1} R_t K_{t-1}^T.
std::vector<Matrix> error_covariances(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K);

double cost(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K);

struct CostGradient {
  double value = 0.0;
  StageMatrices per_stage;      // 2 Sigma_t E_t
  StageMatrices E;              // K_t H_t - Z_t
  std::vector<Matrix> H;
  std::vector<Matrix> Z;
  std::vector<Matrix> Lambda;   // C Q_t C^T + R_{t+1} + CA P_t (CA)^T
  std::vector<Matrix> P;        // P_0..P_M
  std::vector<Matrix> Sigma_t;

  double norm() const { return linalg::frobenius_norm(per_stage); }
};

CostGradient gradient(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K);

/// Residual of the exact expansion
///   f(K') - f(K) = sum_t tr(2 Sigma'_t E_t dK_t^T + Sigma'_t dK_t Lambda_t dK_t^T),  dK = K' - K.
/// Zero up to rounding for every pair.
double almost_smoothness_gap(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                             const GainSchedule& K_prime);

/// Small constant b in rho = max(..., 1 + b).
inline constexpr double kRhoSlack = 1e-3;

struct DiagnosticConstants {
  double f_K = 0.0;
  double f_opt = 0.0;

  double sigma_min_Sigma = 0.0;
  double sigma_max_Sigma = 0.0;
  double sigma_min_R = 0.0;        // min_t sigma_min(R_{t+1})
  double sigma_max_CQCR = 0.0;     // max_t sigma_max(C Q_t C^T + R_{t+1})
  double sigma_min_AQA = 0.0;      // min_t sigma_min(A^{-T} Q_t A^{-1})
  double norm_A = 0.0;
  double norm_CA = 0.0;

  double A_of_K = 0.0;    // f(K)/sigma_min^Sigma + ||P0||
  double B_of_K = 0.0;    // f(K)/sigma_min^{A^-T Q A^-1} + N sigma_max^Sigma
  double C_of_K = 0.0;    // bound on sum_t ||K_t||
  double A_of_opt = 0.0;
  double B_of_opt = 0.0;

  double c1 = 0.0;        // PL upper constant
  double c2 = 0.0;        // PL lower constant (at K)
  double c3 = 0.0;        // step bound; +inf when f(K) = f(K*)
  double c4 = 0.0;
  double eta = 0.0;       // min(c3, c4)
  double alpha = 0.0;     // eta / (8 c1)
  double rho = 0.0;       // max_t max(||A_t|| + 1/2, 1 + b) at K
  double rho_max = 0.0;   // max(||A|| + ||CA|| C(K), 1 + b)
  double c10 = 0.0;       // gain-error envelope constant
};

/// Constants evaluated with K in the role of the initial gain K_0. `f_opt` is f(K*);
/// throws std::invalid_argument when it exceeds f(K).
DiagnosticConstants diagnostics(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                                double f_opt);

}  // namespace kfpo
