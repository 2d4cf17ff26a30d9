#include "kfpo/objective.hpp"

#include <cmath>
#include <limits>

namespace kfpo {

namespace {

double geometric_factor(double rho, int horizon) {
  // (rho^{2M} - 1) / (rho^2 - 1), rho > 1
  return (std::pow(rho, 2.0 * horizon) - 1.0) / (rho * rho - 1.0);
}

}  // namespace

Matrix sigma_weight(const ModelSpec& model) {
  const int n = model.state_dim();
  Matrix sigma = Matrix::Zero(n, n);
  for (int k = 1; k <= n; ++k) sigma += model.CA_power(k).transpose() * model.CA_power(k);
  return linalg::symmetrize(sigma);
}

Matrix apply_G(const ModelSpec& model, const GainSchedule& K, int t, const Matrix& X) {
  const int horizon = model.horizon();
  if (t < 0 || t > horizon) {
    throw std::out_of_range("G_t requires 0 <= t <= M, got t = " + std::to_string(t));
  }
  Matrix acc = X;
  for (int s = horizon - 1; s >= t; --s) {
    const Matrix As = K.closed_loop(model, s);
    acc = X + As.transpose() * acc * As;
  }
  return acc;
}

std::vector<Matrix> sigma_weights(const ModelSpec& model, const GainSchedule& K) {
  K.check_compatible(model);
  const int horizon = model.horizon();
  const Matrix sigma = sigma_weight(model);
  std::vector<Matrix> out(static_cast<std::size_t>(horizon));
  Matrix acc = sigma;  // G_M(Sigma)
  out[static_cast<std::size_t>(horizon - 1)] = acc;
  for (int t = horizon - 2; t >= 0; --t) {
    const Matrix As = K.closed_loop(model, t + 1);
    acc = linalg::symmetrize(sigma + As.transpose() * acc * As);
    out[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

std::vector<Matrix> error_covariances(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K) {
  noise.check_compatible(model);
  K.check_compatible(model);
  const int n = model.state_dim();
  const Matrix I = Matrix::Identity(n, n);
  std::vector<Matrix> P;
  P.reserve(static_cast<std::size_t>(model.horizon()) + 1);
  P.push_back(noise.P0());
  for (int t = 1; t <= model.horizon(); ++t) {
    const Matrix& Kt = K[t - 1];
    const Matrix At = K.closed_loop(model, t - 1);
    const Matrix IKC = I - Kt * model.C();
    const Matrix next = At * P.back() * At.transpose() + IKC * noise.Q(t - 1) * IKC.transpose() +
                        Kt * noise.R(t) * Kt.transpose();
    P.push_back(linalg::symmetrize(next));
  }
  return P;
}

double cost(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K) {
  const auto P = error_covariances(model, noise, K);
  const Matrix sigma = sigma_weight(model);
  double f = 0.0;
  for (std::size_t t = 1; t < P.size(); ++t) f += (P[t] * sigma).trace();
  return f;
}

CostGradient gradient(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K) {
  CostGradient out;
  out.P = error_covariances(model, noise, K);
  out.Sigma_t = sigma_weights(model, K);
  const Matrix sigma = sigma_weight(model);
  const Matrix& A = model.A();
  const Matrix& C = model.C();
  const Matrix& CA = model.CA();

  for (std::size_t t = 1; t < out.P.size(); ++t) out.value += (out.P[t] * sigma).trace();

  for (int t = 0; t < model.horizon(); ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const Matrix& P = out.P[ut];
    const Matrix& Q = noise.Q(t);
    const Matrix& R = noise.R(t + 1);
    Matrix H = CA * P * CA.transpose() + R + C * Q * C.transpose();
    Matrix Z = A * P * CA.transpose() + Q * C.transpose();
    Matrix Lambda = C * Q * C.transpose() + R + CA * P * CA.transpose();
    Matrix E = K[t] * H - Z;
    out.per_stage.push_back(2.0 * out.Sigma_t[ut] * E);
    out.E.push_back(std::move(E));
    out.H.push_back(std::move(H));
    out.Z.push_back(std::move(Z));
    out.Lambda.push_back(std::move(Lambda));
  }
  return out;
}

double almost_smoothness_gap(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                             const GainSchedule& K_prime) {
  const CostGradient base = gradient(model, noise, K);
  const auto sigma_prime = sigma_weights(model, K_prime);
  const double f_prime = cost(model, noise, K_prime);
  double predicted = 0.0;
  for (int t = 0; t < model.horizon(); ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const Matrix dK = K_prime[t] - K[t];
    predicted += (2.0 * sigma_prime[ut] * base.E[ut] * dK.transpose()).trace();
    predicted += (sigma_prime[ut] * dK * base.Lambda[ut] * dK.transpose()).trace();
  }
  return predicted - (f_prime - base.value);
}

DiagnosticConstants diagnostics(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                                double f_opt) {
  DiagnosticConstants d;
  const int horizon = model.horizon();
  const int n = model.state_dim();
  const Matrix& A = model.A();
  const Matrix& C = model.C();
  const Matrix sigma = sigma_weight(model);

  d.f_K = cost(model, noise, K);
  d.f_opt = f_opt;
  if (f_opt > d.f_K + 1e-12 * std::max(1.0, std::abs(d.f_K))) {
    throw std::invalid_argument("f(K*) exceeds f(K); were the arguments swapped?");
  }
  const double gap = std::max(0.0, d.f_K - f_opt);

  d.sigma_min_Sigma = linalg::min_eigenvalue(sigma);
  d.sigma_max_Sigma = linalg::max_eigenvalue(sigma);
  d.norm_A = linalg::spectral_norm(A);
  d.norm_CA = linalg::spectral_norm(model.CA());

  const Matrix A_inv = A.partialPivLu().inverse();
  d.sigma_min_R = std::numeric_limits<double>::infinity();
  d.sigma_min_AQA = std::numeric_limits<double>::infinity();
  double cq_sum = 0.0;
  for (int t = 0; t < horizon; ++t) {
    const Matrix& Q = noise.Q(t);
    const Matrix& R = noise.R(t + 1);
    d.sigma_min_R = std::min(d.sigma_min_R, linalg::min_eigenvalue(R));
    d.sigma_max_CQCR = std::max(d.sigma_max_CQCR, linalg::max_eigenvalue(C * Q * C.transpose() + R));
    d.sigma_min_AQA = std::min(d.sigma_min_AQA, linalg::min_eigenvalue(A_inv.transpose() * Q * A_inv));
    cq_sum += linalg::spectral_norm(C * Q);
  }

  const double p0_norm = linalg::spectral_norm(noise.P0());
  const auto bound_A = [&](double f) { return f / d.sigma_min_Sigma + p0_norm; };
  const auto bound_B = [&](double f) { return f / d.sigma_min_AQA + n * d.sigma_max_Sigma; };
  d.A_of_K = bound_A(d.f_K);
  d.B_of_K = bound_B(d.f_K);
  d.A_of_opt = bound_A(f_opt);
  d.B_of_opt = bound_B(f_opt);

  const double lambda_max = d.sigma_max_CQCR + d.norm_CA * d.norm_CA * d.A_of_K;
  d.c1 = d.B_of_opt / (4.0 * d.sigma_min_R * d.sigma_min_Sigma * d.sigma_min_Sigma);
  d.c2 = d.sigma_min_Sigma / (4.0 * lambda_max);

  const double root_gap = std::sqrt(horizon / d.c2 * gap);
  d.C_of_K = (root_gap + d.A_of_K * d.norm_CA * d.norm_A) / d.sigma_min_R + cq_sum / d.sigma_min_R;

  d.rho = 1.0 + kRhoSlack;
  for (int t = 0; t < horizon; ++t) {
    d.rho = std::max(d.rho, linalg::spectral_norm(K.closed_loop(model, t)) + 0.5);
  }
  d.rho_max = std::max(d.norm_A + d.norm_CA * d.C_of_K, 1.0 + kRhoSlack);

  const double sigma_norm = d.sigma_max_Sigma;
  const double c3_den = 2.0 * d.B_of_K * root_gap * geometric_factor(d.rho_max, horizon) *
                        (2.0 * d.rho_max + 1.0) * sigma_norm * std::max(d.norm_CA, 1.0);
  d.c3 = c3_den > 0.0 ? std::min(1.0, d.sigma_min_Sigma) / c3_den : std::numeric_limits<double>::infinity();
  d.c4 = 1.0 / (4.0 * lambda_max * (0.5 + d.B_of_K));
  d.eta = std::min(d.c3, d.c4);
  d.alpha = d.eta / (8.0 * d.c1);
  d.c10 = d.B_of_K * (d.sigma_max_CQCR + d.norm_CA * d.norm_CA * d.A_of_opt) / (d.sigma_min_Sigma * d.sigma_min_R);
  return d;
}

}  // namespace kfpo
