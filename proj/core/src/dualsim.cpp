#include "kfpo/dualsim.hpp"

#include "kfpo/objective.hpp"

#include <cmath>
#include <random>

namespace kfpo {

namespace {

constexpr std::size_t kMonteCarloChunk = 4096;

}  // namespace

MonteCarloEstimate dual_cost_mc(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                                std::size_t samples, std::uint64_t seed) {
  noise.check_compatible(model);
  K.check_compatible(model);
  if (samples < 2) throw std::invalid_argument("dual Monte-Carlo needs at least two samples");

  const int horizon = model.horizon();
  const int n = model.state_dim();
  const Matrix sigma = sigma_weight(model);
  Matrix factor;
  try {
    factor = linalg::covariance_factor(sigma, "Sigma", true);
  } catch (const NumericalError&) {
    throw AssumptionError("Sigma is not positive definite: (C, A) must be observable and A invertible");
  }

  // Stage weights indexed by the dual time t.
  std::vector<Matrix> state_weight, control_weight, cross_weight;
  for (int t = 0; t < horizon; ++t) {
    const int tau = horizon - t - 1;
    const Matrix& Q = noise.Q(tau);
    state_weight.push_back(Q);
    control_weight.push_back(model.C() * Q * model.C().transpose() + noise.R(tau + 1));
    cross_weight.push_back(model.C() * Q);
  }
  const Matrix At = model.A().transpose();
  const Matrix CAt = model.CA().transpose();

  // Welford accumulation in sample order.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t count = 0;
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector xi(n);
  for (std::size_t chunk = 0; chunk * kMonteCarloChunk < samples; ++chunk) {
    std::mt19937_64 rng(trajectory_seed(seed, chunk));
    const std::size_t end = std::min(samples, (chunk + 1) * kMonteCarloChunk);
    for (std::size_t k = chunk * kMonteCarloChunk; k < end; ++k) {
      for (int r = 0; r < n; ++r) xi(r) = normal(rng);
      Vector s = factor * xi;
      double value = 0.0;
      for (int t = 0; t < horizon; ++t) {
        const auto ut = static_cast<std::size_t>(t);
        const Vector u = -K[horizon - t - 1].transpose() * s;
        value += s.dot(state_weight[ut] * s) + u.dot(control_weight[ut] * u) + 2.0 * u.dot(cross_weight[ut] * s);
        Vector next = At * s + CAt * u;
        if (t <= horizon - 2) {
          for (int r = 0; r < n; ++r) xi(r) = normal(rng);
          next += factor * xi;
        }
        s = std::move(next);
      }
      value += s.dot(noise.P0() * s);

      ++count;
      const double delta = value - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta * (value - mean);
    }
  }
  MonteCarloEstimate est;
  est.mean = mean;
  est.samples = count;
  est.std_error = std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count));
  return est;
}

StackedRepresentation build_stacked(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K) {
  noise.check_compatible(model);
  K.check_compatible(model);
  StackedRepresentation rep;
  rep.state_dim = model.state_dim();
  rep.obs_dim = model.obs_dim();
  rep.horizon = model.horizon();
  const int n_dim = rep.state_dim;
  const int m_dim = rep.obs_dim;
  const int steps = model.observation_count();
  rep.z_dim = n_dim * (rep.horizon + n_dim + 1) + m_dim * steps;

  rep.D_X = Matrix::Zero(rep.z_dim, rep.z_dim);
  rep.D_X.block(rep.e0_offset(), rep.e0_offset(), n_dim, n_dim) = noise.P0();
  for (int j = 0; j < steps; ++j) {
    rep.D_X.block(rep.process_offset(j), rep.process_offset(j), n_dim, n_dim) = noise.Q(j);
  }
  for (int j = 1; j <= steps; ++j) {
    rep.D_X.block(rep.measurement_offset(j), rep.measurement_offset(j), m_dim, m_dim) = noise.R(j);
  }

  const Matrix I_n = Matrix::Identity(n_dim, n_dim);
  const Matrix I_m = Matrix::Identity(m_dim, m_dim);
  const auto loops = K.closed_loops(model);
  rep.residual_maps.resize(static_cast<std::size_t>(rep.horizon));
  for (int i = 0; i < rep.horizon; ++i) {
    for (int n = 1; n <= n_dim; ++n) {
      const Matrix& G = model.CA_power(n);
      Matrix row = Matrix::Zero(m_dim, rep.z_dim);
      Matrix prod = I_n;  // A_i ... A_{j+1}
      for (int j = i; j >= 0; --j) {
        const Matrix lead = G * prod;
        row.block(0, rep.process_offset(j), m_dim, n_dim) = lead * (I_n - K[j] * model.C());
        row.block(0, rep.measurement_offset(j + 1), m_dim, m_dim) = -lead * K[j];
        prod = prod * loops[static_cast<std::size_t>(j)];
      }
      row.block(0, rep.e0_offset(), m_dim, n_dim) = G * prod;
      for (int j = i + 1; j <= i + n; ++j) {
        row.block(0, rep.process_offset(j), m_dim, n_dim) = model.CA_power(i + n - j);
      }
      row.block(0, rep.measurement_offset(i + n + 1), m_dim, m_dim) = I_m;
      rep.residual_maps[static_cast<std::size_t>(i)].push_back(std::move(row));
    }
  }
  return rep;
}

StackedCostGradient stacked_cost_and_gradient(const StackedRepresentation& rep, const ModelSpec& model,
                                              const GainSchedule& K) {
  K.check_compatible(model);
  const int n_dim = rep.state_dim;
  const int m_dim = rep.obs_dim;
  const int horizon = rep.horizon;
  const auto loops = K.closed_loops(model);
  const Matrix I_n = Matrix::Identity(n_dim, n_dim);

  StackedCostGradient out;
  for (const auto& stage : rep.residual_maps) {
    for (const auto& row : stage) out.f1 += (row * rep.D_X * row.transpose()).trace();
  }

  // Innovation nu_{t+1} = CA e_t + C w_t + v_{t+1} as a map of X, with
  // e_{t+1} = A_t e_t + (I - K_t C) w_t - K_t v_{t+1}.
  Matrix error_map = Matrix::Zero(n_dim, rep.z_dim);
  error_map.block(0, rep.e0_offset(), n_dim, n_dim) = I_n;
  for (int t = 0; t < horizon; ++t) {
    Matrix innovation = model.CA() * error_map;
    innovation.block(0, rep.process_offset(t), m_dim, n_dim) += model.C();
    innovation.block(0, rep.measurement_offset(t + 1), m_dim, m_dim) += Matrix::Identity(m_dim, m_dim);
    const Matrix weighted = rep.D_X * innovation.transpose();  // z x m

    // dr/dK_t [dK] = -C A^n A_i ... A_{t+1} dK nu_{t+1}
    Matrix grad = Matrix::Zero(n_dim, m_dim);
    Matrix prod = I_n;  // A_i ... A_{t+1}
    for (int i = t; i < horizon; ++i) {
      if (i > t) prod = loops[static_cast<std::size_t>(i)] * prod;
      for (int n = 1; n <= n_dim; ++n) {
        const Matrix lead = model.CA_power(n) * prod;
        const Matrix& row = rep.residual_maps[static_cast<std::size_t>(i)][static_cast<std::size_t>(n - 1)];
        grad -= 2.0 * lead.transpose() * (row * weighted);
      }
    }
    out.gradient.push_back(std::move(grad));

    Matrix next = loops[static_cast<std::size_t>(t)] * error_map;
    next.block(0, rep.process_offset(t), n_dim, n_dim) += I_n - K[t] * model.C();
    next.block(0, rep.measurement_offset(t + 1), n_dim, m_dim) -= K[t];
    error_map = std::move(next);
  }
  return out;
}

double stacked_constant(const ModelSpec& model, const NoiseSpec& noise) {
  noise.check_compatible(model);
  double total = 0.0;
  for (int t = 0; t < model.horizon(); ++t) {
    for (int n = 1; n <= model.state_dim(); ++n) {
      for (int j = t + 1; j <= t + n; ++j) {
        const Matrix& G = model.CA_power(t + n - j);
        total += (G * noise.Q(j) * G.transpose()).trace();
      }
      total += noise.R(t + n + 1).trace();
    }
  }
  return total;
}

}  // namespace kfpo
