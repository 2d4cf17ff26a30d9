#pragma once

#include "kfpo/gains.hpp"
#include "kfpo/model.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>

namespace kfpo {

/// Filter run of one trajectory under gains K:
///   xhat_{t+1} = A_t xhat_t + K_t y_{t+1},  yhat^n_{t+1} = C A^n xhat_{t+1}.
struct PredictedObservations {
  std::vector<Vector> x_hat;                 // xhat_0..xhat_M
  std::vector<std::vector<Vector>> y_hat;     // y_hat[t][n-1] = yhat^n_{t+1}
  std::vector<std::vector<Vector>> residual;  // y_{t+n+1} - yhat^n_{t+1}
};

/// Throws std::invalid_argument when the trajectory has fewer than M+N observations.
PredictedObservations predict(const ModelSpec& model, const GainSchedule& K, const Trajectory& trajectory,
                              const Vector& x_hat0);

/// (1/L) sum_l sum_{t,n} |y_{t+n+1}(l) - yhat^n_{t+1}(l)|^2. Estimates f(K) plus a K-independent constant.
double sample_cost(const ModelSpec& model, const GainSchedule& K, const ObservationBatch& batch,
                   const Vector& x_hat0);

struct GradientEstimate {
  StageMatrices per_stage;
  double sample_cost = 0.0;
  std::size_t samples = 0;
  std::uint64_t batch_seed = 0;

  double norm() const { return linalg::frobenius_norm(per_stage); }
};

/// Observation-only gradient estimate
///   grad_t = (1/L) sum_{i>=t} sum_l sum_n d/dK_t |e^n_{i+1}(l)|^2,
///   d/dK_t |e|^2 = -2 (C A^n A_i ... A_{t+1})^T e (y_{t+1} - CA xhat_t)^T,
/// where CA xhat_t carries the prod A_j xhat_0 and the K_j y_{j+1} history terms.
/// It is the exact gradient of sample_cost on the same batch.
GradientEstimate estimate_gradient(const ModelSpec& model, const GainSchedule& K, const ObservationBatch& batch,
                                   const Vector& x_hat0);

struct TraceRecord {
  int iter = 0;
  double cost = 0.0;
  double normalized_error = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = 0.0;
  double seconds = 0.0;
};

/// Record k (iter = k, k = 1..V) describes K_k after the k-th update; grad_norm is
/// the norm of the step direction that produced it.
struct RunTrace {
  std::vector<TraceRecord> records;
  GainSchedule final_gains;
  double initial_cost = 0.0;
  bool diverged = false;
  std::string message;
};

/// Stop when the tracked cost exceeds this multiple of its initial value.
inline constexpr double kDivergenceFactor = 10.0;

struct GdOptions {
  std::optional<double> eta;  // defaults to min(c3, c4)
  int iterations = 1000;
  bool record_wall_time = false;
};

/// Exact gradient descent K_{k+1} = K_k - eta grad f(K_k) with known noise.
RunTrace run_gd(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K0, const GdOptions& options);

struct SGDConfig {
  double eta = 0.0008;
  int iterations = 4000;
  std::size_t samples = 200;
  std::uint64_t master_seed = 1;
  bool resample_each_iter = false;
  bool record_wall_time = false;
};

/// Produces a fresh batch of observations for a seed.
using BatchSource = std::function<ObservationBatch(std::uint64_t seed, std::size_t count)>;

BatchSource simulated_source(const ModelSpec& model, const NoiseSpec& noise);

/// Evaluation-only access to the true noise, so traces can report f(K_k) and the
/// normalized error (f(K_k) - f(K*)) / f(K*).
struct KnownNoiseEvaluator {
  NoiseSpec noise;
  GainSchedule optimal_gains;
  double optimal_cost = 0.0;

  static KnownNoiseEvaluator make(const ModelSpec& model, const NoiseSpec& noise);
};

/// Stochastic gradient descent on the observation-only cost. The batch is drawn
/// once from `source` with config.master_seed and reused every iteration unless
/// resample_each_iter is set.
RunTrace run_sgd(const ModelSpec& model, const GainSchedule& K0, const Vector& x_hat0, const SGDConfig& config,
                 const BatchSource& source, const std::optional<KnownNoiseEvaluator>& evaluator = std::nullopt);

}  // namespace kfpo
