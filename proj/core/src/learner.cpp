#include "kfpo/learner.hpp"

#include "kfpo/objective.hpp"
#include "kfpo/riccati.hpp"

#include <chrono>
#include <cmath>

namespace kfpo {

namespace {

void require_length(const ModelSpec& model, int length) {
  if (length < model.observation_count()) {
    throw std::invalid_argument("trajectory covers " + std::to_string(length) + " observations, need M+N = " +
                                std::to_string(model.observation_count()));
  }
}

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

// Forward filter pass over all trajectories at once (one column per sample),
// then a backward sweep accumulating sum_{i>=t} sum_n (C A^n A_i...A_{t+1})^T e^n_{i+1}.
GradientEstimate batched_gradient(const ModelSpec& model, const GainSchedule& K, const ObservationBatch& batch,
                                  const Vector& x_hat0, bool want_gradient) {
  K.check_compatible(model);
  require_length(model, batch.length());
  if (x_hat0.size() != model.state_dim()) throw DimensionError("x_hat0", "must have length N");

  const int horizon = model.horizon();
  const int n_dim = model.state_dim();
  const auto count = static_cast<Eigen::Index>(batch.size());
  const auto loops = K.closed_loops(model);

  std::vector<Matrix> innovations;  // y_{t+1} - CA xhat_t
  std::vector<Matrix> states;       // xhat_t, t = 0..M
  innovations.reserve(static_cast<std::size_t>(horizon));
  states.reserve(static_cast<std::size_t>(horizon) + 1);
  states.push_back(x_hat0.replicate(1, count));
  for (int t = 0; t < horizon; ++t) {
    const Matrix& x = states.back();
    Matrix nu = batch.stacked(t + 1) - model.CA() * x;
    Matrix next = model.A() * x + K[t] * nu;
    innovations.push_back(std::move(nu));
    states.push_back(std::move(next));
  }

  GradientEstimate est;
  est.samples = batch.size();
  est.batch_seed = batch.master_seed();
  const double inv_count = 1.0 / static_cast<double>(count);

  std::vector<Matrix> pulled(static_cast<std::size_t>(horizon), Matrix::Zero(n_dim, count));
  double total = 0.0;
  for (int i = 0; i < horizon; ++i) {
    const Matrix& x = states[static_cast<std::size_t>(i) + 1];
    Matrix& acc = pulled[static_cast<std::size_t>(i)];
    for (int n = 1; n <= n_dim; ++n) {
      const Matrix residual = batch.stacked(i + n + 1) - model.CA_power(n) * x;
      total += residual.squaredNorm();
      if (want_gradient) acc.noalias() += model.CA_power(n).transpose() * residual;
    }
  }
  est.sample_cost = total * inv_count;
  if (!want_gradient) return est;

  est.per_stage.resize(static_cast<std::size_t>(horizon));
  Matrix adjoint = Matrix::Zero(n_dim, count);
  for (int t = horizon - 1; t >= 0; --t) {
    if (t < horizon - 1) {
      adjoint = loops[static_cast<std::size_t>(t) + 1].transpose() * adjoint;
    }
    adjoint += pulled[static_cast<std::size_t>(t)];
    est.per_stage[static_cast<std::size_t>(t)] =
        (-2.0 * inv_count) * (adjoint * innovations[static_cast<std::size_t>(t)].transpose());
  }
  return est;
}

}  // namespace

PredictedObservations predict(const ModelSpec& model, const GainSchedule& K, const Trajectory& trajectory,
                              const Vector& x_hat0) {
  K.check_compatible(model);
  require_length(model, trajectory.length());
  if (x_hat0.size() != model.state_dim()) throw DimensionError("x_hat0", "must have length N");

  const int horizon = model.horizon();
  PredictedObservations out;
  out.x_hat.push_back(x_hat0);
  for (int t = 0; t < horizon; ++t) {
    out.x_hat.push_back(K.closed_loop(model, t) * out.x_hat.back() + K[t] * trajectory.obs(t + 1));
  }
  out.y_hat.resize(static_cast<std::size_t>(horizon));
  out.residual.resize(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    const Vector& x = out.x_hat[static_cast<std::size_t>(t) + 1];
    for (int n = 1; n <= model.state_dim(); ++n) {
      Vector y_hat = model.CA_power(n) * x;
      out.residual[static_cast<std::size_t>(t)].push_back(trajectory.obs(t + n + 1) - y_hat);
      out.y_hat[static_cast<std::size_t>(t)].push_back(std::move(y_hat));
    }
  }
  return out;
}

double sample_cost(const ModelSpec& model, const GainSchedule& K, const ObservationBatch& batch,
                   const Vector& x_hat0) {
  return batched_gradient(model, K, batch, x_hat0, false).sample_cost;
}

GradientEstimate estimate_gradient(const ModelSpec& model, const GainSchedule& K, const ObservationBatch& batch,
                                   const Vector& x_hat0) {
  return batched_gradient(model, K, batch, x_hat0, true);
}

RunTrace run_gd(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K0, const GdOptions& options) {
  K0.check_compatible(model);
  if (options.iterations < 1) throw std::invalid_argument("iteration count V must be at least 1");

  const RiccatiSolution optimum = solve_riccati(model, noise);
  const double f_opt = cost(model, noise, optimum.gains);
  double eta = 0.0;
  if (options.eta) {
    eta = *options.eta;
  } else {
    eta = diagnostics(model, noise, K0, f_opt).eta;
  }
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("step size eta must be positive and finite");

  RunTrace trace;
  GainSchedule K = K0;
  CostGradient g = gradient(model, noise, K);
  trace.initial_cost = g.value;
  const Stopwatch clock(options.record_wall_time);
  for (int k = 1; k <= options.iterations; ++k) {
    const double step_norm = g.norm();
    K.add_scaled(g.per_stage, -eta);
    g = gradient(model, noise, K);

    TraceRecord rec;
    rec.iter = k;
    rec.cost = g.value;
    rec.normalized_error = (g.value - f_opt) / f_opt;
    rec.grad_norm = step_norm;
    rec.seconds = clock.seconds();
    trace.records.push_back(rec);

    if (!std::isfinite(g.value) || g.value > kDivergenceFactor * trace.initial_cost) {
      trace.diverged = true;
      trace.message = "divergence guard: f(K_" + std::to_string(k) + ") = " + std::to_string(g.value) +
                      " exceeds 10 f(K_0) = " + std::to_string(kDivergenceFactor * trace.initial_cost) +
                      " (eta = " + std::to_string(eta) + ")";
      break;
    }
  }
  trace.final_gains = std::move(K);
  return trace;
}

BatchSource simulated_source(const ModelSpec& model, const NoiseSpec& noise) {
  return [model, noise](std::uint64_t seed, std::size_t count) {
    return sample_batch(model, noise, count, seed);
  };
}

KnownNoiseEvaluator KnownNoiseEvaluator::make(const ModelSpec& model, const NoiseSpec& noise) {
  KnownNoiseEvaluator ev{noise, solve_riccati(model, noise).gains, 0.0};
  ev.optimal_cost = cost(model, noise, ev.optimal_gains);
  return ev;
}

RunTrace run_sgd(const ModelSpec& model, const GainSchedule& K0, const Vector& x_hat0, const SGDConfig& config,
                 const BatchSource& source, const std::optional<KnownNoiseEvaluator>& evaluator) {
  K0.check_compatible(model);
  if (!(config.eta > 0.0)) throw std::invalid_argument("step size eta must be positive");
  if (config.iterations < 1) throw std::invalid_argument("iteration count V must be at least 1");
  if (config.samples < 1) throw std::invalid_argument("sample count L must be at least 1");

  ObservationBatch batch = source(config.master_seed, config.samples);
  GainSchedule K = K0;
  GradientEstimate est = estimate_gradient(model, K, batch, x_hat0);

  RunTrace trace;
  const double initial_sample_cost = est.sample_cost;
  trace.initial_cost = evaluator ? cost(model, evaluator->noise, K) : initial_sample_cost;
  const Stopwatch clock(config.record_wall_time);

  for (int k = 1; k <= config.iterations; ++k) {
    const double step_norm = est.norm();
    K.add_scaled(est.per_stage, -config.eta);
    if (config.resample_each_iter) {
      batch = source(trajectory_seed(config.master_seed, static_cast<std::uint64_t>(k)), config.samples);
    }
    est = estimate_gradient(model, K, batch, x_hat0);

    TraceRecord rec;
    rec.iter = k;
    rec.grad_norm = step_norm;
    if (evaluator) {
      rec.cost = cost(model, evaluator->noise, K);
      rec.normalized_error = (rec.cost - evaluator->optimal_cost) / evaluator->optimal_cost;
    } else {
      rec.cost = est.sample_cost;
    }
    rec.seconds = clock.seconds();
    trace.records.push_back(rec);

    if (!std::isfinite(est.sample_cost) || est.sample_cost > kDivergenceFactor * initial_sample_cost) {
      trace.diverged = true;
      trace.message = "divergence guard: sample cost at iteration " + std::to_string(k) + " = " +
                      std::to_string(est.sample_cost) + " exceeds 10x its initial value " +
                      std::to_string(initial_sample_cost);
      break;
    }
  }
  trace.final_gains = std::move(K);
  return trace;
}

}  // namespace kfpo
