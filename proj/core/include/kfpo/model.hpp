#pragma once

#include "kfpo/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kfpo {

/// Linear time-invariant system x_{t+1} = A x_t + w_t, y_t = C x_t + v_t
/// observed over a horizon of M gains.
class ModelSpec {
 public:
  /// Throws DimensionError when A is not square, C does not match A, or any
  /// dimension (including the horizon) is zero.
  ModelSpec(Matrix A, Matrix C, int horizon);

  const Matrix& A() const noexcept { return A_; }
  const Matrix& C() const noexcept { return C_; }
  int state_dim() const noexcept { return static_cast<int>(A_.rows()); }
  int obs_dim() const noexcept { return static_cast<int>(C_.rows()); }
  int horizon() const noexcept { return horizon_; }

  /// Number of observations a trajectory must cover: y_1..y_{M+N}.
  int observation_count() const noexcept { return horizon_ + state_dim(); }

  const Matrix& CA() const noexcept { return ca_powers_[1]; }
  /// C A^n for n = 0..N.
  const Matrix& CA_power(int n) const { return ca_powers_.at(static_cast<std::size_t>(n)); }

 private:
  Matrix A_;
  Matrix C_;
  int horizon_;
  std::vector<Matrix> ca_powers_;
};

/// Noise covariance schedules. Q_t is stored for t = 0..M+N-1 and R_t for
/// t = 1..M+N; constant schedules are expanded on construction.
class NoiseSpec {
 public:
  NoiseSpec(std::vector<Matrix> process, std::vector<Matrix> measurement, Matrix P0, Vector x0_mean);

  static NoiseSpec constant(const ModelSpec& model, const Matrix& Q, const Matrix& R, Matrix P0,
                            Vector x0_mean);
  /// Q_t = Q + t * dQ, R_t = R.
  static NoiseSpec drifting(const ModelSpec& model, const Matrix& Q, const Matrix& dQ, const Matrix& R,
                            Matrix P0, Vector x0_mean);

  const Matrix& Q(int t) const;
  /// Measurement covariance at time t >= 1.
  const Matrix& R(int t) const;
  const Matrix& P0() const noexcept { return P0_; }
  const Vector& x0_mean() const noexcept { return x0_mean_; }

  int process_steps() const noexcept { return static_cast<int>(process_.size()); }
  int measurement_steps() const noexcept { return static_cast<int>(measurement_.size()); }

  /// Throws DimensionError naming the first field whose shape or length does
  /// not fit the model.
  void check_compatible(const ModelSpec& model) const;

 private:
  std::vector<Matrix> process_;
  std::vector<Matrix> measurement_;
  Matrix P0_;
  Vector x0_mean_;
};

struct AssumptionCheck {
  std::string name;
  bool passed = false;
  double witness = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;

  bool all_passed() const;
  const AssumptionCheck* find(const std::string& name) const;
};

/// Checks positive definiteness of every Q_t and R_t (witness: min eigenvalue),
/// P0 positive semidefinite, observability of (C, A) (witness: rank) and
/// invertibility of A (witness: min singular value). Shape problems throw.
ValidationReport validate(const ModelSpec& model, const NoiseSpec& noise);

struct Trajectory {
  /// y[t-1] holds y_t for t = 1..M+N.
  std::vector<Vector> y;
  /// x[t] for t = 0..M+N; empty when states were not retained.
  std::vector<Vector> x;

  const Vector& obs(int t) const { return y.at(static_cast<std::size_t>(t - 1)); }
  int length() const noexcept { return static_cast<int>(y.size()); }
};

enum class NoiseMode { Sampled, Noiseless };

/// Precomputed covariance factors for repeated trajectory sampling.
class Simulator {
 public:
  Simulator(const ModelSpec& model, const NoiseSpec& noise);

  Trajectory run(std::uint64_t seed, NoiseMode mode = NoiseMode::Sampled, bool keep_states = true) const;

 private:
  ModelSpec model_;
  NoiseSpec noise_;
  Matrix initial_factor_;
  std::vector<Matrix> process_factors_;
  std::vector<Matrix> measurement_factors_;
};

/// x_0 ~ N(x0_mean, P0), w_t ~ N(0, Q_t), v_t ~ N(0, R_t). Deterministic in the seed.
Trajectory simulate(const ModelSpec& model, const NoiseSpec& noise, std::uint64_t seed,
                    NoiseMode mode = NoiseMode::Sampled);

/// Stable 64-bit seed for trajectory `index` of a batch.
std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index);

class ObservationBatch {
 public:
  ObservationBatch(std::vector<Trajectory> trajectories, std::uint64_t master_seed);

  std::size_t size() const noexcept { return trajectories_.size(); }
  std::uint64_t master_seed() const noexcept { return master_seed_; }
  const std::vector<Trajectory>& trajectories() const noexcept { return trajectories_; }

  /// Observations at time t (1-based) of every trajectory as the columns of an m x L matrix.
  const Matrix& stacked(int t) const { return stacked_.at(static_cast<std::size_t>(t - 1)); }
  int length() const noexcept { return static_cast<int>(stacked_.size()); }

 private:
  std::vector<Trajectory> trajectories_;
  std::uint64_t master_seed_;
  std::vector<Matrix> stacked_;
};

ObservationBatch sample_batch(const ModelSpec& model, const NoiseSpec& noise, std::size_t count,
                              std::uint64_t master_seed, bool keep_states = false);

}  // namespace kfpo
