#include "kfpo/model.hpp"

#include <random>

namespace kfpo {

namespace {

std::string indexed(const char* name, int t) { return std::string(name) + "[" + std::to_string(t) + "]"; }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Vector standard_normal(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace

ModelSpec::ModelSpec(Matrix A, Matrix C, int horizon) : A_(std::move(A)), C_(std::move(C)), horizon_(horizon) {
  if (A_.rows() == 0 || A_.rows() != A_.cols()) {
    throw DimensionError("A", "must be a non-empty square matrix, got " + std::to_string(A_.rows()) + "x" +
                                  std::to_string(A_.cols()));
  }
  if (C_.rows() == 0 || C_.cols() != A_.cols()) {
    throw DimensionError("C", "must be m x N with N = " + std::to_string(A_.rows()) + ", got " +
                                  std::to_string(C_.rows()) + "x" + std::to_string(C_.cols()));
  }
  if (horizon_ < 1) {
    throw DimensionError("M", "horizon must be at least 1");
  }
  const int n = state_dim();
  ca_powers_.reserve(static_cast<std::size_t>(n) + 1);
  ca_powers_.push_back(C_);
  for (int k = 1; k <= n; ++k) ca_powers_.push_back(ca_powers_.back() * A_);
}

NoiseSpec::NoiseSpec(std::vector<Matrix> process, std::vector<Matrix> measurement, Matrix P0, Vector x0_mean)
    : process_(std::move(process)),
      measurement_(std::move(measurement)),
      P0_(std::move(P0)),
      x0_mean_(std::move(x0_mean)) {}

NoiseSpec NoiseSpec::constant(const ModelSpec& model, const Matrix& Q, const Matrix& R, Matrix P0,
                              Vector x0_mean) {
  const auto steps = static_cast<std::size_t>(model.observation_count());
  return NoiseSpec(std::vector<Matrix>(steps, Q), std::vector<Matrix>(steps, R), std::move(P0),
                   std::move(x0_mean));
}

NoiseSpec NoiseSpec::drifting(const ModelSpec& model, const Matrix& Q, const Matrix& dQ, const Matrix& R,
                              Matrix P0, Vector x0_mean) {
  if (dQ.rows() != Q.rows() || dQ.cols() != Q.cols()) {
    throw DimensionError("dQ", "must have the shape of Q");
  }
  const int steps = model.observation_count();
  std::vector<Matrix> process;
  process.reserve(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) process.push_back(Q + static_cast<double>(t) * dQ);
  return NoiseSpec(std::move(process), std::vector<Matrix>(static_cast<std::size_t>(steps), R), std::move(P0),
                   std::move(x0_mean));
}

const Matrix& NoiseSpec::Q(int t) const {
  if (t < 0 || t >= process_steps()) {
    throw std::out_of_range("Q index " + std::to_string(t) + " outside schedule");
  }
  return process_[static_cast<std::size_t>(t)];
}

const Matrix& NoiseSpec::R(int t) const {
  if (t < 1 || t > measurement_steps()) {
    throw std::out_of_range("R index " + std::to_string(t) + " outside schedule");
  }
  return measurement_[static_cast<std::size_t>(t - 1)];
}

void NoiseSpec::check_compatible(const ModelSpec& model) const {
  const int n = model.state_dim();
  const int m = model.obs_dim();
  const int steps = model.observation_count();
  if (process_steps() < steps) {
    throw DimensionError("Q", "schedule has " + std::to_string(process_steps()) + " entries, need " +
                                  std::to_string(steps) + " (t = 0..M+N-1)");
  }
  if (measurement_steps() < steps) {
    throw DimensionError("R", "schedule has " + std::to_string(measurement_steps()) + " entries, need " +
                                  std::to_string(steps) + " (t = 1..M+N)");
  }
  for (int t = 0; t < process_steps(); ++t) {
    const Matrix& q = process_[static_cast<std::size_t>(t)];
    if (q.rows() != n || q.cols() != n) throw DimensionError(indexed("Q", t), "must be N x N");
  }
  for (int t = 1; t <= measurement_steps(); ++t) {
    const Matrix& r = measurement_[static_cast<std::size_t>(t - 1)];
    if (r.rows() != m || r.cols() != m) throw DimensionError(indexed("R", t), "must be m x m");
  }
  if (P0_.rows() != n || P0_.cols() != n) throw DimensionError("P0", "must be N x N");
  if (x0_mean_.size() != n) throw DimensionError("x0_mean", "must have length N");
}

bool ValidationReport::all_passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

const AssumptionCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

ValidationReport validate(const ModelSpec& model, const NoiseSpec& noise) {
  noise.check_compatible(model);
  ValidationReport report;

  const auto definite = [](const Matrix& m, const std::string& name) {
    AssumptionCheck c;
    c.name = name;
    c.witness = linalg::min_eigenvalue(m);
    const bool symmetric = linalg::is_symmetric(m, 1e-12);
    c.passed = symmetric && c.witness > 0.0;
    c.detail = symmetric ? "min eigenvalue" : "not symmetric";
    return c;
  };
  for (int t = 0; t < noise.process_steps(); ++t) report.checks.push_back(definite(noise.Q(t), indexed("Q", t)));
  for (int t = 1; t <= noise.measurement_steps(); ++t) {
    report.checks.push_back(definite(noise.R(t), indexed("R", t)));
  }

  {
    AssumptionCheck c;
    c.name = "P0";
    c.witness = linalg::min_eigenvalue(noise.P0());
    const double scale = std::max(1.0, linalg::spectral_norm(noise.P0()));
    const bool symmetric = linalg::is_symmetric(noise.P0(), 1e-12);
    c.passed = symmetric && c.witness >= -1e-10 * scale;
    c.detail = symmetric ? "min eigenvalue (PSD required)" : "not symmetric";
    report.checks.push_back(c);
  }

  {
    const int n = model.state_dim();
    const int m = model.obs_dim();
    Matrix obs(static_cast<Eigen::Index>(n) * m, n);
    for (int k = 0; k < n; ++k) obs.middleRows(static_cast<Eigen::Index>(k) * m, m) = model.CA_power(k);
    AssumptionCheck c;
    c.name = "observability";
    const int r = linalg::rank(obs);
    c.witness = r;
    c.passed = r == n;
    c.detail = "rank of [C; CA; ...; CA^{N-1}] (need " + std::to_string(n) + ")";
    report.checks.push_back(c);
  }

  {
    AssumptionCheck c;
    c.name = "A invertible";
    c.witness = linalg::min_singular_value(model.A());
    c.passed = c.witness > 1e-10 * std::max(1.0, linalg::spectral_norm(model.A()));
    c.detail = "min singular value of A";
    report.checks.push_back(c);
  }
  return report;
}

Simulator::Simulator(const ModelSpec& model, const NoiseSpec& noise) : model_(model), noise_(noise) {
  noise_.check_compatible(model_);
  initial_factor_ = linalg::covariance_factor(noise_.P0(), "P0", false);
  const int steps = model_.observation_count();
  process_factors_.reserve(static_cast<std::size_t>(steps));
  measurement_factors_.reserve(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    process_factors_.push_back(linalg::covariance_factor(noise_.Q(t), indexed("Q", t), true));
    measurement_factors_.push_back(linalg::covariance_factor(noise_.R(t + 1), indexed("R", t + 1), true));
  }
}

Trajectory Simulator::run(std::uint64_t seed, NoiseMode mode, bool keep_states) const {
  const int n = model_.state_dim();
  const int m = model_.obs_dim();
  const int steps = model_.observation_count();
  const bool noisy = mode == NoiseMode::Sampled;
  std::mt19937_64 rng(seed);

  Trajectory traj;
  traj.y.reserve(static_cast<std::size_t>(steps));
  if (keep_states) traj.x.reserve(static_cast<std::size_t>(steps) + 1);

  Vector x = noise_.x0_mean();
  if (noisy) x += initial_factor_ * standard_normal(rng, n);
  if (keep_states) traj.x.push_back(x);

  for (int t = 0; t < steps; ++t) {
    x = model_.A() * x;
    if (noisy) x += process_factors_[static_cast<std::size_t>(t)] * standard_normal(rng, n);
    Vector y = model_.C() * x;
    if (noisy) y += measurement_factors_[static_cast<std::size_t>(t)] * standard_normal(rng, m);
    if (keep_states) traj.x.push_back(x);
    traj.y.push_back(std::move(y));
  }
  return traj;
}

Trajectory simulate(const ModelSpec& model, const NoiseSpec& noise, std::uint64_t seed, NoiseMode mode) {
  return Simulator(model, noise).run(seed, mode, true);
}

std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index) {
  return splitmix64(splitmix64(master_seed) ^ (index * 0xD1B54A32D192ED03ULL + 1));
}

ObservationBatch::ObservationBatch(std::vector<Trajectory> trajectories, std::uint64_t master_seed)
    : trajectories_(std::move(trajectories)), master_seed_(master_seed) {
  if (trajectories_.empty()) throw std::invalid_argument("observation batch must be non-empty");
  const int steps = trajectories_.front().length();
  const auto m = trajectories_.front().y.front().size();
  const auto count = static_cast<Eigen::Index>(trajectories_.size());
  stacked_.assign(static_cast<std::size_t>(steps), Matrix(m, count));
  for (Eigen::Index l = 0; l < count; ++l) {
    const auto& traj = trajectories_[static_cast<std::size_t>(l)];
    if (traj.length() != steps) throw std::invalid_argument("trajectories in a batch must share a length");
    for (int t = 0; t < steps; ++t) stacked_[static_cast<std::size_t>(t)].col(l) = traj.y[static_cast<std::size_t>(t)];
  }
}

ObservationBatch sample_batch(const ModelSpec& model, const NoiseSpec& noise, std::size_t count,
                              std::uint64_t master_seed, bool keep_states) {
  if (count == 0) throw std::invalid_argument("sample count L must be at least 1");
  const Simulator sim(model, noise);
  std::vector<Trajectory> trajectories;
  trajectories.reserve(count);
  for (std::size_t l = 0; l < count; ++l) {
    trajectories.push_back(sim.run(trajectory_seed(master_seed, l), NoiseMode::Sampled, keep_states));
  }
  return ObservationBatch(std::move(trajectories), master_seed);
}

}  // namespace kfpo
