#include "kfpo/gains.hpp"

namespace kfpo {

GainSchedule::GainSchedule(StageMatrices gains) : gains_(std::move(gains)) {}

GainSchedule GainSchedule::zeros(const ModelSpec& model) {
  return GainSchedule(StageMatrices(static_cast<std::size_t>(model.horizon()),
                                    Matrix::Zero(model.state_dim(), model.obs_dim())));
}

Matrix GainSchedule::closed_loop(const ModelSpec& model, int t) const {
  return model.A() - (*this)[t] * model.CA();
}

std::vector<Matrix> GainSchedule::closed_loops(const ModelSpec& model) const {
  std::vector<Matrix> loops;
  loops.reserve(gains_.size());
  for (int t = 0; t < size(); ++t) loops.push_back(closed_loop(model, t));
  return loops;
}

void GainSchedule::check_compatible(const ModelSpec& model) const {
  if (size() != model.horizon()) {
    throw DimensionError("K", "expected " + std::to_string(model.horizon()) + " gains, got " +
                                  std::to_string(size()));
  }
  for (int t = 0; t < size(); ++t) {
    if ((*this)[t].rows() != model.state_dim() || (*this)[t].cols() != model.obs_dim()) {
      throw DimensionError("K[" + std::to_string(t) + "]", "must be N x m");
    }
  }
}

bool GainSchedule::all_finite() const {
  for (const auto& k : gains_) {
    if (!k.allFinite()) return false;
  }
  return true;
}

GainSchedule& GainSchedule::add_scaled(const StageMatrices& direction, double scale) {
  if (direction.size() != gains_.size()) throw std::invalid_argument("direction has wrong number of stages");
  for (std::size_t t = 0; t < gains_.size(); ++t) gains_[t] += scale * direction[t];
  return *this;
}

GainSchedule operator-(const GainSchedule& a, const GainSchedule& b) {
  GainSchedule out = a;
  return out.add_scaled(b.gains_, -1.0);
}

GainSchedule operator+(const GainSchedule& a, const GainSchedule& b) {
  GainSchedule out = a;
  return out.add_scaled(b.gains_, 1.0);
}

StageMatrices central_difference(const std::function<double(const GainSchedule&)>& f, const GainSchedule& K,
                                 double step) {
  StageMatrices grad;
  grad.reserve(static_cast<std::size_t>(K.size()));
  GainSchedule probe = K;
  for (int t = 0; t < K.size(); ++t) {
    Matrix g(K[t].rows(), K[t].cols());
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const double saved = probe[t](r, c);
        probe[t](r, c) = saved + step;
        const double up = f(probe);
        probe[t](r, c) = saved - step;
        const double down = f(probe);
        probe[t](r, c) = saved;
        g(r, c) = (up - down) / (2.0 * step);
      }
    }
    grad.push_back(std::move(g));
  }
  return grad;
}

}  // namespace kfpo
