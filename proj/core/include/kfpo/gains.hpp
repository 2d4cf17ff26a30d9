#pragma once

#include "kfpo/linalg.hpp"
#include "kfpo/model.hpp"

#include <functional>
#include <vector>

namespace kfpo {

/// Decision variable K = (K_0, ..., K_{M-1}), each K_t of shape N x m.
class GainSchedule {
 public:
  GainSchedule() = default;
  explicit GainSchedule(StageMatrices gains);

  static GainSchedule zeros(const ModelSpec& model);

  int size() const noexcept { return static_cast<int>(gains_.size()); }
  const Matrix& operator[](int t) const { return gains_[static_cast<std::size_t>(t)]; }
  Matrix& operator[](int t) { return gains_[static_cast<std::size_t>(t)]; }
  const StageMatrices& stages() const noexcept { return gains_; }

  /// A_t = A - K_t C A.
  Matrix closed_loop(const ModelSpec& model, int t) const;
  std::vector<Matrix> closed_loops(const ModelSpec& model) const;

  /// Throws DimensionError unless there are exactly M gains of shape N x m.
  void check_compatible(const ModelSpec& model) const;
  bool all_finite() const;

  double frobenius_norm() const { return linalg::frobenius_norm(gains_); }

  /// this += scale * direction, stage by stage.
  GainSchedule& add_scaled(const StageMatrices& direction, double scale);

  friend GainSchedule operator-(const GainSchedule& a, const GainSchedule& b);
  friend GainSchedule operator+(const GainSchedule& a, const GainSchedule& b);

 private:
  StageMatrices gains_;
};

/// Central differences of `f` with respect to every entry of every gain.
StageMatrices central_difference(const std::function<double(const GainSchedule&)>& f, const GainSchedule& K,
                                 double step);

}  // namespace kfpo
