#include "kfpo/dualsim.hpp"
#include "kfpo/learner.hpp"
#include "kfpo/objective.hpp"
#include "kfpo/riccati.hpp"

#include <benchmark/benchmark.h>

namespace {

using kfpo::GainSchedule;
using kfpo::Matrix;
using kfpo::ModelSpec;
using kfpo::NoiseSpec;
using kfpo::Vector;

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

struct Reference {
  ModelSpec model{rows({{0.24, -0.18, -0.3118}, {-0.0578, 0.4839, -0.0279}, {-0.1283, -0.0138, 0.4761}}),
                  rows({{0.0, 0.7071, 1.2247}, {0.7071, -0.5125, 1.1124}}), 3};
  NoiseSpec noise = NoiseSpec::constant(
      model, rows({{0.61, -0.195, -0.3377}, {-0.195, 0.775, -0.0953}, {-0.3377, -0.0953, 0.665}}),
      rows({{0.9, 0.0}, {0.0, 0.6}}), Matrix::Zero(3, 3), (Vector(3) << 1.0, 1.0, 0.0).finished());
  GainSchedule K = GainSchedule::zeros(model);
};

const Reference& reference() {
  static const Reference r;
  return r;
}

void BM_Riccati(benchmark::State& state) {
  const auto& r = reference();
  for (auto _ : state) benchmark::DoNotOptimize(kfpo::solve_riccati(r.model, r.noise));
}
BENCHMARK(BM_Riccati);

void BM_Cost(benchmark::State& state) {
  const auto& r = reference();
  for (auto _ : state) benchmark::DoNotOptimize(kfpo::cost(r.model, r.noise, r.K));
}
BENCHMARK(BM_Cost);

void BM_Gradient(benchmark::State& state) {
  const auto& r = reference();
  for (auto _ : state) benchmark::DoNotOptimize(kfpo::gradient(r.model, r.noise, r.K));
}
BENCHMARK(BM_Gradient);

void BM_StackedGradient(benchmark::State& state) {
  const auto& r = reference();
  for (auto _ : state) {
    const auto rep = kfpo::build_stacked(r.model, r.noise, r.K);
    benchmark::DoNotOptimize(kfpo::stacked_cost_and_gradient(rep, r.model, r.K));
  }
}
BENCHMARK(BM_StackedGradient);

void BM_SampleBatch(benchmark::State& state) {
  const auto& r = reference();
  const auto L = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kfpo::sample_batch(r.model, r.noise, L, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleBatch)->Arg(200)->Arg(2000);

void BM_EstimateGradient(benchmark::State& state) {
  const auto& r = reference();
  const auto batch = kfpo::sample_batch(r.model, r.noise, static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(kfpo::estimate_gradient(r.model, r.K, batch, r.noise.x0_mean()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EstimateGradient)->Arg(200)->Arg(2000);

void BM_DualMonteCarlo(benchmark::State& state) {
  const auto& r = reference();
  for (auto _ : state) benchmark::DoNotOptimize(kfpo::dual_cost_mc(r.model, r.noise, r.K, 10000, 1));
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_DualMonteCarlo);

}  // namespace

BENCHMARK_MAIN();
