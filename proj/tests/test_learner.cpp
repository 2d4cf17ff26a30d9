#include "kfpo/dualsim.hpp"
#include "kfpo/learner.hpp"
#include "kfpo/objective.hpp"
#include "kfpo/riccati.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace kfpo;
using namespace kfpo::testing;

namespace {

ObservationBatch single(const Trajectory& t) { return ObservationBatch({t}, 0); }

}  // namespace

TEST(Predict, OpenLoopWithZeroGain) {
  const auto model = reference_model();
  const auto traj = simulate(model, reference_noise(), 4);
  const Vector x0 = reference_x0();
  const auto pred = predict(model, GainSchedule::zeros(model), traj, x0);
  const Matrix& A = reference_A();
  const Matrix& C = reference_C();
  ASSERT_EQ(pred.x_hat.size(), 4u);
  for (int t = 0; t <= 3; ++t) {
    EXPECT_LT((pred.x_hat[static_cast<std::size_t>(t)] - oracle::power(A, t) * x0).norm(), 1e-15);
  }
  for (int t = 0; t < 3; ++t) {
    for (int n = 1; n <= 3; ++n) {
      const Vector expected = C * oracle::power(A, n + t + 1) * x0;
      const auto& yh = pred.y_hat[static_cast<std::size_t>(t)][static_cast<std::size_t>(n - 1)];
      EXPECT_LT((yh - expected).norm(), 1e-15);
      const auto& e = pred.residual[static_cast<std::size_t>(t)][static_cast<std::size_t>(n - 1)];
      EXPECT_LT((e - (traj.obs(t + n + 1) - expected)).norm(), 1e-15);
    }
  }
}

TEST(Predict, RecursionMatchesProductForm) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instance(rng, 1 + trial % 4, 1 + trial % 3, 1 + trial % 5);
    const auto K = random_gains(rng, inst.model, 0.5);
    const auto traj = simulate(inst.model, inst.noise, static_cast<std::uint64_t>(trial));
    const auto pred = predict(inst.model, K, traj, inst.noise.x0_mean());
    for (int t = 0; t <= inst.model.horizon(); ++t) {
      const Vector expected = oracle::filtered_state(inst.model, K, traj, inst.noise.x0_mean(), t);
      EXPECT_LT((pred.x_hat[static_cast<std::size_t>(t)] - expected).norm(), 1e-12 * (1.0 + expected.norm()));
    }
  }
}

TEST(Predict, PerfectInformationGivesZeroResidual) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  const auto Kstar = solve_riccati(model, noise).gains;
  const auto traj = simulate(model, noise, 1, NoiseMode::Noiseless);
  const auto pred = predict(model, Kstar, traj, reference_x0());
  for (const auto& row : pred.residual)
    for (const auto& e : row) EXPECT_LT(e.norm(), 1e-14);
  EXPECT_LT(sample_cost(model, Kstar, single(traj), reference_x0()), 1e-28);
}

TEST(Predict, ShortTrajectoryThrows) {
  const auto model = reference_model();
  auto traj = simulate(model, reference_noise(), 1);
  traj.y.pop_back();
  EXPECT_THROW(predict(model, GainSchedule::zeros(model), traj, reference_x0()), std::invalid_argument);
}

TEST(SampleCost, DifferenceTracksClosedForm) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  const auto Kstar = solve_riccati(model, noise).gains;
  std::mt19937_64 rng(2);
  const auto K = random_gains(rng, model, 0.2);
  const auto batch = sample_batch(model, noise, 20000, 8);
  std::vector<double> diffs;
  for (const auto& traj : batch.trajectories()) {
    const auto b = single(traj);
    diffs.push_back(sample_cost(model, K, b, reference_x0()) - sample_cost(model, Kstar, b, reference_x0()));
  }
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  const double se = std::sqrt(var / static_cast<double>(diffs.size() - 1) / static_cast<double>(diffs.size()));
  EXPECT_LT(std::abs(mean - (cost(model, noise, K) - kReferenceOptimalCost)), 4.0 * se);
  const double pooled = sample_cost(model, K, batch, reference_x0()) - sample_cost(model, Kstar, batch, reference_x0());
  EXPECT_NEAR(pooled, mean, 1e-10);
}

TEST(SampleCost, ConvergesToStackedValue) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  std::mt19937_64 rng(3);
  const auto K = random_gains(rng, model, 0.2);
  const double f1 = stacked_cost_and_gradient(build_stacked(model, noise, K), model, K).f1;
  const auto batch = sample_batch(model, noise, 100000, 21);
  EXPECT_LT(std::abs(sample_cost(model, K, batch, reference_x0()) - f1) / f1, 0.01);
}

TEST(EstimateGradient, IsExactGradientOfSampleCost) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 15; ++trial) {
    const auto inst = random_instance(rng, 1 + trial % 4, 1 + trial % 3, 1 + trial % 5);
    const auto K = random_gains(rng, inst.model, 0.3);
    const auto batch = sample_batch(inst.model, inst.noise, 25, static_cast<std::uint64_t>(trial));
    const Vector& x0 = inst.noise.x0_mean();
    const auto est = estimate_gradient(inst.model, K, batch, x0);
    const auto fd = oracle::finite_difference(
        [&](const GainSchedule& k) { return sample_cost(inst.model, k, batch, x0); }, K, 1e-6);
    EXPECT_LT(oracle::relative_error(est.per_stage, fd), 1e-6) << "trial " << trial;
    EXPECT_NEAR(est.sample_cost, sample_cost(inst.model, K, batch, x0), 1e-12 * (1.0 + est.sample_cost));
    EXPECT_EQ(est.samples, 25u);
  }
}

TEST(EstimateGradient, MatchesTermByTermFormula) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto inst = random_instance(rng, 1 + trial % 4, 1 + trial % 3, 1 + trial % 5);
    const auto K = random_gains(rng, inst.model, 0.3);
    const auto batch = sample_batch(inst.model, inst.noise, 10, 50 + static_cast<std::uint64_t>(trial));
    const auto est = estimate_gradient(inst.model, K, batch, inst.noise.x0_mean());
    const auto literal = oracle::sample_gradient(inst.model, K, batch.trajectories(), inst.noise.x0_mean());
    EXPECT_LT(oracle::relative_error(est.per_stage, literal), 1e-12) << "trial " << trial;
  }
}

TEST(EstimateGradient, UnbiasedOverIndependentBatches) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  std::mt19937_64 rng(6);
  const auto K = random_gains(rng, model, 0.2);
  const auto exact = gradient(model, noise, K).per_stage;
  const int reps = 1000;
  StageMatrices sum(3, Matrix::Zero(3, 2)), sum_sq(3, Matrix::Zero(3, 2));
  for (int r = 0; r < reps; ++r) {
    const auto est = estimate_gradient(model, K, sample_batch(model, noise, 1, 9000 + static_cast<std::uint64_t>(r)),
                                       reference_x0());
    for (std::size_t t = 0; t < 3; ++t) {
      sum[t] += est.per_stage[t];
      sum_sq[t] += est.per_stage[t].cwiseProduct(est.per_stage[t]);
    }
  }
  for (std::size_t t = 0; t < 3; ++t) {
    const Matrix mean = sum[t] / reps;
    const Matrix var = (sum_sq[t] / reps - mean.cwiseProduct(mean)) * (reps / (reps - 1.0));
    const Matrix z = (mean - exact[t]).cwiseQuotient((var / reps).cwiseSqrt());
    EXPECT_LT(z.cwiseAbs().maxCoeff(), 4.0) << "stage " << t;
  }
}

TEST(EstimateGradient, ErrorShrinksWithSampleCount) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  const auto Kstar = solve_riccati(model, noise).gains;
  const auto median_error = [&](std::size_t L) {
    std::vector<double> errs;
    for (int r = 0; r < 21; ++r) {
      const auto batch = sample_batch(model, noise, L, 77 * L + static_cast<std::uint64_t>(r));
      errs.push_back(estimate_gradient(model, Kstar, batch, reference_x0()).norm());
    }
    std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
    return errs[10];
  };
  const double ratio = median_error(100) / median_error(1600);
  EXPECT_GT(ratio, 2.5);
  EXPECT_LT(ratio, 6.5);
}

TEST(RunGd, MonotoneWithReferenceStep) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  GdOptions opt;
  opt.eta = 0.0008;
  opt.iterations = 1000;
  const auto trace = run_gd(model, noise, GainSchedule::zeros(model), opt);
  ASSERT_EQ(trace.records.size(), 1000u);
  EXPECT_FALSE(trace.diverged);
  EXPECT_NEAR(trace.initial_cost, kReferenceZeroGainCost, 1e-12);
  double prev = trace.initial_cost;
  for (std::size_t k = 0; k < trace.records.size(); ++k) {
    EXPECT_EQ(trace.records[k].iter, static_cast<int>(k + 1));
    EXPECT_LE(trace.records[k].cost, prev);
    EXPECT_NEAR(trace.records[k].normalized_error,
                (trace.records[k].cost - kReferenceOptimalCost) / kReferenceOptimalCost, 1e-9);
    EXPECT_EQ(trace.records[k].seconds, 0.0);
    prev = trace.records[k].cost;
  }
  EXPECT_LT(trace.records.back().normalized_error, trace.records.front().normalized_error);
}

TEST(RunGd, AutomaticStepDescends) {
  std::mt19937_64 rng(7);
  const auto inst = random_instance(rng, 2, 1, 3);
  GdOptions opt;
  opt.iterations = 50;
  const auto trace = run_gd(inst.model, inst.noise, random_gains(rng, inst.model, 0.3), opt);
  double prev = trace.initial_cost;
  for (const auto& r : trace.records) {
    EXPECT_LE(r.cost, prev);
    prev = r.cost;
  }
}

TEST(RunGd, StartingAtOptimumStaysThere) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  GdOptions opt;
  opt.eta = 0.0008;
  opt.iterations = 20;
  const auto trace = run_gd(model, noise, solve_riccati(model, noise).gains, opt);
  for (const auto& r : trace.records) EXPECT_LT(std::abs(r.normalized_error), 1e-14);
}

TEST(RunGd, GainAndCostEnvelopes) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  const auto Kstar = solve_riccati(model, noise).gains;
  const GainSchedule K0 = GainSchedule::zeros(model);
  const auto d = diagnostics(model, noise, K0, kReferenceOptimalCost);
  GdOptions opt;
  opt.eta = 0.0008;
  opt.iterations = 300;
  const auto trace = run_gd(model, noise, K0, opt);
  const double alpha = *opt.eta / (8.0 * d.c1);
  const double dist0 = std::pow((K0 - Kstar).frobenius_norm(), 2);
  const double gap0 = trace.initial_cost - kReferenceOptimalCost;
  for (const auto& r : trace.records) {
    EXPECT_LE(r.cost - kReferenceOptimalCost, gap0 * std::pow(1.0 - 2.0 * alpha, r.iter));
  }
  EXPECT_LE(std::pow((trace.final_gains - Kstar).frobenius_norm(), 2),
            d.c10 * std::pow(1.0 - alpha, opt.iterations) * dist0);
}

TEST(RunGd, DivergenceGuard) {
  const auto model = reference_model();
  GdOptions opt;
  opt.eta = 50.0;
  opt.iterations = 100;
  const auto trace = run_gd(model, reference_noise(), GainSchedule::zeros(model), opt);
  EXPECT_TRUE(trace.diverged);
  EXPECT_FALSE(trace.message.empty());
  EXPECT_LT(trace.records.size(), 100u);
}

TEST(RunSgd, FixedBatchIsDeterministic) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  SGDConfig cfg;
  cfg.iterations = 50;
  cfg.samples = 50;
  cfg.master_seed = 3;
  const auto eval = KnownNoiseEvaluator::make(model, noise);
  const auto a = run_sgd(model, GainSchedule::zeros(model), reference_x0(), cfg, simulated_source(model, noise), eval);
  const auto b = run_sgd(model, GainSchedule::zeros(model), reference_x0(), cfg, simulated_source(model, noise), eval);
  ASSERT_EQ(a.records.size(), 50u);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].cost, b.records[k].cost);
    EXPECT_EQ(a.records[k].normalized_error, b.records[k].normalized_error);
  }
  EXPECT_LT(a.records.back().normalized_error, (kReferenceZeroGainCost - kReferenceOptimalCost) / kReferenceOptimalCost);
}

TEST(RunSgd, FixedBatchDrawnOnce) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  std::vector<std::uint64_t> seeds;
  const auto base = simulated_source(model, noise);
  BatchSource recording = [&](std::uint64_t seed, std::size_t count) {
    seeds.push_back(seed);
    return base(seed, count);
  };
  SGDConfig cfg;
  cfg.iterations = 5;
  cfg.samples = 10;
  run_sgd(model, GainSchedule::zeros(model), reference_x0(), cfg, recording);
  EXPECT_EQ(seeds.size(), 1u);
  seeds.clear();
  cfg.resample_each_iter = true;
  run_sgd(model, GainSchedule::zeros(model), reference_x0(), cfg, recording);
  EXPECT_GE(seeds.size(), 5u);
  std::sort(seeds.begin(), seeds.end());
  EXPECT_EQ(std::unique(seeds.begin(), seeds.end()), seeds.end());
}

TEST(RunSgd, WithoutEvaluatorRecordsSampleCost) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  SGDConfig cfg;
  cfg.iterations = 3;
  cfg.samples = 20;
  const auto trace = run_sgd(model, GainSchedule::zeros(model), reference_x0(), cfg, simulated_source(model, noise));
  for (const auto& r : trace.records) EXPECT_TRUE(std::isnan(r.normalized_error));
  const auto batch = simulated_source(model, noise)(cfg.master_seed, cfg.samples);
  EXPECT_NEAR(trace.records.back().cost, sample_cost(model, trace.final_gains, batch, reference_x0()), 1e-12);
}
