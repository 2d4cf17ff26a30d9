#include "kfpo/experiment.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace kfpo;
using namespace kfpo::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_document() {
  return json::parse(R"({
    "A": [[0.5, 0.1], [0.0, 0.4]],
    "C": [[1.0, 0.0]],
    "M": 2,
    "Q": [[0.3, 0.0], [0.0, 0.2]],
    "R": [[0.5]]
  })");
}

std::string path_of_error(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t line_count(const fs::path& p) {
  const auto text = slurp(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class ScratchDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("kfpo_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KFPO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseConfig, MinimalDocumentExpandsSchedules) {
  const auto cfg = parse_config(small_document());
  EXPECT_EQ(cfg.model.state_dim(), 2);
  EXPECT_EQ(cfg.noise.process_steps(), 4);
  EXPECT_EQ(cfg.noise.measurement_steps(), 4);
  EXPECT_EQ(cfg.noise.P0(), Matrix(Matrix::Zero(2, 2)));
  EXPECT_EQ(cfg.mode, Mode::Gd);
  EXPECT_FALSE(cfg.eta.has_value());
  EXPECT_EQ(cfg.seeds, std::vector<std::uint64_t>{1});
  EXPECT_EQ(cfg.K0().size(), 2);
}

TEST(ParseConfig, OptimizerFields) {
  auto doc = small_document();
  doc["mode"] = "sgd";
  doc["eta"] = 0.01;
  doc["iters"] = 12;
  doc["samples"] = 34;
  doc["seeds"] = {4, 5};
  doc["output"] = "out.csv";
  doc["K0"] = {{{0.1}, {0.2}}, {{0.3}, {0.4}}};
  doc["resample"] = true;
  const auto cfg = parse_config(doc);
  EXPECT_EQ(cfg.mode, Mode::Sgd);
  EXPECT_DOUBLE_EQ(*cfg.eta, 0.01);
  EXPECT_EQ(cfg.iterations, 12);
  EXPECT_EQ(cfg.samples, 34u);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(cfg.output, "out.csv");
  EXPECT_DOUBLE_EQ(cfg.K0()[1](1, 0), 0.4);
  EXPECT_TRUE(cfg.resample_each_iter);
}

TEST(ParseConfig, ScheduleListAndDrift) {
  auto doc = small_document();
  doc["Q"] = {{{1.0, 0.0}, {0.0, 1.0}}, {{2.0, 0.0}, {0.0, 2.0}}, {{3.0, 0.0}, {0.0, 3.0}}, {{4.0, 0.0}, {0.0, 4.0}}};
  EXPECT_DOUBLE_EQ(parse_config(doc).noise.Q(2)(1, 1), 3.0);

  auto drift = small_document();
  drift["dQ"] = {{0.1, 0.0}, {0.0, 0.0}};
  EXPECT_NEAR(parse_config(drift).noise.Q(3)(0, 0), 0.3 + 3 * 0.1, 1e-15);
}

TEST(ParseConfig, ErrorPaths) {
  auto doc = small_document();
  doc["A"] = {{1.0, 2.0}};
  EXPECT_EQ(path_of_error(doc), "/A");

  doc = small_document();
  doc.erase("C");
  EXPECT_EQ(path_of_error(doc), "/C");

  doc = small_document();
  doc["Q"][1][0] = "x";
  EXPECT_EQ(path_of_error(doc), "/Q/1/0");

  doc = small_document();
  doc["A"][1] = {1.0};
  EXPECT_EQ(path_of_error(doc), "/A/1");

  doc = small_document();
  doc["R"] = {{1.0, 0.0}, {0.0, 1.0}};
  EXPECT_EQ(path_of_error(doc).substr(0, 2), "/R");

  doc = small_document();
  doc["mode"] = "fly";
  EXPECT_EQ(path_of_error(doc), "/mode");

  doc = small_document();
  doc["seeds"] = {1, "two"};
  EXPECT_EQ(path_of_error(doc), "/seeds/1");

  doc = small_document();
  doc["seeds"] = json::array();
  EXPECT_EQ(path_of_error(doc), "/seeds");

  doc = small_document();
  doc["eta"] = -1.0;
  EXPECT_EQ(path_of_error(doc), "/eta");

  doc = small_document();
  doc["K0"] = {{{0.1}, {0.2}}};
  EXPECT_EQ(path_of_error(doc), "/K0");

  doc = small_document();
  doc["x0_mean"] = {1.0};
  EXPECT_EQ(path_of_error(doc), "/x0_mean");
}

TEST(ParseConfig, NonSquareSystemMatrixIsDimensionFailure) {
  auto doc = small_document();
  doc["A"] = {{0.5, 0.1, 0.0}, {0.0, 0.4, 0.0}};
  EXPECT_THROW(parse_config(doc), ConfigError);
}

TEST(Presets, EmbedReferenceSystem) {
  const auto names = preset_names();
  ASSERT_EQ(names.size(), 5u);
  for (const auto& name : names) {
    const auto cfg = parse_config(preset_document(name));
    EXPECT_EQ(cfg.model.A(), reference_A());
    EXPECT_EQ(cfg.model.C(), reference_C());
    EXPECT_EQ(cfg.noise.R(1), reference_R());
    EXPECT_DOUBLE_EQ(*cfg.eta, 0.0008);
  }
  const auto gd = parse_config(preset_document("reference-gd"));
  EXPECT_EQ(gd.mode, Mode::Gd);
  EXPECT_EQ(gd.iterations, 1000);
  EXPECT_EQ(gd.noise.Q(5), reference_Q());

  const auto sgd = parse_config(preset_document("reference-sgd-L2000"));
  EXPECT_EQ(sgd.mode, Mode::Sgd);
  EXPECT_EQ(sgd.iterations, 4000);
  EXPECT_EQ(sgd.samples, 2000u);
  EXPECT_EQ(sgd.seeds.size(), 10u);

  const auto tv = parse_config(preset_document("reference-tv-sgd-L200"));
  EXPECT_EQ(tv.samples, 200u);
  EXPECT_LT((tv.noise.Q(2) - (reference_Q() + 2.0 * reference_dQ())).norm(), 1e-15);
  EXPECT_THROW(preset_document("nope"), ConfigError);
}

TEST_F(ScratchDir, EmptyTraceIsHeaderOnly) {
  emit_trace(RunTrace{}, dir_ / "empty.csv");
  EXPECT_EQ(slurp(dir_ / "empty.csv"), "iter,cost,normalized_error,grad_norm,seconds\n");
  EXPECT_TRUE(parse_trace(dir_ / "empty.csv").empty());
}

TEST_F(ScratchDir, GdTraceHasOneLinePerIteration) {
  auto cfg = parse_config(preset_document("reference-gd"));
  cfg.output = (dir_ / "gd.csv").string();
  const auto report = run_experiment(cfg);
  ASSERT_EQ(report.trace_paths.size(), 1u);
  EXPECT_EQ(report.trace_paths[0], dir_ / "gd.csv");
  EXPECT_EQ(line_count(dir_ / "gd.csv"), 1001u);
  EXPECT_FALSE(report.diverged);
}

TEST_F(ScratchDir, TraceRoundTrip) {
  RunTrace trace;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (int k = 1; k <= 200; ++k) {
    trace.records.push_back({k, std::exp(nd(rng)), k % 7 ? nd(rng) * 1e-7 : std::nan(""), std::abs(nd(rng)) * 1e5,
                             0.1 * k / 3.0});
  }
  trace.records.push_back({201, 1e-300, 5e-324, 1.7976931348623157e308, 0.0});
  emit_trace(trace, dir_ / "t.csv");
  const auto back = parse_trace(dir_ / "t.csv");
  ASSERT_EQ(back.size(), trace.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].iter, trace.records[i].iter);
    EXPECT_EQ(back[i].cost, trace.records[i].cost);
    if (std::isnan(trace.records[i].normalized_error)) {
      EXPECT_TRUE(std::isnan(back[i].normalized_error));
    } else {
      EXPECT_EQ(back[i].normalized_error, trace.records[i].normalized_error);
    }
    EXPECT_EQ(back[i].grad_norm, trace.records[i].grad_norm);
    EXPECT_EQ(back[i].seconds, trace.records[i].seconds);
  }
}

TEST_F(ScratchDir, UnwritablePathNamesFile) {
  try {
    emit_trace(RunTrace{}, dir_ / "missing" / "t.csv");
    FAIL() << "expected failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
}

TEST_F(ScratchDir, MultiSeedRunsAreReproducible) {
  auto cfg = parse_config(preset_document("reference-sgd-L200"));
  cfg.iterations = 30;
  cfg.seeds = {3, 4, 5};
  cfg.output = (dir_ / "a" / "run.csv").string();
  const auto first = run_experiment(cfg);
  cfg.output = (dir_ / "b" / "run.csv").string();
  const auto second = run_experiment(cfg);

  ASSERT_EQ(first.trace_paths.size(), 3u);
  EXPECT_EQ(first.trace_paths[1], dir_ / "a" / "run_seed4.csv");
  EXPECT_EQ(first.aggregate_path, dir_ / "a" / "run_aggregate.csv");
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(slurp(first.trace_paths[i]), slurp(second.trace_paths[i]));
    EXPECT_EQ(line_count(first.trace_paths[i]), 31u);
  }
  EXPECT_EQ(slurp(first.aggregate_path), slurp(second.aggregate_path));
  EXPECT_NE(slurp(first.trace_paths[0]), slurp(first.trace_paths[1]));

  // Aggregate comes from exactly the emitted traces.
  std::vector<RunTrace> reread(3);
  for (std::size_t i = 0; i < 3; ++i) reread[i].records = parse_trace(first.trace_paths[i]);
  const auto agg = aggregate_traces(reread);
  ASSERT_EQ(agg.size(), first.aggregate.size());
  for (std::size_t k = 0; k < agg.size(); ++k) {
    EXPECT_EQ(agg[k].mean, first.aggregate[k].mean);
    EXPECT_LE(agg[k].min, agg[k].mean);
    EXPECT_LE(agg[k].mean, agg[k].max);
  }
}

TEST(Aggregate, MeanMinMax) {
  RunTrace a, b;
  a.records = {{1, 0.0, 0.2, 0.0, 0.0}, {2, 0.0, 0.1, 0.0, 0.0}};
  b.records = {{1, 0.0, 0.4, 0.0, 0.0}};
  const auto rows = aggregate_traces({a, b});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].mean, 0.30000000000000004);
  EXPECT_EQ(rows[0].min, 0.2);
  EXPECT_EQ(rows[0].max, 0.4);
}

TEST(Formatting, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Diagnostics, GradientCheckAndOracleTable) {
  const auto model = reference_model();
  const auto noise = reference_noise();
  for (const auto& row : check_gradient(model, noise, GainSchedule::zeros(model))) {
    EXPECT_LT(row.relative_error, 1e-6);
  }
  const auto rows = oracle_compare(model, noise, GainSchedule::zeros(model), 20000, 1);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) EXPECT_TRUE(r.passed) << r.name << " = " << r.value;
}

TEST_F(ScratchDir, CommandLineExitCodes) {
  const auto bad = dir_ / "bad.json";
  std::ofstream(bad) << R"({"A": [[1, 2]], "C": [[1]], "M": 2, "Q": [[1]], "R": [[1]]})";
  EXPECT_EQ(run_cli("validate --config " + bad.string()), 2);

  const auto broken = dir_ / "broken.json";
  std::ofstream(broken) << "{ not json";
  EXPECT_EQ(run_cli("riccati --config " + broken.string()), 2);

  const auto unobservable = dir_ / "unobservable.json";
  std::ofstream(unobservable) << R"({"A": [[1, 0], [0, 1]], "C": [[1, 0]], "M": 2,
                                     "Q": [[1, 0], [0, 1]], "R": [[1]]})";
  EXPECT_EQ(run_cli("validate --config " + unobservable.string()), 3);
  EXPECT_EQ(run_cli("gd --config " + unobservable.string()), 3);

  EXPECT_EQ(run_cli("validate --preset reference-gd"), 0);
  EXPECT_EQ(run_cli("gd --preset reference-gd --iters 5 --out " + (dir_ / "gd.csv").string()), 0);
  EXPECT_EQ(line_count(dir_ / "gd.csv"), 6u);
  EXPECT_EQ(run_cli("gd --preset reference-gd --eta 50 --iters 100 --out " + (dir_ / "boom.csv").string()), 1);
}
