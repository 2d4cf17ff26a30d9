#pragma once

#include "kfpo/gains.hpp"
#include "kfpo/learner.hpp"
#include "kfpo/model.hpp"
#include "kfpo/riccati.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kfpo {

/// Malformed experiment document. `path()` is a JSON-pointer-like location.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what) : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class Mode { Validate, Simulate, Riccati, CheckGradient, Constants, OracleCompare, Gd, Sgd };

Mode parse_mode(std::string_view text);
std::string_view mode_name(Mode mode);

struct ExperimentConfig {
  std::string name;
  ModelSpec model;
  NoiseSpec noise;
  Mode mode = Mode::Gd;
  std::optional<double> eta{};
  int iterations = 1000;
  std::size_t samples = 200;
  std::vector<std::uint64_t> seeds{1};
  std::string output{};
  std::optional<GainSchedule> initial_gains{};
  bool record_wall_time = false;
  bool resample_each_iter = false;

  GainSchedule K0() const { return initial_gains ? *initial_gains : GainSchedule::zeros(model); }
};

/// Reads the model/noise/optimizer document. Matrices are row-major nested lists;
/// Q and R accept a single matrix or a per-step list; dQ adds Q_t = Q + t dQ.
/// Throws ConfigError with the offending field path.
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Built-in experiment documents with the reference system matrices embedded.
std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
nlohmann::json preset_document(std::string_view name);

Matrix matrix_from_json(const nlohmann::json& value, const std::string& path);
nlohmann::json matrix_to_json(const Matrix& m);

struct AggregateRow {
  int iter = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct ExperimentReport {
  std::vector<std::uint64_t> seeds;
  std::vector<RunTrace> traces;
  std::vector<std::filesystem::path> trace_paths;
  std::vector<AggregateRow> aggregate;
  std::filesystem::path aggregate_path;
  bool diverged = false;
};

/// Per-iteration mean/min/max of normalized_error over the common prefix of the traces.
std::vector<AggregateRow> aggregate_traces(const std::vector<RunTrace>& traces);

/// Runs a gd or sgd experiment (one trace per seed for sgd) and writes the trace
/// CSVs plus, for several seeds, `<stem>_aggregate.csv`. With one trace the file
/// goes to `output` itself; with several, to `<stem>_seed<k>.csv`. Nothing is
/// written when `output` is empty.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// CSV with header `iter,cost,normalized_error,grad_norm,seconds`, shortest
/// round-trip decimal text. Throws std::runtime_error naming the path on I/O failure.
void emit_trace(const RunTrace& trace, const std::filesystem::path& path);
std::vector<TraceRecord> parse_trace(const std::filesystem::path& path);
void emit_aggregate(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);

std::string format_double(double value);

nlohmann::json riccati_document(const RiccatiSolution& solution);

struct GradientCheckRow {
  int stage = 0;
  double relative_error = 0.0;
  double max_abs_error = 0.0;
};

/// Central differences of cost (step h) against the closed-form gradient, per stage.
std::vector<GradientCheckRow> check_gradient(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                                             double step = 1e-6);

struct OracleRow {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

/// Gradient triple agreement, stacked identity and dual Monte-Carlo duality at K.
std::vector<OracleRow> oracle_compare(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                                      std::size_t mc_samples, std::uint64_t seed);

}  // namespace kfpo
