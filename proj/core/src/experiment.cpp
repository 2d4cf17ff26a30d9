#include "kfpo/experiment.hpp"

#include "kfpo/dualsim.hpp"
#include "kfpo/objective.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace kfpo {

namespace {

using nlohmann::json;

constexpr std::string_view kTraceHeader = "iter,cost,normalized_error,grad_norm,seconds";

const json& require(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ConfigError(std::string("/") + key, "required field missing");
  return doc.at(key);
}

double number_at(const json& value, const std::string& path) {
  if (!value.is_number()) throw ConfigError(path, "expected a number");
  return value.get<double>();
}

std::int64_t integer_at(const json& value, const std::string& path) {
  if (!value.is_number_integer()) throw ConfigError(path, "expected an integer");
  return value.get<std::int64_t>();
}

Vector vector_from_json(const json& value, const std::string& path) {
  if (!value.is_array()) throw ConfigError(path, "expected a list of numbers");
  Vector v(static_cast<Eigen::Index>(value.size()));
  for (std::size_t i = 0; i < value.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = number_at(value[i], path + "/" + std::to_string(i));
  }
  return v;
}

bool is_matrix_list(const json& value) {
  return value.is_array() && !value.empty() && value[0].is_array() && !value[0].empty() && value[0][0].is_array();
}

std::vector<Matrix> schedule_from_json(const json& value, const std::string& path) {
  std::vector<Matrix> out;
  if (is_matrix_list(value)) {
    for (std::size_t t = 0; t < value.size(); ++t) out.push_back(matrix_from_json(value[t], path + "/" + std::to_string(t)));
  } else {
    out.push_back(matrix_from_json(value, path));
  }
  return out;
}

std::vector<Matrix> expand_schedule(std::vector<Matrix> entries, int steps) {
  if (entries.size() == 1) return std::vector<Matrix>(static_cast<std::size_t>(steps), entries.front());
  return entries;
}

json reference_system() {
  json doc;
  doc["A"] = {{0.24, -0.18, -0.3118}, {-0.0578, 0.4839, -0.0279}, {-0.1283, -0.0138, 0.4761}};
  doc["C"] = {{0.0, 0.7071, 1.2247}, {0.7071, -0.5125, 1.1124}};
  doc["Q"] = {{0.61, -0.195, -0.3377}, {-0.195, 0.775, -0.0953}, {-0.3377, -0.0953, 0.665}};
  doc["R"] = {{0.9, 0.0}, {0.0, 0.6}};
  doc["P0"] = {{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
  doc["x0_mean"] = {1.0, 1.0, 0.0};
  doc["M"] = 3;
  return doc;
}

json ten_seeds() {
  json seeds = json::array();
  for (int s = 1; s <= 10; ++s) seeds.push_back(s);
  return seeds;
}

std::filesystem::path sibling(const std::filesystem::path& output, const std::string& suffix) {
  const auto ext = output.has_extension() ? output.extension().string() : std::string(".csv");
  return output.parent_path() / (output.stem().string() + suffix + ext);
}

// DimensionError messages carry a "field: " prefix that the config path replaces.
ConfigError as_config_error(const DimensionError& e, const std::string& path) {
  std::string what = e.what();
  if (what.starts_with(e.field() + ": ")) what.erase(0, e.field().size() + 2);
  return ConfigError(path, what);
}

double relative_gap(const StageMatrices& a, const StageMatrices& b) {
  double diff = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) diff += (a[t] - b[t]).squaredNorm();
  const double scale = std::max({linalg::frobenius_norm(a), linalg::frobenius_norm(b), 1e-300});
  return std::sqrt(diff) / scale;
}

}  // namespace

Mode parse_mode(std::string_view text) {
  if (text == "validate") return Mode::Validate;
  if (text == "simulate") return Mode::Simulate;
  if (text == "riccati") return Mode::Riccati;
  if (text == "check-gradient") return Mode::CheckGradient;
  if (text == "constants") return Mode::Constants;
  if (text == "oracle-compare") return Mode::OracleCompare;
  if (text == "gd") return Mode::Gd;
  if (text == "sgd") return Mode::Sgd;
  throw ConfigError("/mode", "unknown mode '" + std::string(text) + "'");
}

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::Validate: return "validate";
    case Mode::Simulate: return "simulate";
    case Mode::Riccati: return "riccati";
    case Mode::CheckGradient: return "check-gradient";
    case Mode::Constants: return "constants";
    case Mode::OracleCompare: return "oracle-compare";
    case Mode::Gd: return "gd";
    case Mode::Sgd: return "sgd";
  }
  return "unknown";
}

Matrix matrix_from_json(const json& value, const std::string& path) {
  if (!value.is_array() || value.empty()) throw ConfigError(path, "expected a non-empty list of rows");
  const std::size_t rows = value.size();
  if (!value[0].is_array()) throw ConfigError(path + "/0", "expected a row (list of numbers)");
  const std::size_t cols = value[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string row_path = path + "/" + std::to_string(r);
    if (!value[r].is_array()) throw ConfigError(row_path, "expected a row (list of numbers)");
    if (value[r].size() != cols) throw ConfigError(row_path, "ragged row: expected " + std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          number_at(value[r][c], row_path + "/" + std::to_string(c));
    }
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("/", "config must be a JSON object");

  const int horizon = static_cast<int>(integer_at(require(doc, "M"), "/M"));
  std::optional<ModelSpec> model;
  try {
    model.emplace(matrix_from_json(require(doc, "A"), "/A"), matrix_from_json(require(doc, "C"), "/C"), horizon);
  } catch (const DimensionError& e) {
    throw as_config_error(e, "/" + e.field());
  }
  const int n = model->state_dim();
  const int steps = model->observation_count();

  auto process = schedule_from_json(require(doc, "Q"), "/Q");
  if (doc.contains("dQ")) {
    if (process.size() != 1) throw ConfigError("/dQ", "drift requires a single base Q");
    const Matrix dQ = matrix_from_json(doc.at("dQ"), "/dQ");
    if (dQ.rows() != process.front().rows() || dQ.cols() != process.front().cols()) {
      throw ConfigError("/dQ", "must have the shape of Q");
    }
    const Matrix base = process.front();
    process.clear();
    for (int t = 0; t < steps; ++t) process.push_back(base + static_cast<double>(t) * dQ);
  }
  process = expand_schedule(std::move(process), steps);
  auto measurement = expand_schedule(schedule_from_json(require(doc, "R"), "/R"), steps);

  Matrix P0 = doc.contains("P0") ? matrix_from_json(doc.at("P0"), "/P0") : Matrix(Matrix::Zero(n, n));
  Vector x0 = doc.contains("x0_mean") ? vector_from_json(doc.at("x0_mean"), "/x0_mean") : Vector(Vector::Zero(n));
  NoiseSpec noise(std::move(process), std::move(measurement), std::move(P0), std::move(x0));
  try {
    noise.check_compatible(*model);
  } catch (const DimensionError& e) {
    throw as_config_error(e, "/" + e.field());
  }

  ExperimentConfig cfg{.name = doc.value("name", std::string{}), .model = *model, .noise = noise};
  if (doc.contains("mode")) {
    if (!doc.at("mode").is_string()) throw ConfigError("/mode", "expected a string");
    cfg.mode = parse_mode(doc.at("mode").get<std::string>());
  }
  if (doc.contains("eta") && !doc.at("eta").is_null()) {
    cfg.eta = number_at(doc.at("eta"), "/eta");
    if (!(*cfg.eta > 0.0)) throw ConfigError("/eta", "step size must be positive");
  }
  if (doc.contains("iters")) {
    const auto v = integer_at(doc.at("iters"), "/iters");
    if (v < 1) throw ConfigError("/iters", "must be at least 1");
    cfg.iterations = static_cast<int>(v);
  }
  if (doc.contains("samples")) {
    const auto v = integer_at(doc.at("samples"), "/samples");
    if (v < 1) throw ConfigError("/samples", "must be at least 1");
    cfg.samples = static_cast<std::size_t>(v);
  }
  if (doc.contains("seeds")) {
    const json& seeds = doc.at("seeds");
    if (!seeds.is_array() || seeds.empty()) throw ConfigError("/seeds", "expected a non-empty list of integers");
    cfg.seeds.clear();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      cfg.seeds.push_back(static_cast<std::uint64_t>(integer_at(seeds[i], "/seeds/" + std::to_string(i))));
    }
  }
  if (doc.contains("output")) {
    if (!doc.at("output").is_string()) throw ConfigError("/output", "expected a path string");
    cfg.output = doc.at("output").get<std::string>();
  }
  if (doc.contains("K0")) {
    const json& gains = doc.at("K0");
    if (!gains.is_array() || static_cast<int>(gains.size()) != horizon) {
      throw ConfigError("/K0", "expected a list of M gain matrices");
    }
    StageMatrices stages;
    for (std::size_t t = 0; t < gains.size(); ++t) stages.push_back(matrix_from_json(gains[t], "/K0/" + std::to_string(t)));
    GainSchedule K(std::move(stages));
    try {
      K.check_compatible(*model);
    } catch (const DimensionError& e) {
      throw as_config_error(e, "/K0");
    }
    cfg.initial_gains = std::move(K);
  }
  cfg.record_wall_time = doc.value("wall_time", false);
  cfg.resample_each_iter = doc.value("resample", false);
  return cfg;
}

std::vector<std::string> preset_names() {
  return {"reference-gd", "reference-sgd-L200", "reference-sgd-L2000", "reference-tv-sgd-L200",
          "reference-tv-sgd-L2000"};
}

json preset_document(std::string_view name) {
  json doc = reference_system();
  doc["name"] = std::string(name);
  doc["eta"] = 0.0008;
  if (name == "reference-gd") {
    doc["mode"] = "gd";
    doc["iters"] = 1000;
    return doc;
  }
  const bool drifting = name.starts_with("reference-tv-sgd-");
  if (!drifting && !name.starts_with("reference-sgd-")) {
    throw ConfigError("/preset", "unknown preset '" + std::string(name) + "'");
  }
  const std::string_view samples = name.substr(name.rfind('L') + 1);
  if (samples != "200" && samples != "2000") throw ConfigError("/preset", "unknown preset '" + std::string(name) + "'");
  doc["mode"] = "sgd";
  doc["iters"] = 4000;
  doc["samples"] = samples == "200" ? 200 : 2000;
  doc["seeds"] = ten_seeds();
  if (drifting) doc["dQ"] = {{0.12, -0.08, 0.0}, {-0.08, 0.12, 0.0}, {0.0, 0.0, 0.05}};
  return doc;
}

std::vector<AggregateRow> aggregate_traces(const std::vector<RunTrace>& traces) {
  std::vector<AggregateRow> rows;
  if (traces.empty()) return rows;
  std::size_t common = traces.front().records.size();
  for (const auto& t : traces) common = std::min(common, t.records.size());
  rows.reserve(common);
  for (std::size_t k = 0; k < common; ++k) {
    AggregateRow row;
    row.iter = traces.front().records[k].iter;
    row.min = std::numeric_limits<double>::infinity();
    row.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const auto& t : traces) {
      const double v = t.records[k].normalized_error;
      sum += v;
      row.min = std::min(row.min, v);
      row.max = std::max(row.max, v);
    }
    row.mean = sum / static_cast<double>(traces.size());
    rows.push_back(row);
  }
  return rows;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  ExperimentReport report;
  const std::filesystem::path output = config.output;

  if (config.mode == Mode::Gd) {
    GdOptions options;
    options.eta = config.eta;
    options.iterations = config.iterations;
    options.record_wall_time = config.record_wall_time;
    report.traces.push_back(run_gd(config.model, config.noise, config.K0(), options));
  } else if (config.mode == Mode::Sgd) {
    const auto evaluator = KnownNoiseEvaluator::make(config.model, config.noise);
    const auto source = simulated_source(config.model, config.noise);
    for (const auto seed : config.seeds) {
      SGDConfig sgd;
      sgd.eta = config.eta.value_or(0.0008);
      sgd.iterations = config.iterations;
      sgd.samples = config.samples;
      sgd.master_seed = seed;
      sgd.resample_each_iter = config.resample_each_iter;
      sgd.record_wall_time = config.record_wall_time;
      report.traces.push_back(run_sgd(config.model, config.K0(), config.noise.x0_mean(), sgd, source, evaluator));
    }
    report.seeds = config.seeds;
  } else {
    throw std::invalid_argument("run_experiment handles gd and sgd; got " + std::string(mode_name(config.mode)));
  }

  for (const auto& t : report.traces) report.diverged = report.diverged || t.diverged;
  report.aggregate = aggregate_traces(report.traces);

  if (!output.empty()) {
    if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
    if (report.traces.size() == 1) {
      emit_trace(report.traces.front(), output);
      report.trace_paths.push_back(output);
    } else {
      for (std::size_t i = 0; i < report.traces.size(); ++i) {
        const auto path = sibling(output, "_seed" + std::to_string(report.seeds[i]));
        emit_trace(report.traces[i], path);
        report.trace_paths.push_back(path);
      }
      report.aggregate_path = sibling(output, "_aggregate");
      emit_aggregate(report.aggregate, report.aggregate_path);
    }
  }
  return report;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void emit_trace(const RunTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open trace file for writing: " + path.string());
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.iter << ',' << format_double(r.cost) << ',' << format_double(r.normalized_error) << ','
        << format_double(r.grad_norm) << ',' << format_double(r.seconds) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing trace file: " + path.string());
}

std::vector<TraceRecord> parse_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) {
    throw std::runtime_error("unexpected trace header in " + path.string());
  }
  const auto parse_number = [&](std::string_view field) {
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
      throw std::runtime_error("malformed number '" + std::string(field) + "' in " + path.string());
    }
    return v;
  };
  std::vector<TraceRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1)) {
      fields.push_back(rest.substr(0, pos));
    }
    fields.push_back(rest);
    if (fields.size() != 5) throw std::runtime_error("expected 5 columns in " + path.string());
    TraceRecord r;
    r.iter = static_cast<int>(parse_number(fields[0]));
    r.cost = parse_number(fields[1]);
    r.normalized_error = parse_number(fields[2]);
    r.grad_norm = parse_number(fields[3]);
    r.seconds = parse_number(fields[4]);
    records.push_back(r);
  }
  return records;
}

void emit_aggregate(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open aggregate file for writing: " + path.string());
  out << "iter,mean,min,max\n";
  for (const auto& r : rows) {
    out << r.iter << ',' << format_double(r.mean) << ',' << format_double(r.min) << ',' << format_double(r.max)
        << '\n';
  }
  if (!out) throw std::runtime_error("failed writing aggregate file: " + path.string());
}

json riccati_document(const RiccatiSolution& solution) {
  json doc;
  doc["K"] = json::array();
  for (const auto& k : solution.gains.stages()) doc["K"].push_back(matrix_to_json(k));
  for (const char* key : {"P", "H", "Z"}) doc[key] = json::array();
  for (const auto& p : solution.P) doc["P"].push_back(matrix_to_json(p));
  for (const auto& h : solution.H) doc["H"].push_back(matrix_to_json(h));
  for (const auto& z : solution.Z) doc["Z"].push_back(matrix_to_json(z));
  doc["max_condition"] = solution.max_condition;
  doc["condition_warning"] = solution.condition_warning;
  return doc;
}

std::vector<GradientCheckRow> check_gradient(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                                             double step) {
  const auto exact = gradient(model, noise, K).per_stage;
  const auto fd = central_difference([&](const GainSchedule& k) { return cost(model, noise, k); }, K, step);
  std::vector<GradientCheckRow> rows;
  for (std::size_t t = 0; t < exact.size(); ++t) {
    GradientCheckRow row;
    row.stage = static_cast<int>(t);
    const double diff = (exact[t] - fd[t]).norm();
    row.relative_error = diff / std::max({exact[t].norm(), fd[t].norm(), 1e-300});
    row.max_abs_error = (exact[t] - fd[t]).cwiseAbs().maxCoeff();
    rows.push_back(row);
  }
  return rows;
}

std::vector<OracleRow> oracle_compare(const ModelSpec& model, const NoiseSpec& noise, const GainSchedule& K,
                                      std::size_t mc_samples, std::uint64_t seed) {
  const CostGradient exact = gradient(model, noise, K);
  const StackedRepresentation rep = build_stacked(model, noise, K);
  const StackedCostGradient stacked = stacked_cost_and_gradient(rep, model, K);
  const auto fd = central_difference([&](const GainSchedule& k) { return cost(model, noise, k); }, K, 1e-6);

  std::vector<OracleRow> rows;
  const auto add = [&rows](std::string name, double value, double threshold) {
    rows.push_back(OracleRow{std::move(name), value, threshold, value < threshold});
  };
  add("gradient: closed-form vs stacked (rel)", relative_gap(exact.per_stage, stacked.gradient), 1e-6);
  add("gradient: closed-form vs finite-difference (rel)", relative_gap(exact.per_stage, fd), 1e-6);
  add("gradient: stacked vs finite-difference (rel)", relative_gap(stacked.gradient, fd), 1e-6);

  const double f1_offset = stacked.f1 - stacked_constant(model, noise);
  add("stacked f1 - constant vs f(K) (rel)", std::abs(f1_offset - exact.value) / std::max(1.0, std::abs(exact.value)),
      1e-9);

  const MonteCarloEstimate mc = dual_cost_mc(model, noise, K, mc_samples, seed);
  add("duality: |dual MC - f(K)| / std error", std::abs(mc.mean - exact.value) / mc.std_error, 4.0);
  return rows;
}

}  // namespace kfpo
