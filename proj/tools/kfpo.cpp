// kfpo: command-line front end for the Kalman gain policy-optimization library.
//
//   kfpo <subcommand> (--config FILE | --preset NAME) [overrides]
//
// Exit codes: 0 success, 1 divergence or runtime failure, 2 bad config,
// 3 assumption validation failed.

#include "kfpo/dualsim.hpp"
#include "kfpo/experiment.hpp"
#include "kfpo/objective.hpp"
#include "kfpo/riccati.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAssumption = 3;

struct Options {
  std::string config_path;
  std::string preset;
  std::optional<double> eta;
  std::optional<int> iterations;
  std::optional<int> samples;
  std::vector<std::uint64_t> seeds;
  std::string output;
  bool wall_time = false;
  bool resample = false;
  std::size_t mc_samples = 100000;
  double fd_step = 1e-6;
  bool noiseless = false;
};

json load_document(const Options& opt) {
  json doc;
  if (!opt.preset.empty()) {
    doc = kfpo::preset_document(opt.preset);
  } else if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw kfpo::ConfigError("/", "cannot open config file " + opt.config_path);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw kfpo::ConfigError("/", std::string("malformed JSON: ") + e.what());
    }
  } else {
    throw kfpo::ConfigError("/", "one of --config or --preset is required");
  }
  if (!doc.is_object()) throw kfpo::ConfigError("/", "config must be a JSON object");
  if (opt.eta) doc["eta"] = *opt.eta;
  if (opt.iterations) doc["iters"] = *opt.iterations;
  if (opt.samples) doc["samples"] = *opt.samples;
  if (!opt.seeds.empty()) doc["seeds"] = opt.seeds;
  if (!opt.output.empty()) doc["output"] = opt.output;
  if (opt.wall_time) doc["wall_time"] = true;
  if (opt.resample) doc["resample"] = true;
  return doc;
}

fs::path default_output(const kfpo::ExperimentConfig& cfg, const std::string& ext) {
  fs::path dir = ".";
  if (const char* env = std::getenv("KFPO_OUTPUT_DIR"); env && *env) dir = env;
  const std::string stem = cfg.name.empty() ? std::string(kfpo::mode_name(cfg.mode)) : cfg.name;
  return dir / (stem + ext);
}

void print_matrix(std::ostream& os, const std::string& label, const kfpo::Matrix& m) {
  os << label << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    os << "  ";
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << std::setw(24) << kfpo::format_double(m(r, c));
    os << '\n';
  }
}

// Writes `text` to `path`, or stdout when the path is empty.
void write_text(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file " + path);
  out << text;
  std::cerr << "wrote " << path << '\n';
}

void print_validation(const kfpo::ValidationReport& report, std::ostream& os) {
  for (const auto& c : report.checks) {
    os << (c.passed ? "ok    " : "FAIL  ") << std::left << std::setw(16) << c.name << " witness="
       << kfpo::format_double(c.witness);
    if (!c.detail.empty()) os << "  " << c.detail;
    os << '\n';
  }
}

int cmd_simulate(const kfpo::ExperimentConfig& cfg, const Options& opt) {
  const auto mode = opt.noiseless ? kfpo::NoiseMode::Noiseless : kfpo::NoiseMode::Sampled;
  std::ostringstream os;
  os << "seed,t";
  for (int i = 0; i < cfg.model.obs_dim(); ++i) os << ",y" << i;
  os << '\n';
  for (const auto seed : cfg.seeds) {
    const auto traj = kfpo::simulate(cfg.model, cfg.noise, seed, mode);
    for (int t = 1; t <= traj.length(); ++t) {
      os << seed << ',' << t;
      const auto& y = traj.obs(t);
      for (Eigen::Index i = 0; i < y.size(); ++i) os << ',' << kfpo::format_double(y(i));
      os << '\n';
    }
  }
  write_text(os.str(), cfg.output);
  return kExitOk;
}

int cmd_riccati(const kfpo::ExperimentConfig& cfg) {
  const auto sol = kfpo::solve_riccati(cfg.model, cfg.noise);
  json doc = kfpo::riccati_document(sol);
  const double f_opt = kfpo::cost(cfg.model, cfg.noise, sol.gains);
  doc["cost"] = f_opt;
  if (sol.condition_warning) std::cerr << "warning: innovation covariance is ill-conditioned\n";
  for (int t = 0; t < sol.gains.size(); ++t) print_matrix(std::cout, "K*_" + std::to_string(t), sol.gains[t]);
  for (std::size_t t = 0; t < sol.P.size(); ++t) print_matrix(std::cout, "P*_" + std::to_string(t), sol.P[t]);
  std::cout << "f(K*) = " << kfpo::format_double(f_opt) << '\n';
  write_text(doc.dump(2) + "\n", cfg.output.empty() ? default_output(cfg, ".json").string() : cfg.output);
  return kExitOk;
}

int cmd_check_gradient(const kfpo::ExperimentConfig& cfg, const Options& opt) {
  const auto rows = kfpo::check_gradient(cfg.model, cfg.noise, cfg.K0(), opt.fd_step);
  std::cout << "stage  relative_error  max_abs_error\n";
  double worst = 0.0;
  for (const auto& r : rows) {
    std::cout << std::setw(5) << r.stage << "  " << std::setw(14) << kfpo::format_double(r.relative_error) << "  "
              << kfpo::format_double(r.max_abs_error) << '\n';
    worst = std::max(worst, r.relative_error);
  }
  std::cout << "worst relative error: " << kfpo::format_double(worst) << '\n';
  return kExitOk;
}

int cmd_constants(const kfpo::ExperimentConfig& cfg) {
  const auto sol = kfpo::solve_riccati(cfg.model, cfg.noise);
  const double f_opt = kfpo::cost(cfg.model, cfg.noise, sol.gains);
  const auto d = kfpo::diagnostics(cfg.model, cfg.noise, cfg.K0(), f_opt);
  json doc = {
      {"f_K", d.f_K},           {"f_opt", d.f_opt},
      {"sigma_min_Sigma", d.sigma_min_Sigma}, {"sigma_max_Sigma", d.sigma_max_Sigma},
      {"sigma_min_R", d.sigma_min_R},         {"sigma_max_CQCR", d.sigma_max_CQCR},
      {"sigma_min_AQA", d.sigma_min_AQA},     {"norm_A", d.norm_A},
      {"norm_CA", d.norm_CA},   {"A_of_K", d.A_of_K},
      {"B_of_K", d.B_of_K},     {"C_of_K", d.C_of_K},
      {"A_of_opt", d.A_of_opt}, {"B_of_opt", d.B_of_opt},
      {"c1", d.c1},             {"c2", d.c2},
      {"c3", std::isinf(d.c3) ? json("inf") : json(d.c3)},
      {"c4", d.c4},             {"eta", d.eta},
      {"alpha", d.alpha},       {"rho", d.rho},
      {"rho_max", d.rho_max},   {"c10", d.c10},
  };
  write_text(doc.dump(2) + "\n", cfg.output);
  return kExitOk;
}

int cmd_oracle_compare(const kfpo::ExperimentConfig& cfg, const Options& opt) {
  const auto rows = kfpo::oracle_compare(cfg.model, cfg.noise, cfg.K0(), opt.mc_samples, cfg.seeds.front());
  bool ok = true;
  for (const auto& r : rows) {
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(50) << r.name << ' '
              << kfpo::format_double(r.value) << " (< " << kfpo::format_double(r.threshold) << ")\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitFailure;
}

int cmd_learn(kfpo::ExperimentConfig cfg) {
  if (cfg.output.empty()) cfg.output = default_output(cfg, ".csv").string();
  const auto report = kfpo::run_experiment(cfg);
  for (std::size_t i = 0; i < report.traces.size(); ++i) {
    const auto& t = report.traces[i];
    const auto& last = t.records.empty() ? kfpo::TraceRecord{} : t.records.back();
    std::cout << report.trace_paths[i].string() << ": iters=" << t.records.size()
              << " cost=" << kfpo::format_double(last.cost)
              << " normalized_error=" << kfpo::format_double(last.normalized_error);
    if (t.diverged) std::cout << " DIVERGED (" << t.message << ")";
    std::cout << '\n';
  }
  if (!report.aggregate_path.empty() && !report.aggregate.empty()) {
    const auto& a = report.aggregate.back();
    std::cout << report.aggregate_path.string() << ": final mean=" << kfpo::format_double(a.mean)
              << " min=" << kfpo::format_double(a.min) << " max=" << kfpo::format_double(a.max) << '\n';
  }
  return report.diverged ? kExitFailure : kExitOk;
}

int dispatch(kfpo::Mode mode, const Options& opt) {
  json doc = load_document(opt);
  doc["mode"] = std::string(kfpo::mode_name(mode));
  const auto cfg = kfpo::parse_config(doc);

  const auto report = kfpo::validate(cfg.model, cfg.noise);
  if (mode == kfpo::Mode::Validate) {
    print_validation(report, std::cout);
    return report.all_passed() ? kExitOk : kExitAssumption;
  }
  if (!report.all_passed()) {
    std::cerr << "assumption check failed:\n";
    print_validation(report, std::cerr);
    return kExitAssumption;
  }

  switch (mode) {
    case kfpo::Mode::Simulate: return cmd_simulate(cfg, opt);
    case kfpo::Mode::Riccati: return cmd_riccati(cfg);
    case kfpo::Mode::CheckGradient: return cmd_check_gradient(cfg, opt);
    case kfpo::Mode::Constants: return cmd_constants(cfg);
    case kfpo::Mode::OracleCompare: return cmd_oracle_compare(cfg, opt);
    case kfpo::Mode::Gd:
    case kfpo::Mode::Sgd: return cmd_learn(cfg);
    case kfpo::Mode::Validate: break;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kalman filter gain learning by policy optimization"};
  app.require_subcommand(1);

  Options opt;
  std::optional<kfpo::Mode> chosen;

  const auto add_common = [&](CLI::App* sub) {
    auto* source = sub->add_option_group("source");
    source->add_option("--config,-c", opt.config_path, "JSON experiment document")->check(CLI::ExistingFile);
    std::string presets;
    for (const auto& p : kfpo::preset_names()) presets += (presets.empty() ? "" : ", ") + p;
    source->add_option("--preset,-p", opt.preset, "built-in experiment: " + presets);
    source->require_option(1);
    sub->add_option("--out,-o", opt.output, "output path (gd/sgd/riccati default to $KFPO_OUTPUT_DIR/<name>.csv|.json)");
    sub->add_option("--seeds,--seed", opt.seeds, "seed list")->delimiter(',');
  };

  const std::vector<std::pair<kfpo::Mode, std::string>> commands = {
      {kfpo::Mode::Validate, "check positivity, observability and invertibility assumptions"},
      {kfpo::Mode::Simulate, "sample observation trajectories as CSV"},
      {kfpo::Mode::Riccati, "optimal gains, covariances and innovation terms as JSON"},
      {kfpo::Mode::CheckGradient, "closed-form gradient against central differences"},
      {kfpo::Mode::Constants, "convergence constants at the initial gain"},
      {kfpo::Mode::OracleCompare, "gradient, stacked and dual Monte-Carlo oracles"},
      {kfpo::Mode::Gd, "exact gradient descent on the known-noise cost"},
      {kfpo::Mode::Sgd, "stochastic gradient descent from simulated observations"},
  };
  for (const auto& [mode, help] : commands) {
    auto* sub = app.add_subcommand(std::string(kfpo::mode_name(mode)), help);
    add_common(sub);
    sub->callback([&chosen, mode = mode] { chosen = mode; });
    switch (mode) {
      case kfpo::Mode::Simulate:
        sub->add_flag("--noiseless", opt.noiseless, "zero every noise term");
        break;
      case kfpo::Mode::CheckGradient:
        sub->add_option("--step", opt.fd_step, "finite-difference step");
        break;
      case kfpo::Mode::OracleCompare:
        sub->add_option("--mc-samples", opt.mc_samples, "dual Monte-Carlo sample count");
        break;
      case kfpo::Mode::Gd:
      case kfpo::Mode::Sgd:
        sub->add_option("--eta", opt.eta, "step size")->check(CLI::PositiveNumber);
        sub->add_option("--iters,-V", opt.iterations, "iteration count")->check(CLI::PositiveNumber);
        sub->add_flag("--wall-time", opt.wall_time, "record wall-clock seconds in the trace");
        if (mode == kfpo::Mode::Sgd) {
          sub->add_option("--samples,-L", opt.samples, "trajectories per gradient estimate")
              ->check(CLI::PositiveNumber);
          sub->add_flag("--resample", opt.resample, "draw a fresh batch every iteration");
        }
        break;
      default:
        break;
    }
  }

  CLI11_PARSE(app, argc, argv);

  try {
    return dispatch(*chosen, opt);
  } catch (const kfpo::ConfigError& e) {
    std::cerr << "config error at " << e.what() << '\n';
    return kExitConfig;
  } catch (const kfpo::DimensionError& e) {
    std::cerr << "config error at /" << e.what() << '\n';
    return kExitConfig;
  } catch (const kfpo::AssumptionError& e) {
    std::cerr << "assumption violated: " << e.what() << '\n';
    return kExitAssumption;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
