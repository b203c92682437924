#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poc/entropy_estim.hpp"
#include "poc/errors.hpp"
#include "poc/models.hpp"
#include "poc/theory_bounds.hpp"

namespace poc {

enum class InitialKind { Dirac, Gaussian, Stationary, Uniform, Cosine };

// Explicit theory constants; unset fields are derived from the model.
struct TheoryOverrides {
  std::optional<double> sigma, gamma, eta, M, C0, delta;
};

struct ScenarioConfig {
  ModelSpec model = LinearGaussian{};
  double torus_lambda = 2.0;  // density ratio bound used for torus constants

  std::vector<std::size_t> n_values;
  std::vector<std::size_t> k_values;
  std::vector<double> times;

  EstimatorMethod method = EstimatorMethod::Exact;
  std::size_t bins = 64;
  std::size_t replicas = 1000;
  double dt = 0.01;
  std::size_t grid = 256;

  InitialKind initial = InitialKind::Dirac;
  double x0 = 0.0;
  double initial_variance = 1.0;
  double initial_amplitude = 0.5;

  std::uint64_t seed = 1;
  unsigned threads = 1;
  double budget = 1e10;

  std::filesystem::path out_dir = "out";
  bool theory = true;
  bool plots = true;
  TheoryOverrides overrides;
};

// INI text with sections [model] [sweep] [estimator] [output] and optional [theory]. Throws ConfigError.
ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig parse_config(const std::filesystem::path& path);
void validate_config(const ScenarioConfig& cfg);

struct ResultRow {
  std::string model;
  std::size_t n = 0;
  std::size_t k = 0;
  double t = 0.0;
  double H = 0.0;
  double std_error = 0.0;
  std::string method;
  double w2_bound = 0.0;
  double tv_bound = 0.0;
  double theory_bound = 0.0;
  bool certified = false;

  bool operator==(const ResultRow&) const = default;
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double ci_low = 0.0;  // 95% interval on the slope
  double ci_high = 0.0;
  std::size_t points = 0;
  std::size_t dropped = 0;
};

class FitError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// OLS of log H on log x; nonpositive H are dropped, fewer than 4 survivors is a FitError.
FitResult fit_scaling_exponent(std::span<const double> x, std::span<const double> H);

struct FitRow {
  std::size_t k = 0;
  double t = 0.0;
  FitResult fit;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<FitRow> fits;
  std::vector<std::string> warnings;
};

// particles x replicas x steps summed over the sweep.
double estimate_cost(const ScenarioConfig& cfg);

// Runs the sweep without touching the file system; BudgetExceeded before any work if over budget.
ExperimentResult compute_scenario(const ScenarioConfig& cfg);

struct EmittedFiles {
  std::filesystem::path results_csv;
  std::filesystem::path fits_csv;
  std::optional<std::filesystem::path> scaling_plot;
  std::optional<std::filesystem::path> bound_plot;
};

EmittedFiles emit_report(const ExperimentResult& result, const std::filesystem::path& dir, bool plots = true,
                         bool theory = true);

// compute_scenario followed by emit_report into cfg.out_dir.
ExperimentResult run_scenario(const ScenarioConfig& cfg);

inline constexpr const char* kCsvHeader = "model,n,k,t,H,stderr,method,w2_bound,tv_bound,theory_bound,certified";

std::string format_double(double x);
std::string rows_to_csv(std::span<const ResultRow> rows);
std::vector<ResultRow> parse_results_csv(const std::string& text);
std::string fits_to_csv(std::span<const FitRow> fits);

struct BoundRow {
  std::size_t k = 0;
  std::size_t n = 0;
  double T = 0.0;
  double bound = 0.0;
  bool certified = false;
};

struct Certificate {
  TheoryConstants constants;
  std::vector<BoundRow> rows;
  std::string report;  // key = value lines
};

// Theory constants matched to the configured model (overrides win).
TheoryConstants matched_constants(const ScenarioConfig& cfg, std::size_t n);

Certificate certify(const ScenarioConfig& cfg);
std::string bound_rows_to_csv(std::span<const BoundRow> rows);

struct PdeRun {
  std::vector<double> times;
  std::vector<double> entropy;  // H(mu_t | uniform)
  std::vector<DensityGrid> densities;
};
// Mean-field density of a torus scenario at the configured times.
PdeRun run_pde(const ScenarioConfig& cfg);

// Standalone SVG log-log plot.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool line = false;
};
std::string svg_loglog(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       std::span<const PlotSeries> series);

}  // namespace poc
