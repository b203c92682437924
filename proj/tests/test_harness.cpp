#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "poc/harness.hpp"

using namespace poc;
namespace fs = std::filesystem;

namespace {

const char* kStationarySweep = R"([model]
type = linear
a = 1
b = 0.5
sigma = 1
[sweep]
n = 16, 32, 64, 128, 256, 512
k = 1, 2
times = 1
initial = stationary
[estimator]
method = exact
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("poclab_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, ParsesSectionsAndLists) {
  const auto cfg = parse_config_text(kStationarySweep);
  EXPECT_EQ(cfg.n_values.size(), 6u);
  EXPECT_EQ(cfg.k_values, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(cfg.initial, InitialKind::Stationary);
  EXPECT_EQ(cfg.method, EstimatorMethod::Exact);
  const auto& m = std::get<LinearGaussian>(cfg.model);
  EXPECT_DOUBLE_EQ(m.b, 0.5);
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config_text("[model]\ntype = linear\nfoo = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[extra]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[model]\ntype = heat\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[sweep]\nn = 4\nk = 5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[sweep]\ntimes = 1, 0.5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[sweep]\nn = ten\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[model]\ntype = kuramoto\ncoupling = 1\n[estimator]\nmethod = gaussian_moment\n"),
               ConfigError);
  EXPECT_THROW(parse_config_text("[model]\ntype = linear\nb = 0.5\n[estimator]\nmethod = histogram1d\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[sweep]\ninitial = stationary\n[estimator]\nmethod = gaussian_moment\n"), ConfigError);
}

TEST(Scenario, EmptySweepGivesEmptyResultAndHeaderOnlyCsv) {
  const auto cfg = parse_config_text("[model]\ntype = linear\nb = 0.5\n");
  const auto res = compute_scenario(cfg);
  EXPECT_TRUE(res.rows.empty());
  EXPECT_TRUE(res.fits.empty());
  const auto dir = scratch("empty");
  const auto files = emit_report(res, dir);
  EXPECT_EQ(slurp(files.results_csv), std::string(kCsvHeader) + "\n");
  EXPECT_FALSE(files.scaling_plot.has_value());
  fs::remove_all(dir);
}

TEST(Scenario, StationarySweepFitsMinusTwo) {
  const auto res = compute_scenario(parse_config_text(kStationarySweep));
  EXPECT_EQ(res.rows.size(), 12u);
  ASSERT_EQ(res.fits.size(), 2u);
  for (const auto& f : res.fits) {
    EXPECT_NEAR(f.fit.slope, -2.0, 0.05) << "k = " << f.k;
    EXPECT_EQ(f.fit.points, 6u);
    EXPECT_LE(f.fit.ci_low, f.fit.slope);
    EXPECT_GE(f.fit.ci_high, f.fit.slope);
  }
  for (const auto& r : res.rows) {
    EXPECT_GE(r.H, 0.0);
    EXPECT_EQ(r.method, "exact");
    EXPECT_LE(r.tv_bound, 1.0);
  }
}

TEST(Scenario, ByteDeterministicSimulation) {
  const std::string text = R"([model]
type = linear
a = 1
b = 0.5
[sweep]
n = 4, 8
k = 1, 2
times = 0.5, 1
replicas = 200
dt = 0.05
seed = 99
threads = 2
[estimator]
method = gaussian_moment
)";
  const auto cfg = parse_config_text(text);
  const auto a = rows_to_csv(compute_scenario(cfg).rows);
  const auto b = rows_to_csv(compute_scenario(cfg).rows);
  EXPECT_EQ(a, b);
  auto other = cfg;
  other.seed = 100;
  EXPECT_NE(rows_to_csv(compute_scenario(other).rows), a);
}

TEST(Scenario, BudgetRefusedBeforeWork) {
  auto cfg = parse_config_text("[model]\ntype = linear\nb = 0.5\n[sweep]\nn = 64\nk = 1\ntimes = 10\nreplicas = 10000\n"
                               "dt = 0.01\n[estimator]\nmethod = gaussian_moment\n");
  cfg.budget = 1e6;
  try {
    compute_scenario(cfg);
    FAIL() << "expected BudgetExceeded";
  } catch (const BudgetExceeded& e) {
    EXPECT_GT(e.estimate(), 1e6);
    EXPECT_DOUBLE_EQ(e.cap(), 1e6);
  }
}

TEST(Csv, RoundTripIsExact) {
  std::vector<ResultRow> rows{
      {"linear", 16, 1, 0.1, 1.0 / 3.0, 0.0, "exact", std::sqrt(2.0), 0.25, 1e-300, true},
      {"kuramoto", 8, 2, 5.0, 0.0, 1e-7, "histogram2d(16)", std::numeric_limits<double>::infinity(), 1.0,
       std::numeric_limits<double>::quiet_NaN(), false},
  };
  const auto text = rows_to_csv(rows);
  const auto back = parse_results_csv(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], rows[0]);
  EXPECT_TRUE(std::isnan(back[1].theory_bound));
  EXPECT_EQ(rows_to_csv(back), text);
  EXPECT_THROW(parse_results_csv("bad header\n"), InvalidInput);
}

TEST(Fit, SyntheticLaws) {
  std::vector<double> x, h, c;
  for (double r : {0.01, 0.02, 0.05, 0.1, 0.3}) {
    x.push_back(r);
    h.push_back(3.0 * r * r);
    c.push_back(0.4);
  }
  const auto f = fit_scaling_exponent(x, h);
  EXPECT_NEAR(f.slope, 2.0, 1e-9);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-9);
  EXPECT_NEAR(fit_scaling_exponent(x, c).slope, 0.0, 1e-12);
  h[1] = 0.0;
  const auto g = fit_scaling_exponent(x, h);
  EXPECT_EQ(g.dropped, 1u);
  EXPECT_EQ(g.points, 4u);
  h[2] = -1.0;
  EXPECT_THROW(fit_scaling_exponent(x, h), FitError);
}

TEST(Report, RowsPlotsAndBoundOverlay) {
  auto cfg = parse_config_text(kStationarySweep);
  cfg.k_values = {1};
  cfg.n_values = {16, 32, 64};
  const auto res = compute_scenario(cfg);
  const auto dir = scratch("report");
  const auto files = emit_report(res, dir);
  const auto text = slurp(files.results_csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  ASSERT_TRUE(files.scaling_plot.has_value());
  EXPECT_TRUE(fs::exists(*files.scaling_plot));
  ASSERT_TRUE(files.bound_plot.has_value());
  EXPECT_TRUE(fs::exists(*files.bound_plot));
  // Re-read the emitted table: certified bounds sit above the data.
  for (const auto& r : parse_results_csv(text)) {
    if (r.certified) EXPECT_GE(r.theory_bound, r.H) << r.n;
  }
  EXPECT_THROW(emit_report(res, "/proc/poclab_cannot_write"), IoError);
  fs::remove_all(dir);
}

TEST(Certify, ReportAndRows) {
  const auto cert = certify(parse_config_text(kStationarySweep));
  EXPECT_EQ(cert.rows.size(), 12u);
  EXPECT_NE(cert.report.find("r_c = "), std::string::npos);
  EXPECT_NE(cert.report.find("regime = "), std::string::npos);
  const auto csv = bound_rows_to_csv(cert.rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,n,T,bound,certified");
}

TEST(Pde, TorusScenario) {
  const auto cfg = parse_config_text(R"([model]
type = kuramoto
coupling = 0.5
orientation = synchronizing
[sweep]
times = 0.5, 1
initial = cosine
amplitude = 0.3
grid = 64
)");
  const auto run = run_pde(cfg);
  ASSERT_EQ(run.entropy.size(), 2u);
  EXPECT_LT(run.entropy[1], run.entropy[0]);
  EXPECT_THROW(run_pde(parse_config_text(kStationarySweep)), ConfigError);
}

#ifdef POCLAB_CLI
namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(POCLAB_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const auto good = dir / "good.ini";
  std::ofstream(good) << kStationarySweep;
  const auto bad = dir / "bad.ini";
  std::ofstream(bad) << "[model]\ntype = nothing\n";
  const auto big = dir / "big.ini";
  std::ofstream(big) << "[model]\ntype = linear\nb = 0.5\n[sweep]\nn = 64\nk = 1\ntimes = 10\nreplicas = 10000\n"
                        "dt = 0.01\n[estimator]\nmethod = gaussian_moment\n";

  EXPECT_EQ(run_cli("selftest"), 0);
  EXPECT_EQ(run_cli("simulate --config " + good.string() + " --out " + (dir / "out").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "results.csv"));
  EXPECT_EQ(run_cli("certify --config " + good.string() + " --out " + (dir / "cert").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "cert" / "certificate.txt"));
  EXPECT_EQ(run_cli("simulate --config " + bad.string()), 2);
  EXPECT_EQ(run_cli("simulate"), 2);
  EXPECT_EQ(run_cli("simulate --config " + big.string() + " --budget 1000"), 3);
  EXPECT_EQ(run_cli("simulate --config " + good.string() + " --out /proc/poclab_cannot_write"), 1);
  fs::remove_all(dir);
}
#endif
