#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "poc/gaussian_oracle.hpp"
#include "poc/harness.hpp"
#include "poc/models.hpp"
#include "poc/theory_bounds.hpp"

namespace {

enum Exit : int { kOk = 0, kIo = 1, kConfig = 2, kBudget = 3, kNumerical = 4 };

struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> budget;
};

void add_common(CLI::App* cmd, Common& c, bool need_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "scenario config (INI)")->check(CLI::ExistingFile);
  if (need_config) opt->required();
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--budget", c.budget, "cap on particle steps")->check(CLI::PositiveNumber);
}

poc::ScenarioConfig load(const Common& c) {
  auto cfg = poc::parse_config(c.config);
  if (c.out) cfg.out_dir = *c.out;
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (c.budget) cfg.budget = *c.budget;
  poc::validate_config(cfg);
  return cfg;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw poc::IoError(fmt::format("cannot open {} for writing", path.string()));
  out << text;
}

int cmd_simulate(const Common& c) {
  const auto cfg = load(c);
  const auto result = poc::run_scenario(cfg);
  fmt::print("rows = {}\n", result.rows.size());
  for (const auto& f : result.fits) {
    fmt::print("fit k = {} t = {}: slope {:.4f} [{:.4f}, {:.4f}] from {} points\n", f.k, poc::format_double(f.t),
               f.fit.slope, f.fit.ci_low, f.fit.ci_high, f.fit.points);
  }
  for (const auto& w : result.warnings) fmt::print(stderr, "warning: {}\n", w);
  fmt::print("output = {}\n", cfg.out_dir.string());
  return kOk;
}

int cmd_certify(const Common& c) {
  const auto cfg = load(c);
  const auto cert = poc::certify(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "certificate.txt", cert.report);
  write_text(cfg.out_dir / "bounds.csv", poc::bound_rows_to_csv(cert.rows));
  fmt::print("{}", cert.report);
  return kOk;
}

int cmd_pde(const Common& c) {
  const auto cfg = load(c);
  const auto run = poc::run_pde(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  std::string trace = "t,H,min,max\n";
  for (std::size_t i = 0; i < run.times.size(); ++i) {
    const auto& d = run.densities[i];
    trace += fmt::format("{},{},{},{}\n", poc::format_double(run.times[i]), poc::format_double(run.entropy[i]),
                         poc::format_double(d.min()), poc::format_double(d.max()));
    poc::write_density_csv(cfg.out_dir / fmt::format("density_{:03d}.csv", i), d);
  }
  write_text(cfg.out_dir / "entropy.csv", trace);
  fmt::print("{}", trace);
  return kOk;
}

// Quick closed-form checks that need no config.
int cmd_selftest() {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    fmt::print("{} {}\n", ok ? "PASS" : "FAIL", name);
    failures += ok ? 0 : 1;
  };
  const double pi = 3.14159265358979323846;
  check("rate constants", std::fabs(poc::rate_constants(1.0, 0.05, 1.0).r_c - 4.0) < 1e-15);
  check("kuramoto critical coupling",
        std::fabs(poc::kuramoto_critical_coupling(1.0, 1.0) - 1.0 / (8.0 * pi)) < 1e-12);
  check("explicit constants", std::fabs(poc::explicit_C1_C2(1.0, 1.0, 0.01, 1.0, 1.0).C1 - 1.0 / 0.7744) < 1e-12);
  check("A sup product", std::fabs(poc::tilde_A_sup(1, 3, 2.0).value - 0.1) < 1e-14);
  const poc::LinearGaussian lin{1.0, 0.5, 1.0};
  const auto st = poc::stationary_state(lin, 64);
  const double h1 = poc::marginal_relative_entropy(st.v, st.c, st.s, 1);
  const double h2 = poc::marginal_relative_entropy(st.v, st.c, st.s, 2);
  check("stationary entropy ordering", h1 > 0.0 && h2 > h1);
  return failures == 0 ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"poclab: propagation-of-chaos experiments"};
  app.require_subcommand(1);
  Common sim, cert, pde;
  add_common(app.add_subcommand("simulate", "run a scenario sweep and write CSV and plots"), sim);
  add_common(app.add_subcommand("certify", "evaluate theory bounds for a scenario"), cert);
  add_common(app.add_subcommand("pde", "solve the mean-field PDE for a torus scenario"), pde);
  auto* self = app.add_subcommand("selftest", "run built-in closed-form checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (app.got_subcommand("simulate")) return cmd_simulate(sim);
    if (app.got_subcommand("certify")) return cmd_certify(cert);
    if (app.got_subcommand("pde")) return cmd_pde(pde);
    if (self->parsed()) return cmd_selftest();
  } catch (const poc::BudgetExceeded& e) {
    fmt::print(stderr, "budget refused: {} (estimate {:.3g}, cap {:.3g})\n", e.what(), e.estimate(), e.cap());
    return kBudget;
  } catch (const poc::NumericalError& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return kNumerical;
  } catch (const poc::IoError& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return kIo;
  } catch (const poc::Error& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  }
  return kOk;
}
