#include "poc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "poc/counter_rng.hpp"
#include "poc/dynamics.hpp"
#include "poc/gaussian_oracle.hpp"
#include "poc/meanfield_pde.hpp"

namespace poc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

using boost::property_tree::ptree;

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"model", {"type", "a", "b", "sigma", "coupling", "lambda", "orientation", "amplitude"}},
      {"sweep",
       {"n", "k", "times", "replicas", "dt", "initial", "x0", "variance", "amplitude", "grid", "seed", "threads",
        "budget"}},
      {"estimator", {"method", "bins"}},
      {"output", {"dir", "theory", "plots"}},
      {"theory", {"sigma", "gamma", "eta", "M", "C0", "delta"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, raw));
  }
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    // Allow integral values written in float notation, e.g. 1e5.
    const double d = to_double(key, raw);
    if (d < 0.0 || d != std::floor(d) || d > 1.8e19) throw ConfigError(fmt::format("{}: '{}' is not a count", key, raw));
    return static_cast<std::uint64_t>(d);
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, raw));
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Section {
 public:
  Section(const ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (!tree_) return std::nullopt;
    if (auto v = tree_->get_optional<std::string>(key)) return trim(*v);
    return std::nullopt;
  }
  std::string key(const std::string& k) const { return name_ + "." + k; }
  double num(const std::string& k, double fallback) const {
    const auto r = raw(k);
    return r ? to_double(key(k), *r) : fallback;
  }
  std::optional<double> opt_num(const std::string& k) const {
    const auto r = raw(k);
    return r ? std::optional<double>(to_double(key(k), *r)) : std::nullopt;
  }
  std::uint64_t count(const std::string& k, std::uint64_t fallback) const {
    const auto r = raw(k);
    return r ? to_u64(key(k), *r) : fallback;
  }
  bool flag(const std::string& k, bool fallback) const {
    const auto r = raw(k);
    return r ? to_bool(key(k), *r) : fallback;
  }
  std::string text(const std::string& k, const std::string& fallback) const { return raw(k).value_or(fallback); }

 private:
  const ptree* tree_;
  std::string name_;
};

ModelSpec parse_model(const Section& m, double& torus_lambda) {
  const std::string type = m.text("type", "linear");
  if (type == "linear") {
    return LinearGaussian{m.num("a", 1.0), m.num("b", 0.0), m.num("sigma", 1.0)};
  }
  if (type == "kuramoto") {
    Kuramoto k;
    k.coupling = m.num("coupling", 1.0);
    k.lambda = m.num("lambda", 1.0);
    torus_lambda = k.lambda;
    const std::string o = m.text("orientation", "as_written");
    if (o == "as_written") {
      k.orientation = KuramotoOrientation::AsWritten;
    } else if (o == "synchronizing") {
      k.orientation = KuramotoOrientation::Synchronizing;
    } else {
      throw ConfigError(fmt::format("model.orientation: unknown value '{}'", o));
    }
    return k;
  }
  if (type == "torus_sine") {
    const double amp = m.num("amplitude", 0.1);
    torus_lambda = m.num("lambda", 2.0);
    TorusKernel tk;
    tk.dim = 1;
    tk.kernel = [amp](std::span<const double> x, std::span<double> out) { out[0] = amp * std::sin(kTwoPi * x[0]); };
    tk.sigma = m.num("sigma", 1.0);
    tk.div_sup = kTwoPi * std::fabs(amp);
    tk.diam = 2.0 * std::fabs(amp);
    tk.label = "torus_sine";
    return tk;
  }
  throw ConfigError(fmt::format("model.type: unknown model '{}'", type));
}

EstimatorMethod parse_method(const std::string& s) {
  if (s == "exact") return EstimatorMethod::Exact;
  if (s == "gaussian_moment") return EstimatorMethod::GaussianMoment;
  if (s == "histogram1d") return EstimatorMethod::Histogram1D;
  if (s == "histogram2d") return EstimatorMethod::Histogram2D;
  throw ConfigError(fmt::format("estimator.method: unknown method '{}'", s));
}

InitialKind parse_initial(const std::string& s) {
  if (s == "dirac") return InitialKind::Dirac;
  if (s == "gaussian") return InitialKind::Gaussian;
  if (s == "stationary") return InitialKind::Stationary;
  if (s == "uniform") return InitialKind::Uniform;
  if (s == "cosine") return InitialKind::Cosine;
  throw ConfigError(fmt::format("sweep.initial: unknown initial law '{}'", s));
}

bool is_power_of_two(std::size_t x) { return x != 0 && (x & (x - 1)) == 0; }

}  // namespace

ScenarioConfig parse_config_text(const std::string& text) {
  ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("config parse error at line {}: {}", e.line(), e.message()));
  }
  const auto& allowed = allowed_keys();
  for (const auto& [section, body] : tree) {
    const auto it = allowed.find(section);
    if (it == allowed.end()) {
      if (body.empty()) throw ConfigError(fmt::format("key '{}' must be inside a section", section));
      throw ConfigError(fmt::format("unknown section [{}]", section));
    }
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) throw ConfigError(fmt::format("unknown key {}.{}", section, key));
    }
  }
  auto section = [&](const std::string& name) {
    const auto child = tree.get_child_optional(name);
    return Section(child ? &*child : nullptr, name);
  };
  const Section model = section("model"), sweep = section("sweep"), est = section("estimator"),
                output = section("output"), theory = section("theory");

  ScenarioConfig cfg;
  cfg.model = parse_model(model, cfg.torus_lambda);
  for (const auto& s : split_list(sweep.text("n", ""))) cfg.n_values.push_back(to_u64("sweep.n", s));
  for (const auto& s : split_list(sweep.text("k", ""))) cfg.k_values.push_back(to_u64("sweep.k", s));
  for (const auto& s : split_list(sweep.text("times", ""))) cfg.times.push_back(to_double("sweep.times", s));
  cfg.replicas = sweep.count("replicas", cfg.replicas);
  cfg.dt = sweep.num("dt", cfg.dt);
  cfg.initial = parse_initial(sweep.text("initial", is_torus(cfg.model) ? "uniform" : "dirac"));
  cfg.x0 = sweep.num("x0", cfg.x0);
  cfg.initial_variance = sweep.num("variance", cfg.initial_variance);
  cfg.initial_amplitude = sweep.num("amplitude", cfg.initial_amplitude);
  cfg.grid = sweep.count("grid", cfg.grid);
  cfg.seed = sweep.count("seed", cfg.seed);
  cfg.threads = static_cast<unsigned>(sweep.count("threads", cfg.threads));
  cfg.budget = sweep.num("budget", cfg.budget);
  cfg.method = parse_method(est.text("method", is_torus(cfg.model) ? "histogram1d" : "exact"));
  cfg.bins = est.count("bins", cfg.bins);
  cfg.out_dir = output.text("dir", cfg.out_dir.string());
  cfg.theory = output.flag("theory", cfg.theory);
  cfg.plots = output.flag("plots", cfg.plots);
  cfg.overrides = {theory.opt_num("sigma"), theory.opt_num("gamma"), theory.opt_num("eta"),
                   theory.opt_num("M"),     theory.opt_num("C0"),    theory.opt_num("delta")};
  validate_config(cfg);
  return cfg;
}

ScenarioConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void validate_config(const ScenarioConfig& cfg) {
  try {
    validate_model(cfg.model);
  } catch (const Error& e) {
    throw ConfigError(fmt::format("model: {}", e.what()));
  }
  const bool linear = std::holds_alternative<LinearGaussian>(cfg.model);
  const bool torus = is_torus(cfg.model);
  if (torus && model_dim(cfg.model) != 1) throw ConfigError("only one-dimensional torus models are supported");
  for (std::size_t n : cfg.n_values) {
    if (n < 2) throw ConfigError(fmt::format("sweep.n: n must be >= 2, got {}", n));
  }
  if (!cfg.n_values.empty()) {
    const std::size_t nmin = *std::min_element(cfg.n_values.begin(), cfg.n_values.end());
    for (std::size_t k : cfg.k_values) {
      if (k < 1 || k > nmin) throw ConfigError(fmt::format("sweep.k: k = {} must lie in 1..min(n) = {}", k, nmin));
    }
  }
  for (std::size_t i = 0; i < cfg.times.size(); ++i) {
    if (!(cfg.times[i] >= 0.0) || !std::isfinite(cfg.times[i])) throw ConfigError("sweep.times must be finite and >= 0");
    if (i > 0 && !(cfg.times[i] > cfg.times[i - 1])) throw ConfigError("sweep.times must be strictly increasing");
  }
  if (!(cfg.dt > 0.0)) throw ConfigError("sweep.dt must be positive");
  if (cfg.replicas < 1) throw ConfigError("sweep.replicas must be >= 1");
  if (cfg.threads < 1) throw ConfigError("sweep.threads must be >= 1");
  if (!(cfg.budget > 0.0)) throw ConfigError("sweep.budget must be positive");
  if (!is_power_of_two(cfg.grid) || cfg.grid < 8) throw ConfigError("sweep.grid must be a power of two >= 8");

  switch (cfg.method) {
    case EstimatorMethod::Exact:
      if (!linear) throw ConfigError("the exact estimator needs the linear model");
      break;
    case EstimatorMethod::GaussianMoment:
      if (!linear) throw ConfigError("gaussian_moment needs the linear model");
      if (cfg.replicas < 100) throw ConfigError("gaussian_moment needs replicas >= 100");
      break;
    case EstimatorMethod::Histogram1D:
    case EstimatorMethod::Histogram2D: {
      if (!torus) throw ConfigError("histogram estimators need a torus model");
      const bool one = cfg.method == EstimatorMethod::Histogram1D;
      for (std::size_t k : cfg.k_values) {
        if (k != (one ? 1u : 2u)) throw ConfigError(fmt::format("{} supports k = {} only", one ? "histogram1d" : "histogram2d", one ? 1 : 2));
      }
      if (cfg.bins < 1 || cfg.grid % cfg.bins != 0) throw ConfigError("estimator.bins must divide sweep.grid");
      const std::size_t need = one ? 50 * cfg.bins : 10 * cfg.bins * cfg.bins;
      if (!cfg.n_values.empty() && cfg.replicas < need) throw ConfigError(fmt::format("need replicas >= {} for {} bins", need, cfg.bins));
      break;
    }
  }
  switch (cfg.initial) {
    case InitialKind::Dirac:
    case InitialKind::Gaussian:
      if (!linear) throw ConfigError("dirac and gaussian initial laws need the linear model");
      if (cfg.initial == InitialKind::Gaussian && !(cfg.initial_variance >= 0.0)) {
        throw ConfigError("sweep.variance must be >= 0");
      }
      break;
    case InitialKind::Stationary:
      if (cfg.method != EstimatorMethod::Exact) throw ConfigError("the stationary start is only available to the exact estimator");
      break;
    case InitialKind::Uniform:
    case InitialKind::Cosine:
      if (!torus) throw ConfigError("uniform and cosine initial laws need a torus model");
      if (!(std::fabs(cfg.initial_amplitude) < 1.0)) throw ConfigError("sweep.amplitude must lie in (-1, 1)");
      break;
  }
  if (cfg.method != EstimatorMethod::Exact && !cfg.times.empty() && !cfg.n_values.empty()) {
    for (std::size_t i = 1; i < cfg.times.size(); ++i) {
      if (cfg.dt > cfg.times[i] - cfg.times[i - 1] + 1e-12) throw ConfigError("sweep.dt exceeds a gap between record times");
    }
    if (cfg.times.back() <= 0.0) throw ConfigError("simulation sweeps need a positive final time");
  }
}

namespace {

bool simulated(const ScenarioConfig& cfg) { return cfg.method != EstimatorMethod::Exact; }

SimulationParams sim_params(const ScenarioConfig& cfg, std::size_t n) {
  SimulationParams p;
  p.n = n;
  p.dt = cfg.dt;
  p.horizon = cfg.times.back();
  p.record_times = cfg.times;
  p.replicas = cfg.replicas;
  p.seed = counter_key(cfg.seed, n, 0, 0);
  p.threads = 1;
  switch (cfg.initial) {
    case InitialKind::Dirac:
      p.initial = DiracLaw{{cfg.x0}};
      break;
    case InitialKind::Gaussian:
      p.initial = GaussianLaw{cfg.x0, cfg.initial_variance};
      break;
    case InitialKind::Uniform:
      p.initial = UniformTorusLaw{};
      break;
    case InitialKind::Cosine: {
      const auto mu0 = density_from_function(cfg.grid, [&](double x) { return 1.0 + cfg.initial_amplitude * std::cos(kTwoPi * x); });
      p.initial = TorusDensityLaw{mu0.values};
      break;
    }
    case InitialKind::Stationary:
      throw ConfigError("the stationary start cannot be simulated");
  }
  return p;
}

DensityGrid initial_density(const ScenarioConfig& cfg) {
  if (cfg.initial == InitialKind::Uniform) return uniform_density(cfg.grid);
  return density_from_function(cfg.grid, [&](double x) { return 1.0 + cfg.initial_amplitude * std::cos(kTwoPi * x); });
}

std::function<double(double)> scalar_kernel(const ModelSpec& model) {
  if (const auto* k = std::get_if<Kuramoto>(&model)) {
    return [c = k->coupling, o = k->orientation](double x) { return kuramoto_kernel(c, o, x); };
  }
  const auto& tk = std::get<TorusKernel>(model);
  return [f = tk.kernel](double x) {
    double in[1] = {x}, out[1] = {0.0};
    f(in, out);
    return out[0];
  };
}

TorusReport torus_report(const ScenarioConfig& cfg) {
  if (const auto* k = std::get_if<Kuramoto>(&cfg.model)) return kuramoto_constants(k->coupling, k->lambda).torus;
  const auto& tk = std::get<TorusKernel>(cfg.model);
  return torus_constants(cfg.torus_lambda, tk.div_sup, tk.diam, tk.sigma);
}

struct LinearStart {
  GaussianStart start;
  bool stationary = false;
};

LinearStart linear_start(const ScenarioConfig& cfg, const LinearGaussian& m, std::size_t n) {
  LinearStart ls;
  if (cfg.initial == InitialKind::Stationary) {
    const auto st = stationary_state(m, n);
    ls.start = {0.0, st.v, st.c, st.s};
    ls.stationary = true;
  } else if (cfg.initial == InitialKind::Gaussian) {
    ls.start = {cfg.x0, cfg.initial_variance, 0.0, cfg.initial_variance};
  } else {
    ls.start = {cfg.x0, 0.0, 0.0, 0.0};
  }
  return ls;
}

struct LinearState {
  ExchangeableGaussianFlow pn;
  MeanFieldGaussianFlow mu;
};

LinearState linear_state(const LinearGaussian& m, std::size_t n, const GaussianStart& s, double t) {
  LinearState st;
  st.pn = evolve_particle_covariance(m, n, {s.m0, s.v0, s.c0, n}, t);
  st.mu = evolve_meanfield_variance(m, {s.m0, s.s0}, t);
  return st;
}

double linear_entropy(const LinearState& st, std::size_t k) {
  if (st.mu.s == 0.0 && st.pn.v == 0.0) return 0.0;  // both laws are the same Dirac mass
  return marginal_relative_entropy(st.pn.v, st.pn.c, st.mu.s, k, st.pn.m - st.mu.mean);
}

std::pair<double, bool> theory_value(const TheoryConstants& tc, std::size_t k, std::size_t n, double t) {
  const double rc = tc.r_c();
  try {
    if (rc > 1.0) {
      const auto b = theorem_bound(BoundCase::MainOptimal, k, n, t, tc);
      return {b.value, b.certified};
    }
    if (rc > 0.0) {
      const auto b = theorem_bound(BoundCase::MainIntermediate, k, n, t, tc, {rc / 3.0, 2.0 * rc / 3.0});
      return {b.value, b.certified};
    }
  } catch (const RegimeError&) {
  }
  return {kNaN, false};
}

std::vector<ResultRow> run_cell(const ScenarioConfig& cfg, std::size_t n) {
  std::vector<ResultRow> rows;
  const std::string id = model_id(cfg.model);
  std::optional<TheoryConstants> tc;
  if (cfg.theory) {
    try {
      tc = matched_constants(cfg, n);
    } catch (const RegimeError&) {
    }
  }
  auto finish = [&](ResultRow r, double eta) {
    r.model = id;
    r.n = n;
    if (r.H >= 0.0 && std::isfinite(r.H)) {
      r.w2_bound = eta > 0.0 ? w2_bound_from_entropy(r.H, eta, r.k) : (eta == 0.0 ? 0.0 : kNaN);
      r.tv_bound = tv_bound_from_entropy(r.H);
    } else {
      r.w2_bound = r.tv_bound = std::numeric_limits<double>::infinity();
    }
    if (tc) {
      std::tie(r.theory_bound, r.certified) = theory_value(*tc, r.k, n, r.t);
    } else {
      r.theory_bound = kNaN;
    }
    rows.push_back(std::move(r));
  };

  if (const auto* lin = std::get_if<LinearGaussian>(&cfg.model)) {
    const auto ls = linear_start(cfg, *lin, n);
    if (cfg.method == EstimatorMethod::Exact) {
      for (double t : cfg.times) {
        const auto st = linear_state(*lin, n, ls.start, t);
        for (std::size_t k : cfg.k_values) {
          ResultRow r;
          r.k = k;
          r.t = t;
          r.H = linear_entropy(st, k);
          r.method = "exact";
          finish(std::move(r), st.mu.s / 2.0);
        }
      }
      return rows;
    }
    const auto snaps = simulate_ensemble(cfg.model, sim_params(cfg, n));
    for (std::size_t i = 0; i < snaps.size(); ++i) {
      const double t = cfg.times[i];
      const auto mu = evolve_meanfield_variance(*lin, {ls.start.m0, ls.start.s0}, t);
      for (std::size_t k : cfg.k_values) {
        ResultRow r;
        r.k = k;
        r.t = t;
        if (mu.s == 0.0) {
          r.H = 0.0;
          r.std_error = 0.0;
          r.method = "gaussian_moment";
        } else {
          const auto rep = gaussian_moment_entropy(snaps[i], k, {mu.mean, mu.s});
          r.H = rep.H;
          r.std_error = rep.std_error;
          r.method = method_label(rep);
        }
        finish(std::move(r), mu.s / 2.0);
      }
    }
    return rows;
  }

  // Torus models: histogram estimates against the mean-field PDE.
  const auto pde = run_pde(cfg);
  const auto snaps = simulate_ensemble(cfg.model, sim_params(cfg, n));
  double eta = kNaN;
  try {
    const auto rep = torus_report(cfg);
    if (std::isfinite(rep.report.eta)) eta = rep.report.eta;
  } catch (const Error&) {
  }
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const auto& e = snaps[i];
    std::vector<double> xs(e.replicas), ys(e.replicas);
    for (std::size_t r = 0; r < e.replicas; ++r) {
      xs[r] = e.at(r, 0);
      ys[r] = e.at(r, 1);
    }
    const auto rep = cfg.method == EstimatorMethod::Histogram1D ? histogram_entropy_1d(xs, pde.densities[i], cfg.bins)
                                                                : histogram_entropy_2d(xs, ys, pde.densities[i], cfg.bins);
    ResultRow r;
    r.k = rep.k;
    r.t = cfg.times[i];
    r.H = rep.H;
    r.std_error = rep.std_error;
    r.method = method_label(rep);
    finish(std::move(r), eta);
  }
  return rows;
}

}  // namespace

TheoryConstants matched_constants(const ScenarioConfig& cfg, std::size_t n) {
  TheoryConstants tc;
  if (const auto* lin = std::get_if<LinearGaussian>(&cfg.model)) {
    const auto st = stationary_state(*lin, n);
    const auto ls = linear_start(cfg, *lin, n);
    const double s_sup = std::max(st.s, ls.start.s0);
    tc.sigma = lin->sigma;
    tc.eta = s_sup / 2.0;
    tc.gamma = 2.0 * lin->b * lin->b * s_sup;
    tc.M = lin->b * lin->b * std::max(st.v, ls.start.v0);
    if (ls.stationary) {
      double c0 = 0.0;
      const LinearState s0{{0.0, st.v, st.c, n}, {0.0, st.s}};
      const double nn = static_cast<double>(n);
      for (std::size_t k = 1; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        c0 = std::max(c0, linear_entropy(s0, k) * nn * nn / (kk * kk));
      }
      tc.C0 = c0;
    }
    if (lin->b == 0.0) tc.gamma = std::numeric_limits<double>::min();
  } else {
    const auto rep = torus_report(cfg);
    if (!std::isfinite(rep.report.eta)) throw RegimeError("torus smallness condition fails; no theory constants");
    tc.sigma = model_sigma(cfg.model);
    tc.eta = rep.report.eta;
    tc.gamma = rep.report.gamma;
    tc.M = interaction_bound_proxy(cfg.model).value_or(kNaN);
  }
  const auto& o = cfg.overrides;
  if (o.sigma) tc.sigma = *o.sigma;
  if (o.gamma) tc.gamma = *o.gamma;
  if (o.eta) tc.eta = *o.eta;
  if (o.M) tc.M = *o.M;
  if (o.C0) tc.C0 = *o.C0;
  const double rc = tc.r_c();
  tc.delta = o.delta ? *o.delta : (rc > 0.0 ? default_delta(rc) : 1.0);
  return tc;
}

double estimate_cost(const ScenarioConfig& cfg) {
  if (cfg.times.empty() || cfg.n_values.empty() || cfg.k_values.empty()) return 0.0;
  double total = 0.0;
  if (!simulated(cfg)) {
    for (std::size_t n : cfg.n_values) total += static_cast<double>(n) * static_cast<double>(cfg.k_values.size() * cfg.times.size());
    return total;
  }
  const double pairwise = has_drift_shortcut(cfg.model) ? 1.0 : 0.0;
  for (std::size_t n : cfg.n_values) {
    const auto p = sim_params(cfg, n);
    const double steps = static_cast<double>(planned_steps(p));
    const double nn = static_cast<double>(n);
    total += nn * static_cast<double>(cfg.replicas) * steps * (pairwise > 0.0 ? 1.0 : nn);
  }
  return total;
}

ExperimentResult compute_scenario(const ScenarioConfig& cfg) {
  validate_config(cfg);
  const double cost = estimate_cost(cfg);
  if (cost > cfg.budget) {
    throw BudgetExceeded(fmt::format("scenario needs about {:.3g} particle steps, budget is {:.3g}", cost, cfg.budget),
                         cost, cfg.budget);
  }
  ExperimentResult result;
  if (cfg.n_values.empty() || cfg.k_values.empty() || cfg.times.empty()) return result;

  std::vector<std::size_t> cells = cfg.n_values;
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  std::vector<std::vector<ResultRow>> per_cell(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        per_cell[i] = run_cell(cfg, cells[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned workers = std::min<unsigned>(cfg.threads, static_cast<unsigned>(cells.size()));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (auto& rows : per_cell) {
    for (auto& r : rows) result.rows.push_back(std::move(r));
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.n, a.k, a.t) < std::tie(b.n, b.k, b.t);
  });

  for (std::size_t k : cfg.k_values) {
    for (double t : cfg.times) {
      std::vector<double> xs, hs;
      for (const auto& r : result.rows) {
        if (r.k == k && r.t == t) {
          xs.push_back(static_cast<double>(r.n));
          hs.push_back(r.H);
        }
      }
      if (xs.size() < 4) continue;
      try {
        result.fits.push_back({k, t, fit_scaling_exponent(xs, hs)});
      } catch (const FitError& e) {
        result.warnings.push_back(fmt::format("fit k = {}, t = {}: {}", k, format_double(t), e.what()));
      }
    }
  }
  return result;
}

FitResult fit_scaling_exponent(std::span<const double> x, std::span<const double> H) {
  if (x.size() != H.size()) throw InvalidInput("x and H differ in length");
  std::vector<double> lx, ly;
  FitResult fit;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !std::isfinite(x[i])) throw InvalidInput(fmt::format("x must be positive, got {}", x[i]));
    if (!(H[i] > 0.0) || !std::isfinite(H[i])) {
      ++fit.dropped;
      continue;
    }
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(H[i]));
  }
  const std::size_t m = lx.size();
  if (m < 4) throw FitError(fmt::format("need at least 4 positive points, have {}", m));
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw FitError("x values are all equal");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = ly[i] - fit.intercept - fit.slope * lx[i];
    rss += e * e;
  }
  const double df = static_cast<double>(m - 2);
  fit.slope_stderr = std::sqrt(rss / df / sxx);
  const double q = boost::math::quantile(boost::math::students_t(df), 0.975);
  fit.ci_low = fit.slope - q * fit.slope_stderr;
  fit.ci_high = fit.slope + q * fit.slope_stderr;
  fit.points = m;
  return fit;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", x);
}

std::string rows_to_csv(std::span<const ResultRow> rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.model, r.n, r.k, format_double(r.t), format_double(r.H),
                       format_double(r.std_error), r.method, format_double(r.w2_bound), format_double(r.tv_bound),
                       format_double(r.theory_bound), r.certified ? "true" : "false");
  }
  return out;
}

namespace {

double parse_csv_double(const std::string& s) {
  if (s == "nan") return kNaN;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return to_double("csv", s);
}

}  // namespace

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw InvalidInput("results CSV header mismatch");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw InvalidInput(fmt::format("CSV row has {} fields: {}", f.size(), line));
    ResultRow r;
    r.model = f[0];
    r.n = to_u64("csv.n", f[1]);
    r.k = to_u64("csv.k", f[2]);
    r.t = parse_csv_double(f[3]);
    r.H = parse_csv_double(f[4]);
    r.std_error = parse_csv_double(f[5]);
    r.method = f[6];
    r.w2_bound = parse_csv_double(f[7]);
    r.tv_bound = parse_csv_double(f[8]);
    r.theory_bound = parse_csv_double(f[9]);
    if (f[10] != "true" && f[10] != "false") throw InvalidInput("certified must be true or false");
    r.certified = f[10] == "true";
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string fits_to_csv(std::span<const FitRow> fits) {
  std::string out = "k,t,slope,intercept,slope_stderr,ci_low,ci_high,points\n";
  for (const auto& f : fits) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", f.k, format_double(f.t), format_double(f.fit.slope),
                       format_double(f.fit.intercept), format_double(f.fit.slope_stderr), format_double(f.fit.ci_low),
                       format_double(f.fit.ci_high), f.fit.points);
  }
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

std::string series_label(std::size_t k, double t) { return fmt::format("k={} t={}", k, format_double(t)); }

}  // namespace

EmittedFiles emit_report(const ExperimentResult& result, const std::filesystem::path& dir, bool plots, bool theory) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  EmittedFiles files;
  files.results_csv = dir / "results.csv";
  files.fits_csv = dir / "fits.csv";
  write_file(files.results_csv, rows_to_csv(result.rows));
  write_file(files.fits_csv, fits_to_csv(result.fits));
  if (!plots || result.rows.empty()) return files;

  std::map<std::pair<std::size_t, double>, PlotSeries> data, bounds;
  for (const auto& r : result.rows) {
    const auto key = std::make_pair(r.k, r.t);
    auto& s = data[key];
    s.label = series_label(r.k, r.t);
    if (r.H > 0.0 && std::isfinite(r.H)) {
      s.x.push_back(static_cast<double>(r.n));
      s.y.push_back(r.H);
    }
    if (theory && r.theory_bound > 0.0 && std::isfinite(r.theory_bound)) {
      auto& b = bounds[key];
      b.label = "bound " + series_label(r.k, r.t);
      b.line = true;
      b.x.push_back(static_cast<double>(r.n));
      b.y.push_back(r.theory_bound);
    }
  }
  std::vector<PlotSeries> scatter;
  for (auto& [key, s] : data) {
    scatter.push_back(s);
    for (const auto& f : result.fits) {
      if (f.k != key.first || f.t != key.second || s.x.empty()) continue;
      PlotSeries line;
      line.label = fmt::format("fit slope {:.3f}", f.fit.slope);
      line.line = true;
      const auto [lo, hi] = std::minmax_element(s.x.begin(), s.x.end());
      for (double x : {*lo, *hi}) {
        line.x.push_back(x);
        line.y.push_back(std::exp(f.fit.intercept + f.fit.slope * std::log(x)));
      }
      scatter.push_back(std::move(line));
    }
  }
  files.scaling_plot = dir / "scaling.svg";
  write_file(*files.scaling_plot, svg_loglog("Entropy vs n", "n", "H", scatter));
  if (!bounds.empty()) {
    std::vector<PlotSeries> overlay;
    for (auto& [key, s] : data) {
      overlay.push_back(s);
      if (bounds.contains(key)) overlay.push_back(bounds[key]);
    }
    files.bound_plot = dir / "bounds.svg";
    write_file(*files.bound_plot, svg_loglog("Entropy and theory bound", "n", "H", overlay));
  }
  return files;
}

ExperimentResult run_scenario(const ScenarioConfig& cfg) {
  auto result = compute_scenario(cfg);
  emit_report(result, cfg.out_dir, cfg.plots, cfg.theory);
  return result;
}

Certificate certify(const ScenarioConfig& cfg) {
  validate_config(cfg);
  Certificate cert;
  if (cfg.n_values.empty()) {
    cert.report = "rows = 0\n";
    return cert;
  }
  const std::size_t nmax = *std::max_element(cfg.n_values.begin(), cfg.n_values.end());
  cert.constants = matched_constants(cfg, nmax);
  const auto& tc = cert.constants;
  std::string rep;
  auto kv = [&rep](const std::string& k, const std::string& v) { rep += k + " = " + v + "\n"; };
  kv("model", model_id(cfg.model));
  kv("sigma", format_double(tc.sigma));
  kv("gamma", format_double(tc.gamma));
  kv("eta", format_double(tc.eta));
  kv("M", format_double(tc.M));
  kv("C0", format_double(tc.C0));
  kv("delta", format_double(tc.delta));
  kv("Z", format_double(tc.Z()));
  kv("gamma_tilde", format_double(tc.gamma_tilde()));
  kv("alpha", format_double(tc.alpha()));
  kv("r_c", format_double(tc.r_c()));
  kv("regime", regime_name(classify_regime(tc.r_c())));
  const double s4 = std::pow(tc.sigma, 4);
  const bool explicit_ok = s4 > 12.0 * tc.gamma * tc.eta;
  kv("explicit_constants", explicit_ok ? "true" : "false");
  if (explicit_ok) {
    const auto C = explicit_C1_C2(tc.M, tc.sigma, tc.gamma, tc.eta, tc.C0);
    kv("C1", format_double(C.C1));
    kv("C2", format_double(C.C2));
  }
  for (std::size_t n : cfg.n_values) {
    const TheoryConstants tn = matched_constants(cfg, n);
    for (std::size_t k : cfg.k_values) {
      for (double t : cfg.times) {
        const auto [value, certified] = theory_value(tn, k, n, t);
        cert.rows.push_back({k, n, t, value, certified});
      }
    }
  }
  std::sort(cert.rows.begin(), cert.rows.end(), [](const BoundRow& a, const BoundRow& b) {
    return std::tie(a.n, a.k, a.T) < std::tie(b.n, b.k, b.T);
  });
  const bool all_certified =
      !cert.rows.empty() && std::all_of(cert.rows.begin(), cert.rows.end(), [](const BoundRow& r) { return r.certified; });
  kv("rows", std::to_string(cert.rows.size()));
  kv("certified", all_certified ? "true" : "false");
  if (!all_certified) kv("note", "constant untracked outside sigma^4 > 12 gamma eta; bound shape only");
  cert.report = rep;
  return cert;
}

std::string bound_rows_to_csv(std::span<const BoundRow> rows) {
  std::string out = "k,n,T,bound,certified\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.k, r.n, format_double(r.T), format_double(r.bound),
                       r.certified ? "true" : "false");
  }
  return out;
}

PdeRun run_pde(const ScenarioConfig& cfg) {
  if (!is_torus(cfg.model)) throw ConfigError("the PDE solver needs a torus model");
  if (cfg.initial != InitialKind::Uniform && cfg.initial != InitialKind::Cosine) {
    throw ConfigError("the PDE solver needs a uniform or cosine initial density");
  }
  PdeRun run;
  if (cfg.times.empty()) return run;
  const auto kernel = sample_kernel(cfg.grid, scalar_kernel(cfg.model));
  const auto mu0 = initial_density(cfg);
  const double dt = std::min(cfg.dt, 1e-3);
  const double horizon = std::max(cfg.times.back(), dt);
  run.densities = solve_mv_pde(kernel, model_sigma(cfg.model), mu0, dt, horizon, cfg.times);
  run.times = cfg.times;
  for (const auto& d : run.densities) run.entropy.push_back(entropy_vs_uniform(d));
  return run;
}

std::string svg_loglog(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       std::span<const PlotSeries> series) {
  constexpr double W = 640, Hh = 480, L = 80, R = 200, T = 40, B = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0.0) || !(s.y[i] > 0.0)) continue;
      xmin = std::min(xmin, std::log10(s.x[i]));
      xmax = std::max(xmax, std::log10(s.x[i]));
      ymin = std::min(ymin, std::log10(s.y[i]));
      ymax = std::max(ymax, std::log10(s.y[i]));
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  xmin = std::floor(xmin), xmax = std::max(std::ceil(xmax), xmin + 1);
  ymin = std::floor(ymin), ymax = std::max(std::ceil(ymax), ymin + 1);
  auto px = [&](double x) { return L + (std::log10(x) - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return Hh - B - (std::log10(y) - ymin) / (ymax - ymin) * (Hh - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
      W, Hh, (W - R + L) / 2, title);
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", L, T,
                     W - L - R, Hh - T - B);
  for (double e = xmin; e <= xmax + 1e-9; e += 1.0) {
    const double x = px(std::pow(10.0, e));
    svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{}\" x2=\"{:.2f}\" y2=\"{}\" stroke=\"#ddd\"/>\n", x, T, x, Hh - B);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">1e{}</text>\n", x, Hh - B + 18, e);
  }
  for (double e = ymin; e <= ymax + 1e-9; e += 1.0) {
    const double y = py(std::pow(10.0, e));
    svg += fmt::format("<line x1=\"{}\" y1=\"{:.2f}\" x2=\"{}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>\n", L, y, W - R, y);
    svg += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">1e{}</text>\n", L - 6, y + 4, e);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (W - R + L) / 2, Hh - 16, xlabel);
  svg += fmt::format("<text x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{}</text>\n",
                     (Hh - B + T) / 2, (Hh - B + T) / 2, ylabel);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = colors[i % std::size(colors)];
    std::string pts;
    for (std::size_t j = 0; j < s.x.size(); ++j) {
      if (!(s.x[j] > 0.0) || !(s.y[j] > 0.0)) continue;
      if (s.line) {
        pts += fmt::format("{:.2f},{:.2f} ", px(s.x[j]), py(s.y[j]));
      } else {
        svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(s.x[j]), py(s.y[j]), color);
      }
    }
    if (s.line && !pts.empty()) {
      svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", pts, color);
    }
    const double ly = T + 14 + 16 * static_cast<double>(i);
    svg += fmt::format("<rect x=\"{}\" y=\"{:.0f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", W - R + 12, ly - 9, color);
    svg += fmt::format("<text x=\"{}\" y=\"{:.0f}\">{}</text>\n", W - R + 28, ly, s.label);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace poc
