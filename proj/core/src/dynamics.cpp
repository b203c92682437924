#include "poc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <thread>

#include <fmt/format.h>

#include "poc/counter_rng.hpp"
#include "poc/errors.hpp"

namespace poc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Stream index reserved for initial-law draws.
constexpr std::uint64_t kInitialStep = std::numeric_limits<std::uint64_t>::max();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("non-finite particle position");
  }
}

void linear_pairwise(const LinearGaussian& m, std::span<const double> x, std::size_t n, std::span<double> out) {
  const double w = n > 1 ? m.b / static_cast<double>(n - 1) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) s += x[j] - x[i];
    }
    out[i] = -m.a * x[i] + w * s;
  }
}

void linear_shortcut(const LinearGaussian& m, std::span<const double> x, std::size_t n, std::span<double> out) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += x[i];
  const double w = n > 1 ? m.b / static_cast<double>(n - 1) : 0.0;
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = -m.a * x[i] + w * (sum - nn * x[i]);
}

void kuramoto_pairwise(const Kuramoto& m, std::span<const double> x, std::size_t n, std::span<double> out) {
  const double w = n > 1 ? 1.0 / static_cast<double>(n - 1) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) s += kuramoto_kernel(m.coupling, m.orientation, x[i] - x[j]);
    }
    out[i] = w * s;
  }
}

void kuramoto_shortcut(const Kuramoto& m, std::span<const double> x, std::size_t n, std::span<double> out) {
  // sum_j sin(2pi(x_i - x_j)) = sin(2pi x_i) C - cos(2pi x_i) S; the j = i term is zero.
  double cs = 0.0, sn = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cs += std::cos(kTwoPi * x[j]);
    sn += std::sin(kTwoPi * x[j]);
  }
  const double sign = m.orientation == KuramotoOrientation::AsWritten ? 1.0 : -1.0;
  const double w = n > 1 ? sign * m.coupling / (kTwoPi * static_cast<double>(n - 1)) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = w * (std::sin(kTwoPi * x[i]) * cs - std::cos(kTwoPi * x[i]) * sn);
  }
}

void convex_pairwise(const ConvexPotential& m, std::span<const double> x, std::size_t n, std::span<double> out) {
  const auto d = static_cast<std::size_t>(m.dim);
  const double w = n > 1 ? 1.0 / static_cast<double>(n - 1) : 0.0;
  std::vector<double> diff(d), g(d), acc(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      for (std::size_t c = 0; c < d; ++c) diff[c] = x[i * d + c] - x[j * d + c];
      m.grad_w(diff, g);
      for (std::size_t c = 0; c < d; ++c) acc[c] -= g[c];
    }
    m.grad_u(x.subspan(i * d, d), g);
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = -g[c] + w * acc[c];
  }
}

void torus_pairwise(const TorusKernel& m, std::span<const double> x, std::size_t n, std::span<double> out) {
  const auto d = static_cast<std::size_t>(m.dim);
  const double w = n > 1 ? 1.0 / static_cast<double>(n - 1) : 0.0;
  std::vector<double> diff(d), g(d), acc(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      for (std::size_t c = 0; c < d; ++c) diff[c] = x[i * d + c] - x[j * d + c];
      m.kernel(diff, g);
      for (std::size_t c = 0; c < d; ++c) acc[c] += g[c];
    }
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = w * acc[c];
  }
}

bool use_shortcut(const ModelSpec& model, DriftPath path) {
  if (path == DriftPath::Pairwise) return false;
  const bool avail = has_drift_shortcut(model);
  if (path == DriftPath::Shortcut && !avail) {
    throw UnsupportedModel(fmt::format("no O(n) drift shortcut for model '{}'", model_id(model)));
  }
  return avail;
}

// Drift without input validation, for the inner loop.
void drift_unchecked(const ModelSpec& model, std::span<const double> x, std::size_t n, std::span<double> out,
                     bool shortcut) {
  std::visit(Overloaded{
                 [&](const LinearGaussian& m) { shortcut ? linear_shortcut(m, x, n, out) : linear_pairwise(m, x, n, out); },
                 [&](const Kuramoto& m) { shortcut ? kuramoto_shortcut(m, x, n, out) : kuramoto_pairwise(m, x, n, out); },
                 [&](const ConvexPotential& m) { convex_pairwise(m, x, n, out); },
                 [&](const TorusKernel& m) { torus_pairwise(m, x, n, out); },
             },
             model);
}

std::size_t segment_steps(double gap, double dt) {
  if (gap <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(gap / dt - 1e-9));
}

}  // namespace

ParticleEnsemble ParticleEnsemble::zeros(std::size_t replicas, std::size_t n, int dim) {
  ParticleEnsemble e;
  e.replicas = replicas;
  e.n = n;
  e.dim = dim;
  e.positions.assign(replicas * n * static_cast<std::size_t>(dim), 0.0);
  return e;
}

bool has_drift_shortcut(const ModelSpec& model) {
  return std::holds_alternative<LinearGaussian>(model) || std::holds_alternative<Kuramoto>(model);
}

double wrap_unit(double x) {
  double y = x - std::floor(x);
  if (y >= 1.0) y = 0.0;
  return y;
}

void drift_field(const ModelSpec& model, double /*t*/, std::span<const double> positions, std::size_t n,
                 std::span<double> out, DriftPath path) {
  const auto d = static_cast<std::size_t>(model_dim(model));
  if (n == 0) throw InvalidInput("drift_field needs at least one particle");
  if (positions.size() != n * d || out.size() != n * d) {
    throw InvalidInput(fmt::format("positions must be {} x {}", n, d));
  }
  check_finite(positions);
  drift_unchecked(model, positions, n, out, use_shortcut(model, path));
}

std::vector<double> drift_field(const ModelSpec& model, double t, std::span<const double> positions, std::size_t n,
                                DriftPath path) {
  std::vector<double> out(positions.size());
  drift_field(model, t, positions, n, out, path);
  return out;
}

ParticleEnsemble em_step(const ModelSpec& model, const ParticleEnsemble& state, double dt,
                         std::span<const double> gaussian_noise, DriftPath path) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError(fmt::format("dt must be positive, got {}", dt));
  if (gaussian_noise.size() != state.positions.size()) throw InvalidInput("noise shape does not match the ensemble");
  if (state.dim != model_dim(model)) throw InvalidInput("ensemble dimension does not match the model");
  const bool shortcut = use_shortcut(model, path);
  const bool torus = is_torus(model);
  const double scale = model_sigma(model) * std::sqrt(dt);
  ParticleEnsemble next = state;
  std::vector<double> drift(state.replica_size());
  for (std::size_t r = 0; r < state.replicas; ++r) {
    auto x = next.replica(r);
    check_finite(x);
    drift_unchecked(model, x, state.n, drift, shortcut);
    const std::size_t off = r * state.replica_size();
    for (std::size_t i = 0; i < x.size(); ++i) {
      double v = x[i] + drift[i] * dt + scale * gaussian_noise[off + i];
      x[i] = torus ? wrap_unit(v) : v;
    }
  }
  next.time = state.time + dt;
  return next;
}

std::vector<double> grid_density_cdf(std::span<const double> density) {
  // Cell i spans [i/N, (i+1)/N) with the trapezoid mass of its two endpoints.
  const std::size_t N = density.size();
  if (N < 2) throw ParameterError("grid density needs at least 2 points");
  std::vector<double> cdf(N + 1, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const double a = density[i], b = density[(i + 1) % N];
    if (!(a >= 0.0) || !(b >= 0.0)) throw ParameterError("grid density must be nonnegative");
    cdf[i + 1] = cdf[i] + 0.5 * (a + b) / static_cast<double>(N);
  }
  if (!(cdf[N] > 0.0)) throw ParameterError("grid density has zero mass");
  for (double& c : cdf) c /= cdf[N];
  return cdf;
}

double sample_grid_density(std::span<const double> density, std::span<const double> cdf, double u) {
  const std::size_t N = density.size();
  const double target = std::min(u, 1.0);
  auto it = std::lower_bound(cdf.begin() + 1, cdf.end(), target);
  std::size_t cell = static_cast<std::size_t>(it - cdf.begin()) - 1;
  cell = std::min(cell, N - 1);
  const double h = 1.0 / static_cast<double>(N);
  const double mass = cdf[cell + 1] - cdf[cell];
  if (mass <= 0.0) return wrap_unit(static_cast<double>(cell) * h);
  // Density linear across the cell: solve the quadratic CDF for the offset.
  const double a = density[cell], b = density[(cell + 1) % N];
  const double frac = (target - cdf[cell]) / mass;
  double s;
  if (std::abs(b - a) < 1e-12 * std::max(a, b)) {
    s = frac;
  } else {
    // F(s) = (a s + (b - a) s^2 / 2) / ((a + b) / 2) = frac, s in [0, 1].
    const double A = 0.5 * (b - a), B = a, C = -frac * 0.5 * (a + b);
    const double disc = std::max(0.0, B * B - 4.0 * A * C);
    s = (2.0 * (-C)) / (B + std::sqrt(disc));
  }
  s = std::clamp(s, 0.0, 1.0);
  return wrap_unit((static_cast<double>(cell) + s) * h);
}

void validate_params(const ModelSpec& model, const SimulationParams& p) {
  validate_model(model);
  if (p.n < 2) throw ParameterError(fmt::format("n must be >= 2, got {}", p.n));
  if (p.replicas < 1) throw ParameterError("replicas must be >= 1");
  if (!(p.dt > 0.0) || !std::isfinite(p.dt)) throw ParameterError(fmt::format("dt must be positive, got {}", p.dt));
  if (!(p.horizon > 0.0) || !std::isfinite(p.horizon)) throw ParameterError("horizon must be positive");
  if (p.record_times.empty()) throw ParameterError("record_times is empty");
  double prev = -1.0;
  for (double t : p.record_times) {
    if (!(t >= 0.0) || t > p.horizon) throw ParameterError(fmt::format("record time {} outside [0, {}]", t, p.horizon));
    if (t <= prev) throw ParameterError("record_times must be strictly increasing");
    if (prev >= 0.0 && p.dt > t - prev + 1e-12) {
      throw ParameterError(fmt::format("dt {} exceeds record gap {}", p.dt, t - prev));
    }
    prev = t;
  }
  const int d = model_dim(model);
  std::visit(Overloaded{
                 [&](const DiracLaw& l) {
                   if (!l.point.empty() && l.point.size() != static_cast<std::size_t>(d)) {
                     throw ParameterError("Dirac point dimension does not match the model");
                   }
                 },
                 [&](const GaussianLaw& l) {
                   if (!(l.variance >= 0.0)) throw ParameterError("initial variance must be >= 0");
                 },
                 [&](const UniformTorusLaw&) {
                   if (!is_torus(model)) throw ParameterError("uniform initial law needs a torus model");
                 },
                 [&](const TorusDensityLaw& l) {
                   if (!is_torus(model) || d != 1) throw ParameterError("grid-density initial law needs a 1-D torus model");
                   grid_density_cdf(l.density);
                 },
             },
             p.initial);
}

std::size_t planned_steps(const SimulationParams& p) {
  std::size_t steps = 0;
  double prev = 0.0;
  for (double t : p.record_times) {
    steps += segment_steps(t - prev, p.dt);
    prev = t;
  }
  return steps;
}

ParticleEnsemble sample_initial(const ModelSpec& model, const SimulationParams& p) {
  validate_params(model, p);
  const int d = model_dim(model);
  const bool torus = is_torus(model);
  ParticleEnsemble e = ParticleEnsemble::zeros(p.replicas, p.n, d);
  e.seed = p.seed;
  std::vector<double> cdf;
  if (const auto* l = std::get_if<TorusDensityLaw>(&p.initial)) cdf = grid_density_cdf(l->density);
  for (std::size_t r = 0; r < p.replicas; ++r) {
    auto x = e.replica(r);
    for (std::size_t idx = 0; idx < x.size(); ++idx) {
      const auto c = idx % static_cast<std::size_t>(d);
      double v = std::visit(Overloaded{
                                [&](const DiracLaw& l) { return l.point.empty() ? 0.0 : l.point[c]; },
                                [&](const GaussianLaw& l) {
                                  return l.mean + std::sqrt(l.variance) * counter_normal(p.seed, r, kInitialStep, idx);
                                },
                                [&](const UniformTorusLaw&) { return counter_uniform(p.seed, r, kInitialStep, idx); },
                                [&](const TorusDensityLaw& l) {
                                  return sample_grid_density(l.density, cdf, counter_uniform(p.seed, r, kInitialStep, idx));
                                },
                            },
                            p.initial);
      x[idx] = torus ? wrap_unit(v) : v;
    }
  }
  return e;
}

std::vector<ParticleEnsemble> simulate_ensemble(const ModelSpec& model, const SimulationParams& p) {
  ParticleEnsemble init = sample_initial(model, p);
  const bool shortcut = use_shortcut(model, p.path);
  const bool torus = is_torus(model);
  const double sigma = model_sigma(model);

  std::vector<ParticleEnsemble> snaps(p.record_times.size());
  for (std::size_t s = 0; s < snaps.size(); ++s) {
    snaps[s] = ParticleEnsemble::zeros(p.replicas, p.n, init.dim);
    snaps[s].seed = p.seed;
    snaps[s].time = p.record_times[s];
  }

  auto run_replica = [&](std::size_t r) {
    std::vector<double> x(init.replica(r).begin(), init.replica(r).end());
    std::vector<double> drift(x.size()), noise(x.size());
    double t = 0.0;
    std::uint64_t step = 0;
    for (std::size_t s = 0; s < p.record_times.size(); ++s) {
      const double target = p.record_times[s];
      const std::size_t m = segment_steps(target - t, p.dt);
      const double h = m > 0 ? (target - t) / static_cast<double>(m) : 0.0;
      const double scale = sigma * std::sqrt(h);
      for (std::size_t q = 0; q < m; ++q, ++step) {
        drift_unchecked(model, x, p.n, drift, shortcut);
        counter_normal_row(p.seed, r, step, noise.data(), noise.size());
        bool finite = true;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double v = x[i] + drift[i] * h + scale * noise[i];
          finite &= std::isfinite(v);
          x[i] = torus ? wrap_unit(v) : v;
        }
        if (!finite) {
          throw NumericalError(fmt::format("non-finite state in replica {} at t = {:.17g}", r,
                                           t + static_cast<double>(q + 1) * h));
        }
      }
      t = target;
      std::copy(x.begin(), x.end(), snaps[s].replica(r).begin());
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(p.threads, static_cast<unsigned>(p.replicas)));
  if (threads == 1) {
    for (std::size_t r = 0; r < p.replicas; ++r) run_replica(r);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = w; r < p.replicas; r += threads) run_replica(r);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return snaps;
}

}  // namespace poc
