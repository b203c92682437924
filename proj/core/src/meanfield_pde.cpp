#include "poc/meanfield_pde.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstdio>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <fmt/format.h>

#include "poc/errors.hpp"

namespace poc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kClipTol = 1e-14;

// Planner calls are not thread-safe in FFTW; execution with new-array calls is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

bool is_power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

using Complex = std::complex<double>;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

class Spectral {
 public:
  explicit Spectral(std::size_t n) : n_(n), modes_(n / 2 + 1) {
    real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * modes_)));
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_.get(), spec_.get(), FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_.get(), real_.get(), FFTW_ESTIMATE);
    if (!fwd_ || !bwd_) throw NumericalError("FFTW plan creation failed");
  }
  ~Spectral() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  std::size_t modes() const { return modes_; }

  // Unnormalized forward transform.
  void forward(std::span<const double> in, std::vector<Complex>& out) {
    std::copy(in.begin(), in.end(), real_.get());
    fftw_execute(fwd_);
    out.resize(modes_);
    for (std::size_t k = 0; k < modes_; ++k) out[k] = {spec_.get()[k][0], spec_.get()[k][1]};
  }
  // Inverse transform including the 1/N factor.
  void backward(const std::vector<Complex>& in, std::vector<double>& out) {
    for (std::size_t k = 0; k < modes_; ++k) {
      spec_.get()[k][0] = in[k].real();
      spec_.get()[k][1] = in[k].imag();
    }
    fftw_execute(bwd_);
    out.resize(n_);
    const double inv = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = real_.get()[i] * inv;
  }

 private:
  std::size_t n_;
  std::size_t modes_;
  std::unique_ptr<double, FftwFree> real_;
  std::unique_ptr<fftw_complex, FftwFree> spec_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

class Solver {
 public:
  Solver(std::span<const double> kernel, double sigma, std::size_t n)
      : n_(n), fft_(n), diffusion_(0.5 * sigma * sigma) {
    fft_.forward(kernel, kernel_hat_);
    for (auto& c : kernel_hat_) c /= static_cast<double>(n);
    cutoff_ = n / 3;
  }

  // Advection term -d/dx (mu (K * mu)) in spectral form.
  void nonlinear(const std::vector<Complex>& mu_hat, std::vector<Complex>& out) {
    const std::size_t m = fft_.modes();
    work_hat_.resize(m);
    for (std::size_t k = 0; k < m; ++k) work_hat_[k] = kernel_hat_[k] * mu_hat[k];
    fft_.backward(work_hat_, velocity_);
    fft_.backward(mu_hat, density_);
    for (std::size_t i = 0; i < n_; ++i) flux_[i] = density_[i] * velocity_[i];
    fft_.forward(flux_, out);
    for (std::size_t k = 0; k < m; ++k) {
      if (k > cutoff_ || k == n_ / 2) {
        out[k] = 0.0;
      } else {
        out[k] *= Complex(0.0, -kTwoPi * static_cast<double>(k));
      }
    }
  }

  void step(std::vector<Complex>& mu_hat, double h) {
    const std::size_t m = fft_.modes();
    if (h != cached_h_) {
      e_full_.resize(m);
      e_half_.resize(m);
      for (std::size_t k = 0; k < m; ++k) {
        const double lk = -diffusion_ * (kTwoPi * k) * (kTwoPi * k);
        e_full_[k] = std::exp(lk * h);
        e_half_[k] = std::exp(lk * h / 2.0);
      }
      cached_h_ = h;
    }
    auto& a = ka_;
    auto& b = kb_;
    auto& c = kc_;
    auto& d = kd_;
    tmp_.resize(m);
    nonlinear(mu_hat, a);
    for (std::size_t k = 0; k < m; ++k) tmp_[k] = e_half_[k] * (mu_hat[k] + 0.5 * h * a[k]);
    nonlinear(tmp_, b);
    for (std::size_t k = 0; k < m; ++k) tmp_[k] = e_half_[k] * mu_hat[k] + 0.5 * h * b[k];
    nonlinear(tmp_, c);
    for (std::size_t k = 0; k < m; ++k) tmp_[k] = e_full_[k] * mu_hat[k] + h * e_half_[k] * c[k];
    nonlinear(tmp_, d);
    for (std::size_t k = 0; k < m; ++k) {
      mu_hat[k] = e_full_[k] * mu_hat[k] +
                  h / 6.0 * (e_full_[k] * a[k] + 2.0 * e_half_[k] * (b[k] + c[k]) + d[k]);
    }
  }

  Spectral& fft() { return fft_; }

 private:
  std::size_t n_;
  Spectral fft_;
  double diffusion_;
  std::size_t cutoff_;
  std::vector<Complex> kernel_hat_, work_hat_, tmp_, ka_, kb_, kc_, kd_, e_full_, e_half_;
  std::vector<double> velocity_, density_, flux_ = std::vector<double>(n_);
  double cached_h_ = -1.0;
};

}  // namespace

double DensityGrid::mass() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double DensityGrid::min() const { return *std::min_element(values.begin(), values.end()); }
double DensityGrid::max() const { return *std::max_element(values.begin(), values.end()); }

DensityGrid uniform_density(std::size_t grid_size) {
  if (!is_power_of_two(grid_size)) throw ParameterError(fmt::format("grid size {} is not a power of two", grid_size));
  return DensityGrid{std::vector<double>(grid_size, 1.0), 0.0};
}

DensityGrid density_from_function(std::size_t grid_size, const std::function<double(double)>& f, bool normalize) {
  if (!is_power_of_two(grid_size)) throw ParameterError(fmt::format("grid size {} is not a power of two", grid_size));
  DensityGrid g;
  g.values.resize(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) g.values[i] = f(g.x(i));
  if (normalize) {
    const double m = g.mass();
    if (!(m > 0.0)) throw DomainError("density has nonpositive mass");
    for (double& v : g.values) v /= m;
  }
  return g;
}

std::vector<double> sample_kernel(std::size_t grid_size, const std::function<double(double)>& kernel) {
  std::vector<double> k(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) k[i] = kernel(static_cast<double>(i) / static_cast<double>(grid_size));
  return k;
}

void validate_density(const DensityGrid& mu, double mass_tol) {
  if (!is_power_of_two(mu.size())) throw DomainError(fmt::format("grid size {} is not a power of two", mu.size()));
  for (double v : mu.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("density values must be finite and nonnegative");
  }
  const double m = mu.mass();
  if (std::abs(m - 1.0) > mass_tol) throw DomainError(fmt::format("density mass {:.17g} differs from 1", m));
}

std::vector<DensityGrid> solve_mv_pde(std::span<const double> kernel_samples, double sigma, const DensityGrid& mu0,
                                      double dt, double horizon, std::span<const double> record_times) {
  validate_density(mu0);
  const std::size_t n = mu0.size();
  if (kernel_samples.size() != n) throw ParameterError("kernel samples must match the density grid");
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  double prev = -1.0;
  for (double t : record_times) {
    if (t < 0.0 || t > horizon || t <= prev) throw ParameterError("record times must be increasing within [0, T]");
    prev = t;
  }

  Solver solver(kernel_samples, sigma, n);
  std::vector<Complex> mu_hat;
  solver.fft().forward(mu0.values, mu_hat);
  const double blowup = 1e3 * std::max(1.0, mu0.max());

  std::vector<DensityGrid> out;
  out.reserve(record_times.size());
  double t = mu0.time;
  std::vector<double> values;
  for (double target : record_times) {
    const double gap = target - t;
    const std::size_t steps = gap > 0.0 ? static_cast<std::size_t>(std::ceil(gap / dt - 1e-9)) : 0;
    const double h = steps > 0 ? gap / static_cast<double>(steps) : 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      solver.step(mu_hat, h);
      if (!std::isfinite(mu_hat[0].real())) {
        throw StepSizeError(fmt::format("PDE solution blew up near t = {}; reduce dt (now {})", t + (s + 1) * h, dt));
      }
    }
    t = target;
    solver.fft().backward(mu_hat, values);
    DensityGrid g{values, target};
    for (double& v : g.values) {
      if (!std::isfinite(v) || std::abs(v) > blowup) {
        throw StepSizeError(fmt::format("PDE instability at t = {} (|mu| > {}); reduce dt (now {})", target, blowup, dt));
      }
      if (v < 0.0) {
        if (v < -kClipTol) {
          throw NumericalError(fmt::format("density went negative ({:.3e}) at t = {}; refine the grid or dt", v, target));
        }
        v = 0.0;
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

double entropy_vs_uniform(const DensityGrid& mu) {
  if (mu.size() == 0) throw DomainError("empty density");
  double s = 0.0;
  for (double v : mu.values) {
    if (v < 0.0) throw DomainError("negative density value");
    s += v * std::log(std::max(v, 1e-300)) - v + 1.0;
  }
  return std::max(0.0, s / static_cast<double>(mu.size()));
}

DecayFit decay_rate_fit(std::span<const double> times, std::span<const double> entropies) {
  if (times.size() != entropies.size()) throw ParameterError("times and entropies differ in length");
  if (times.size() < 5) throw DomainError("decay fit needs at least 5 points");
  const double n = static_cast<double>(times.size());
  double mt = 0.0, my = 0.0;
  std::vector<double> y(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(entropies[i] > 0.0)) throw DomainError(fmt::format("entropy sample {} is not positive", i));
    y[i] = std::log(entropies[i]);
    mt += times[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    sxx += (times[i] - mt) * (times[i] - mt);
    sxy += (times[i] - mt) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("decay fit needs distinct times");
  const double slope = sxy / sxx;
  DecayFit fit;
  fit.rate = -slope;
  fit.intercept = my - slope * mt;
  double rss = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double r = y[i] - (fit.intercept + slope * times[i]);
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / n);
  return fit;
}

double best_shift_sup_distance(const DensityGrid& a, const DensityGrid& b) {
  if (a.size() != b.size() || a.size() == 0) throw ParameterError("grids differ in size");
  const std::size_t n = a.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < n; ++s) {
    double d = 0.0;
    for (std::size_t i = 0; i < n && d < best; ++i) d = std::max(d, std::abs(a.values[i] - b.values[(i + s) % n]));
    best = std::min(best, d);
  }
  return best;
}

void write_density_csv(const std::filesystem::path& path, const DensityGrid& mu) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  std::fputs("x,mu\n", f);
  for (std::size_t i = 0; i < mu.size(); ++i) std::fprintf(f, "%.17g,%.17g\n", mu.x(i), mu.values[i]);
  if (std::fclose(f) != 0) throw IoError(fmt::format("failed writing {}", path.string()));
}

}  // namespace poc
