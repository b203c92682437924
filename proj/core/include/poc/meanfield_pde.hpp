#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace poc {

// Density sampled at x_i = i / N on [0, 1).
struct DensityGrid {
  std::vector<double> values;
  double time = 0.0;

  std::size_t size() const { return values.size(); }
  double x(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(values.size()); }
  // Trapezoid rule on the periodic grid.
  double mass() const;
  double min() const;
  double max() const;
};

DensityGrid uniform_density(std::size_t grid_size);
DensityGrid density_from_function(std::size_t grid_size, const std::function<double(double)>& f, bool normalize = true);
std::vector<double> sample_kernel(std::size_t grid_size, const std::function<double(double)>& kernel);

// Throws DomainError unless the grid is a power of two with nonnegative values and unit mass.
void validate_density(const DensityGrid& mu, double mass_tol = 1e-10);

// d mu/dt = -d/dx(mu (K * mu)) + (sigma^2 / 2) d^2 mu / dx^2 on the unit torus.
// Integrating-factor RK4: diffusion exact in Fourier space, 2/3-dealiased advection.
std::vector<DensityGrid> solve_mv_pde(std::span<const double> kernel_samples, double sigma, const DensityGrid& mu0,
                                      double dt, double horizon, std::span<const double> record_times);

// H(mu | uniform) by the trapezoid rule on mu log mu - mu + 1 (pointwise nonnegative).
double entropy_vs_uniform(const DensityGrid& mu);

struct DecayFit {
  double rate = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
};
// Least-squares fit of log H against t; rate = -slope.
DecayFit decay_rate_fit(std::span<const double> times, std::span<const double> entropies);

// Sup-norm distance minimized over circular shifts of b.
double best_shift_sup_distance(const DensityGrid& a, const DensityGrid& b);

void write_density_csv(const std::filesystem::path& path, const DensityGrid& mu);

}  // namespace poc
