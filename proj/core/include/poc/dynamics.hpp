#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "poc/models.hpp"

namespace poc {

// R replicas of n particles in d dimensions, stored replica-major then particle then coordinate.
struct ParticleEnsemble {
  std::size_t replicas = 0;
  std::size_t n = 0;
  int dim = 1;
  double time = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> positions;

  static ParticleEnsemble zeros(std::size_t replicas, std::size_t n, int dim);

  std::size_t replica_size() const { return n * static_cast<std::size_t>(dim); }
  std::span<const double> replica(std::size_t r) const {
    return {positions.data() + r * replica_size(), replica_size()};
  }
  std::span<double> replica(std::size_t r) { return {positions.data() + r * replica_size(), replica_size()}; }
  double at(std::size_t r, std::size_t i, int c = 0) const {
    return positions[r * replica_size() + i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)];
  }
  double& at(std::size_t r, std::size_t i, int c = 0) {
    return positions[r * replica_size() + i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)];
  }
};

// Pairwise is the O(n^2) reference; Shortcut uses O(n) sums where the model allows it.
enum class DriftPath { Pairwise, Shortcut, Auto };

bool has_drift_shortcut(const ModelSpec& model);

// positions: n x d for one replica; out has the same shape.
void drift_field(const ModelSpec& model, double t, std::span<const double> positions, std::size_t n,
                 std::span<double> out, DriftPath path = DriftPath::Pairwise);
std::vector<double> drift_field(const ModelSpec& model, double t, std::span<const double> positions, std::size_t n,
                                DriftPath path = DriftPath::Pairwise);

// Maps each coordinate into [0, 1).
double wrap_unit(double x);

// x <- x + drift dt + sigma sqrt(dt) noise, then wrap on the torus. noise has the ensemble's shape.
ParticleEnsemble em_step(const ModelSpec& model, const ParticleEnsemble& state, double dt,
                         std::span<const double> gaussian_noise, DriftPath path = DriftPath::Auto);

struct DiracLaw {
  std::vector<double> point;  // empty means the origin
};
struct GaussianLaw {
  double mean = 0.0;
  double variance = 1.0;
};
struct UniformTorusLaw {};
// Density values on the uniform grid i/N of [0, 1); d = 1 only.
struct TorusDensityLaw {
  std::vector<double> density;
};
using InitialLaw = std::variant<DiracLaw, GaussianLaw, UniformTorusLaw, TorusDensityLaw>;

struct SimulationParams {
  std::size_t n = 2;
  double dt = 0.01;
  double horizon = 1.0;
  std::vector<double> record_times;
  std::size_t replicas = 1;
  std::uint64_t seed = 0;
  InitialLaw initial = DiracLaw{};
  unsigned threads = 1;
  DriftPath path = DriftPath::Auto;
};

void validate_params(const ModelSpec& model, const SimulationParams& params);
ParticleEnsemble sample_initial(const ModelSpec& model, const SimulationParams& params);

// Number of Euler steps the run will take, used for budget checks.
std::size_t planned_steps(const SimulationParams& params);

std::vector<ParticleEnsemble> simulate_ensemble(const ModelSpec& model, const SimulationParams& params);

// Inverse-CDF sample from a grid density with u in (0, 1].
double sample_grid_density(std::span<const double> density, std::span<const double> cdf, double u);
std::vector<double> grid_density_cdf(std::span<const double> density);

}  // namespace poc
