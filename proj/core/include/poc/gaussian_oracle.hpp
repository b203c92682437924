#pragma once

#include <cstddef>
#include <span>

#include "poc/models.hpp"

namespace poc {

// Exchangeable Gaussian law of n particles: common mean m, variance v, pairwise covariance c.
struct ExchangeableGaussianFlow {
  double m = 0.0;
  double v = 0.0;
  double c = 0.0;
  std::size_t n = 2;
};

struct MeanFieldGaussianFlow {
  double mean = 0.0;
  double s = 0.0;
};

// Closed-form flow of the linear model via the two covariance eigenvalues
// v - c (multiplicity n - 1) and v + (n - 1) c.
ExchangeableGaussianFlow evolve_particle_covariance(const LinearGaussian& model, std::size_t n,
                                                    const ExchangeableGaussianFlow& initial, double t);
MeanFieldGaussianFlow evolve_meanfield_variance(const LinearGaussian& model, const MeanFieldGaussianFlow& initial,
                                                double t);

// KL of the k-marginal N(m 1, Sigma_k(v, c)) against N(mbar, s)^{k}; mean_gap = m - mbar.
double marginal_relative_entropy(double v, double c, double s, std::size_t k, double mean_gap = 0.0);
double marginal_fisher_information(double v, double c, double s, std::size_t k, double mean_gap = 0.0);

struct StationaryState {
  double v = 0.0;
  double c = 0.0;
  double s = 0.0;
};
StationaryState stationary_state(const LinearGaussian& model, std::size_t n);

// Drift of particle 1 in the k-marginal hierarchy for a centered exchangeable state.
double bbgky_conditional_drift(double v, double c, std::size_t n, std::size_t k, double b_strength,
                               std::span<const double> x);

struct DissipationCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};

struct GaussianStart {
  double m0 = 0.0;
  double v0 = 0.0;
  double c0 = 0.0;
  double s0 = 0.0;
};

// lhs: central difference of H^k; rhs: closed-form right side of the entropy dissipation identity.
DissipationCheck entropy_dissipation_check(const LinearGaussian& model, std::size_t n, std::size_t k, double t,
                                           double dt, const GaussianStart& start = {});

// Closed-form right side alone, evaluated on an explicit state.
double dissipation_rhs(const LinearGaussian& model, std::size_t n, std::size_t k, const ExchangeableGaussianFlow& pn,
                       const MeanFieldGaussianFlow& mu);

// Drift-difference term sum_i E|bhat_i - <mu, b(x_i, .)>|^2 of the hierarchy, for Gronwall checks.
double drift_difference_energy(const LinearGaussian& model, std::size_t n, std::size_t k,
                               const ExchangeableGaussianFlow& pn, const MeanFieldGaussianFlow& mu);

// Interaction second moment E|b(x1, x2) - <mu, b(x1, .)>|^2 = b^2 (v + (m - mbar)^2).
double linear_interaction_moment(const LinearGaussian& model, const ExchangeableGaussianFlow& pn,
                                 const MeanFieldGaussianFlow& mu);

}  // namespace poc
