#include "poc/gaussian_oracle.hpp"

#include <cmath>

#include <fmt/format.h>

#include "poc/errors.hpp"

namespace poc {

namespace {

constexpr double kPsdTol = 1e-12;

void check_linear(const LinearGaussian& m) {
  validate_model(m);
}

// lambda(t) for lambda' = -2 r lambda + sigma^2.
double ou_eigen(double lambda0, double rate, double sigma2, double t) {
  const double e = -2.0 * rate * t;
  return lambda0 * std::exp(e) - sigma2 / (2.0 * rate) * std::expm1(e);
}

// u - log1p(u), accurate for small u.
double kl_phi(double u) {
  if (std::abs(u) < 0.05) {
    double term = u * u;
    double sum = 0.0;
    for (int j = 2; j < 24; ++j) {
      sum += (j % 2 == 0 ? 1.0 : -1.0) * term / j;
      term *= u;
    }
    return sum;
  }
  return u - std::log1p(u);
}

struct Eigenpair {
  double par;   // along the all-ones direction, multiplicity 1
  double perp;  // orthogonal complement, multiplicity k - 1
};

Eigenpair marginal_eigen(double v, double c, std::size_t k) {
  return {v + static_cast<double>(k - 1) * c, v - c};
}

void check_marginal(double v, double c, double s, std::size_t k) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (!(s > 0.0)) throw DomainError(fmt::format("reference variance must be positive, got {}", s));
  const Eigenpair e = marginal_eigen(v, c, k);
  if (!(e.par > 0.0) || (k > 1 && !(e.perp > 0.0))) {
    throw DomainError(fmt::format("k-marginal covariance not positive definite (v = {}, c = {}, k = {})", v, c, k));
  }
}

// Coefficients of the drift difference G y with G = g_d I + g_o (J - I) on the k-marginal.
Eigenpair drift_difference_eigen(const LinearGaussian& model, std::size_t n, std::size_t k, double v, double c) {
  const double b = model.b;
  const double nm1 = static_cast<double>(n - 1);
  const double w = static_cast<double>(n - k) / nm1;
  const double beta = c / (v + static_cast<double>(k - 1) * c);
  const double g_d = -b * static_cast<double>(k - 1) / nm1 + w * b * (beta - 1.0) + b;
  const double g_o = b / nm1 + w * b * beta;
  return {g_d + static_cast<double>(k - 1) * g_o, g_d - g_o};
}

}  // namespace

ExchangeableGaussianFlow evolve_particle_covariance(const LinearGaussian& model, std::size_t n,
                                                    const ExchangeableGaussianFlow& initial, double t) {
  check_linear(model);
  if (n < 2) throw ParameterError("n must be >= 2");
  if (!(t >= 0.0)) throw ParameterError(fmt::format("t must be >= 0, got {}", t));
  const double nn = static_cast<double>(n);
  const double lp0 = initial.v + (nn - 1.0) * initial.c;
  const double lq0 = initial.v - initial.c;
  if (lp0 < -kPsdTol || lq0 < -kPsdTol) {
    throw DomainError(fmt::format("initial (v, c) = ({}, {}) is not PSD for n = {}", initial.v, initial.c, n));
  }
  if (t == 0.0) {
    ExchangeableGaussianFlow out = initial;
    out.n = n;
    return out;
  }
  const double s2 = model.sigma * model.sigma;
  const double kappa = model.a + model.b * nn / (nn - 1.0);
  const double lp = ou_eigen(lp0, model.a, s2, t);
  const double lq = ou_eigen(lq0, kappa, s2, t);
  if (lp < -kPsdTol || lq < -kPsdTol) {
    throw InternalConsistencyError(fmt::format("covariance flow left the PSD cone at t = {}", t));
  }
  ExchangeableGaussianFlow out;
  out.n = n;
  out.m = initial.m * std::exp(-model.a * t);
  out.v = (lp + (nn - 1.0) * lq) / nn;
  out.c = (lp - lq) / nn;
  return out;
}

MeanFieldGaussianFlow evolve_meanfield_variance(const LinearGaussian& model, const MeanFieldGaussianFlow& initial,
                                                double t) {
  check_linear(model);
  if (!(t >= 0.0)) throw ParameterError(fmt::format("t must be >= 0, got {}", t));
  if (!(initial.s >= 0.0)) throw ParameterError("initial variance must be >= 0");
  MeanFieldGaussianFlow out;
  out.mean = initial.mean * std::exp(-model.a * t);
  out.s = ou_eigen(initial.s, model.a + model.b, model.sigma * model.sigma, t);
  return out;
}

double marginal_relative_entropy(double v, double c, double s, std::size_t k, double mean_gap) {
  check_marginal(v, c, s, k);
  const Eigenpair e = marginal_eigen(v, c, k);
  double h = kl_phi((e.par - s) / s);
  if (k > 1) h += static_cast<double>(k - 1) * kl_phi((e.perp - s) / s);
  return 0.5 * h + static_cast<double>(k) * mean_gap * mean_gap / (2.0 * s);
}

double marginal_fisher_information(double v, double c, double s, std::size_t k, double mean_gap) {
  check_marginal(v, c, s, k);
  const Eigenpair e = marginal_eigen(v, c, k);
  auto term = [s](double lambda) { return (s - lambda) * (s - lambda) / (lambda * s * s); };
  double i = term(e.par);
  if (k > 1) i += static_cast<double>(k - 1) * term(e.perp);
  return i + static_cast<double>(k) * mean_gap * mean_gap / (s * s);
}

StationaryState stationary_state(const LinearGaussian& model, std::size_t n) {
  check_linear(model);
  if (n < 2) throw ParameterError("n must be >= 2");
  const double nn = static_cast<double>(n);
  const double s2 = model.sigma * model.sigma;
  const double kappa = model.a + model.b * nn / (nn - 1.0);
  if (!(kappa > 0.0)) throw InternalConsistencyError("singular stationary system");
  const double lp = s2 / (2.0 * model.a);
  const double lq = s2 / (2.0 * kappa);
  return {(lp + (nn - 1.0) * lq) / nn, (lp - lq) / nn, s2 / (2.0 * (model.a + model.b))};
}

double bbgky_conditional_drift(double v, double c, std::size_t n, std::size_t k, double b_strength,
                               std::span<const double> x) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (k >= n) throw DomainError(fmt::format("conditional drift needs k < n (k = {}, n = {})", k, n));
  if (x.size() != k) throw InvalidInput(fmt::format("x must have {} entries", k));
  const double denom = v + static_cast<double>(k - 1) * c;
  if (!(denom > 0.0)) throw DomainError("v + (k - 1) c must be positive");
  const double beta = c / denom;
  const double nm1 = static_cast<double>(n - 1);
  double pair = 0.0, total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    total += x[j];
    if (j > 0) pair += x[j] - x[0];
  }
  return b_strength / nm1 * pair + static_cast<double>(n - k) / nm1 * b_strength * (beta * total - x[0]);
}

double dissipation_rhs(const LinearGaussian& model, std::size_t n, std::size_t k, const ExchangeableGaussianFlow& pn,
                       const MeanFieldGaussianFlow& mu) {
  check_marginal(pn.v, pn.c, mu.s, k);
  if (k > n) throw DomainError("k must be <= n");
  const Eigenpair lam = marginal_eigen(pn.v, pn.c, k);
  const Eigenpair g = drift_difference_eigen(model, n, k, pn.v, pn.c);
  const double s = mu.s;
  const double half_s2 = 0.5 * model.sigma * model.sigma;
  // grad log density ratio = Q y + (delta / s) 1 with Q = I / s - Sigma^{-1}.
  auto dir = [&](double l, double ge) {
    const double q = 1.0 / s - 1.0 / l;
    return ge * q * l - half_s2 * q * q * l;
  };
  double rhs = dir(lam.par, g.par);
  if (k > 1) rhs += static_cast<double>(k - 1) * dir(lam.perp, g.perp);
  const double delta = pn.m - mu.mean;
  const double kk = static_cast<double>(k);
  rhs += kk * model.b * delta * delta / s - half_s2 * kk * delta * delta / (s * s);
  return rhs;
}

double drift_difference_energy(const LinearGaussian& model, std::size_t n, std::size_t k,
                               const ExchangeableGaussianFlow& pn, const MeanFieldGaussianFlow& mu) {
  if (k < 1 || k > n) throw DomainError("k must be in 1..n");
  const Eigenpair lam = marginal_eigen(pn.v, pn.c, k);
  const Eigenpair g = drift_difference_eigen(model, n, k, pn.v, pn.c);
  double e = g.par * g.par * lam.par;
  if (k > 1) e += static_cast<double>(k - 1) * g.perp * g.perp * lam.perp;
  const double delta = pn.m - mu.mean;
  return e + static_cast<double>(k) * model.b * model.b * delta * delta;
}

double linear_interaction_moment(const LinearGaussian& model, const ExchangeableGaussianFlow& pn,
                                 const MeanFieldGaussianFlow& mu) {
  const double delta = pn.m - mu.mean;
  return model.b * model.b * (pn.v + delta * delta);
}

DissipationCheck entropy_dissipation_check(const LinearGaussian& model, std::size_t n, std::size_t k, double t,
                                           double dt, const GaussianStart& start) {
  check_linear(model);
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  if (k < 1 || k > n) throw DomainError("k must be in 1..n");
  const bool degenerate = start.s0 == 0.0 || start.v0 - start.c0 == 0.0;
  if (degenerate && !(t - dt > 0.0)) {
    throw DomainError("degenerate initial covariance: need t - dt > 0");
  }
  if (!(t - dt >= 0.0)) throw DomainError("need t >= dt");
  const ExchangeableGaussianFlow p0{start.m0, start.v0, start.c0, n};
  const MeanFieldGaussianFlow mu0{start.m0, start.s0};
  auto entropy_at = [&](double time) {
    const auto pn = evolve_particle_covariance(model, n, p0, time);
    const auto mu = evolve_meanfield_variance(model, mu0, time);
    return marginal_relative_entropy(pn.v, pn.c, mu.s, k, pn.m - mu.mean);
  };
  DissipationCheck out;
  out.lhs = (entropy_at(t + dt) - entropy_at(t - dt)) / (2.0 * dt);
  out.rhs = dissipation_rhs(model, n, k, evolve_particle_covariance(model, n, p0, t),
                            evolve_meanfield_variance(model, mu0, t));
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

}  // namespace poc
