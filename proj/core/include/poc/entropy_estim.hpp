#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "poc/dynamics.hpp"
#include "poc/errors.hpp"
#include "poc/meanfield_pde.hpp"
#include "poc/models.hpp"

namespace poc {

enum class EstimatorMethod { Exact, GaussianMoment, Histogram1D, Histogram2D };

struct EntropyReport {
  std::size_t k = 1;
  std::size_t n = 0;
  double t = 0.0;
  double H = 0.0;
  EstimatorMethod method = EstimatorMethod::Exact;
  std::size_t bins = 0;
  double std_error = 0.0;
  bool infinite = false;
};

// "exact", "gaussian_moment", "histogram1d(64)", "histogram2d(64)".
std::string method_label(const EntropyReport& report);

// Raised when the fitted exchangeable covariance is not positive definite.
class EstimationFailure : public NumericalError {
 public:
  EstimationFailure(const std::string& what, double v_hat, double c_hat)
      : NumericalError(what), v_hat_(v_hat), c_hat_(c_hat) {}
  double v_hat() const { return v_hat_; }
  double c_hat() const { return c_hat_; }

 private:
  double v_hat_;
  double c_hat_;
};

struct GaussianReference {
  double mean = 0.0;
  double s = 1.0;
};

struct ExchangeableMoments {
  double mean = 0.0;
  double v = 0.0;
  double c = 0.0;
};

// Grand mean, per-particle variance and mean pairwise covariance over all replicas.
ExchangeableMoments fit_exchangeable_moments(const ParticleEnsemble& ensemble);

// Plug-in Gaussian KL of the fitted k-marginal; stderr by replica-level jackknife.
EntropyReport gaussian_moment_entropy(const ParticleEnsemble& ensemble, std::size_t k, const GaussianReference& ref);

// Plug-in histogram KL against grid cell masses, smoothed and Miller-Madow corrected.
EntropyReport histogram_entropy_1d(std::span<const double> samples, const DensityGrid& reference, std::size_t bins);

// Same for pairs (x_i, y_i) against the product reference, bins x bins cells.
EntropyReport histogram_entropy_2d(std::span<const double> xs, std::span<const double> ys,
                                   const DensityGrid& reference, std::size_t bins = 64);

using MeanFieldReference = std::variant<GaussianReference, DensityGrid>;

struct MEstimate {
  double value = 0.0;
  std::size_t argmax = 0;
  std::vector<double> per_snapshot;
  std::vector<double> per_snapshot_stderr;
  // The supremum over all times is truncated to the simulated horizon.
  bool horizon_truncated = true;
};

// Monte Carlo estimate of sup_t E|b(x1, x2) - <mu_t, b(x1, .)>|^2 over the recorded snapshots.
MEstimate estimate_M(const ModelSpec& model, std::span<const ParticleEnsemble> snapshots,
                     std::span<const MeanFieldReference> references);

double w2_bound_from_entropy(double H, double eta, std::size_t k = 1);
double tv_bound_from_entropy(double H);

}  // namespace poc
