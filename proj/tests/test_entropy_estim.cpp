#include <cmath>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "poc/errors.hpp"
#include "poc/entropy_estim.hpp"
#include "poc/gaussian_oracle.hpp"

using namespace poc;
using oracle::kPi;

namespace {

// R replicas of an exchangeable Gaussian vector with variance v and covariance c >= 0.
ParticleEnsemble exchangeable_sample(std::size_t R, std::size_t n, double mean, double v, double c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  auto e = ParticleEnsemble::zeros(R, n, 1);
  const double a = std::sqrt(c), b = std::sqrt(v - c);
  for (std::size_t r = 0; r < R; ++r) {
    const double w = N(rng);
    for (std::size_t i = 0; i < n; ++i) e.at(r, i) = mean + a * w + b * N(rng);
  }
  return e;
}

std::vector<double> uniform_samples(std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x(m);
  for (double& v : x) v = U(rng);
  return x;
}

// Rejection samples from 1 + amp cos(2 pi x).
std::vector<double> cosine_samples(std::size_t m, double amp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x;
  x.reserve(m);
  while (x.size() < m) {
    const double y = U(rng);
    if (U(rng) * (1.0 + std::fabs(amp)) <= 1.0 + amp * std::cos(2.0 * kPi * y)) x.push_back(y);
  }
  return x;
}

}  // namespace

TEST(GaussianMoment, NullCase) {
  const double s = 1.0 / 3.0;
  const auto e = exchangeable_sample(2000, 10, 0.0, s, 0.0, 21);
  for (std::size_t k : {1u, 3u}) {
    const auto rep = gaussian_moment_entropy(e, k, {0.0, s});
    EXPECT_GE(rep.H, 0.0);
    EXPECT_LE(rep.H, 2.0 * rep.std_error) << k;
  }
}

TEST(GaussianMoment, StationaryLawMatchesOracle) {
  const auto st = stationary_state(LinearGaussian{1.0, 0.5, 1.0}, 10);
  const auto e = exchangeable_sample(100000, 10, 0.0, st.v, st.c, 22);
  const auto rep = gaussian_moment_entropy(e, 1, {0.0, st.s});
  const double exact = oracle::kl_scalar(st.v, st.s);
  EXPECT_NEAR(rep.H, exact, 3.0 * rep.std_error);
  EXPECT_EQ(method_label(rep), "gaussian_moment");
}

TEST(GaussianMoment, FullVectorMatchesClosedFormOfFittedMoments) {
  const auto e = exchangeable_sample(300, 6, 0.2, 0.5, 0.1, 23);
  const auto m = fit_exchangeable_moments(e);
  const auto rep = gaussian_moment_entropy(e, 6, {0.0, 0.4});
  const double direct = oracle::exchangeable_kl(m.v, m.c, 0.4, 6) + 6.0 * m.mean * m.mean / (2.0 * 0.4);
  EXPECT_NEAR(rep.H, direct, 1e-10);
}

TEST(GaussianMoment, FitRecoversMomentsOfKnownEnsemble) {
  auto e = ParticleEnsemble::zeros(2, 2, 1);
  e.positions = {1.0, 3.0, -1.0, 1.0};
  const auto m = fit_exchangeable_moments(e);
  // Grand mean 1; deviations (0, 2, -2, 0): v = 8 / 4, c = (0 * 2 + (-2) * 0) / 2.
  EXPECT_DOUBLE_EQ(m.mean, 1.0);
  EXPECT_DOUBLE_EQ(m.v, 2.0);
  EXPECT_DOUBLE_EQ(m.c, 0.0);
}

TEST(GaussianMoment, Errors) {
  const auto small = exchangeable_sample(99, 4, 0.0, 1.0, 0.0, 1);
  EXPECT_THROW(gaussian_moment_entropy(small, 1, {0.0, 1.0}), ParameterError);
  auto degenerate = exchangeable_sample(200, 4, 0.0, 1.0, 1.0, 2);
  try {
    gaussian_moment_entropy(degenerate, 2, {0.0, 1.0});
    FAIL() << "expected EstimationFailure";
  } catch (const EstimationFailure& f) {
    EXPECT_NEAR(f.v_hat(), f.c_hat(), 1e-12);
  }
}

TEST(GaussianMoment, StderrShrinksLikeRootR) {
  const auto a = exchangeable_sample(2000, 10, 0.0, 0.6, 0.05, 31);
  const auto b = exchangeable_sample(4000, 10, 0.0, 0.6, 0.05, 32);
  const double se_a = gaussian_moment_entropy(a, 2, {0.0, 1.0 / 3.0}).std_error;
  const double se_b = gaussian_moment_entropy(b, 2, {0.0, 1.0 / 3.0}).std_error;
  EXPECT_NEAR(se_a / se_b, std::sqrt(2.0), 0.2 * std::sqrt(2.0));
}

TEST(Histogram1D, NullAgainstReference) {
  const auto x = uniform_samples(6400, 41);
  const auto rep = histogram_entropy_1d(x, uniform_density(256), 64);
  EXPECT_GE(rep.H, 0.0);
  EXPECT_LE(rep.H, 2.0 * rep.std_error);
  EXPECT_EQ(method_label(rep), "histogram1d(64)");
}

TEST(Histogram1D, CosineSamplesApproachQuadratureValue) {
  const std::size_t bins = 64;
  const auto x = cosine_samples(2000000, 0.5, 42);
  const auto rep = histogram_entropy_1d(x, uniform_density(1024), bins);
  // Binned target: exact cell masses of the cosine density against uniform cells.
  double binned = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / bins, hi = static_cast<double>(b + 1) / bins;
    const double p = (hi - lo) + 0.5 / (2.0 * kPi) * (std::sin(2.0 * kPi * hi) - std::sin(2.0 * kPi * lo));
    binned += p * std::log(p * bins);
  }
  EXPECT_NEAR(rep.H, binned, 3.0 * rep.std_error + 1e-5);
  EXPECT_NEAR(binned, 0.0646381, 1e-3);
}

TEST(Histogram1D, AbsoluteContinuityFailureIsFlagged) {
  auto ref = density_from_function(256, [](double x) { return x < 0.5 ? 2.0 : 0.0; }, false);
  ref.values[0] = 2.0;
  const auto x = uniform_samples(3200, 43);
  const auto rep = histogram_entropy_1d(x, ref, 64);
  EXPECT_TRUE(rep.infinite);
  EXPECT_TRUE(std::isinf(rep.H));
}

TEST(Histogram1D, InputChecks) {
  const auto x = uniform_samples(3199, 44);
  EXPECT_THROW(histogram_entropy_1d(x, uniform_density(256), 64), ParameterError);
  const auto y = uniform_samples(5000, 45);
  EXPECT_THROW(histogram_entropy_1d(y, uniform_density(256), 48), ParameterError);
}

TEST(Histogram1D, NullCalibration) {
  int inside = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto x = uniform_samples(3200, 1000 + trial);
    const auto rep = histogram_entropy_1d(x, uniform_density(256), 64);
    EXPECT_GE(rep.H, 0.0);
    inside += std::fabs(rep.H) <= 3.0 * rep.std_error ? 1 : 0;
  }
  EXPECT_GE(inside, 990);
}

TEST(Histogram2D, IndependentPairsAgainstProductReference) {
  const auto x = uniform_samples(10 * 16 * 16 * 4, 46);
  const auto y = uniform_samples(x.size(), 47);
  const auto rep = histogram_entropy_2d(x, y, uniform_density(256), 16);
  EXPECT_EQ(rep.k, 2u);
  EXPECT_LE(rep.H, 3.0 * rep.std_error);
  // Perfectly correlated pairs: only diagonal cells are occupied. Smoothed plug-in value by hand.
  const auto dep = histogram_entropy_2d(x, x, uniform_density(256), 16);
  std::vector<double> counts(16, 0.0);
  for (double v : x) counts[static_cast<std::size_t>(v * 16.0)] += 1.0;
  const double N = static_cast<double>(x.size()), denom = N + 128.0;
  double expect = 240.0 * (0.5 / denom) * std::log(0.5 / denom * 256.0);
  for (double c : counts) expect += (c + 0.5) / denom * std::log((c + 0.5) / denom * 256.0);
  expect -= 255.0 / (2.0 * N);
  EXPECT_NEAR(dep.H, expect, 1e-12);
  EXPECT_GT(dep.H, 0.95 * std::log(16.0));
  const std::vector<double> few(100, 0.5);
  EXPECT_THROW(histogram_entropy_2d(few, few, uniform_density(256), 16), ParameterError);
}

TEST(EstimateM, NoInteractionGivesZero) {
  const LinearGaussian m{1.0, 0.0, 1.0};
  std::vector<ParticleEnsemble> snaps{exchangeable_sample(500, 4, 0.0, 0.5, 0.0, 50),
                                      exchangeable_sample(500, 4, 0.0, 0.5, 0.0, 51)};
  const std::vector<MeanFieldReference> refs{GaussianReference{0.0, 0.5}, GaussianReference{0.0, 0.5}};
  const auto est = estimate_M(m, snaps, refs);
  EXPECT_DOUBLE_EQ(est.value, 0.0);
  EXPECT_TRUE(est.horizon_truncated);
}

TEST(EstimateM, BoundedKernelRespectsCrudeEnvelope) {
  const Kuramoto m{1.5, 1.0, KuramotoOrientation::Synchronizing};
  std::vector<ParticleEnsemble> snaps;
  std::vector<MeanFieldReference> refs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto e = ParticleEnsemble::zeros(2000, 3, 1);
    e.positions = cosine_samples(e.positions.size(), 0.6, 60 + s);
    snaps.push_back(e);
    refs.push_back(uniform_density(256));
  }
  const auto est = estimate_M(m, snaps, refs);
  const double R = 1.5 / (2.0 * kPi);
  for (double v : est.per_snapshot) EXPECT_LE(v, 4.0 * R * R);
  EXPECT_GT(est.value, 0.0);
}

TEST(EstimateM, LinearModelSecondMoment) {
  // Integrand b (x2 - mbar): expectation b^2 (v + (m - mbar)^2).
  const LinearGaussian m{1.0, 0.5, 1.0};
  const auto st = stationary_state(m, 10);
  std::vector<ParticleEnsemble> snaps{exchangeable_sample(20000, 10, 0.0, st.v, st.c, 70),
                                      exchangeable_sample(20000, 10, 0.3, st.v, st.c, 71)};
  const std::vector<MeanFieldReference> refs{GaussianReference{0.0, st.s}, GaussianReference{0.1, st.s}};
  const auto est = estimate_M(m, snaps, refs);
  ASSERT_EQ(est.per_snapshot.size(), 2u);
  EXPECT_NEAR(est.per_snapshot[0], 0.25 * st.v, 3.0 * est.per_snapshot_stderr[0]);
  EXPECT_NEAR(est.per_snapshot[1], 0.25 * (st.v + 0.04), 3.0 * est.per_snapshot_stderr[1]);
  EXPECT_EQ(est.argmax, 1u);
}

TEST(EstimateM, InputChecks) {
  const LinearGaussian m{1.0, 0.5, 1.0};
  std::vector<ParticleEnsemble> one{exchangeable_sample(10, 3, 0.0, 1.0, 0.0, 1)};
  const std::vector<MeanFieldReference> r1{GaussianReference{}};
  EXPECT_THROW(estimate_M(m, one, r1), ParameterError);
}

TEST(TransportBounds, Substitution) {
  EXPECT_DOUBLE_EQ(w2_bound_from_entropy(0.0, 1.0), 0.0);
  EXPECT_NEAR(w2_bound_from_entropy(0.01, 1.0), 0.2, 1e-15);
  EXPECT_NEAR(w2_bound_from_entropy(0.04, 0.7), 2.0 * w2_bound_from_entropy(0.01, 0.7), 1e-15);
  EXPECT_DOUBLE_EQ(tv_bound_from_entropy(0.0), 0.0);
  EXPECT_DOUBLE_EQ(tv_bound_from_entropy(2.0), 1.0);
  EXPECT_DOUBLE_EQ(tv_bound_from_entropy(50.0), 1.0);
  EXPECT_THROW(w2_bound_from_entropy(-1e-3, 1.0), DomainError);
  EXPECT_THROW(tv_bound_from_entropy(-1e-3), DomainError);
}

TEST(TransportBounds, GaussianPairsRespectBounds) {
  std::mt19937_64 rng(90);
  std::uniform_real_distribution<double> U(0.05, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double v = U(rng), s = U(rng);
    const double H = oracle::kl_scalar(v, s);
    EXPECT_LE(std::fabs(std::sqrt(v) - std::sqrt(s)), w2_bound_from_entropy(H, s / 2.0) * (1.0 + 1e-12));
    auto diff = [&](double x) {
      const double p = std::exp(-x * x / (2.0 * v)) / std::sqrt(2.0 * kPi * v);
      const double q = std::exp(-x * x / (2.0 * s)) / std::sqrt(2.0 * kPi * s);
      return std::fabs(p - q);
    };
    const double L = 12.0 * std::sqrt(std::max(v, s));
    const double tv = 0.5 * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(diff, -L, L, 15, 1e-12);
    EXPECT_LE(tv, tv_bound_from_entropy(H) + 1e-10);
  }
}
