#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "poc/errors.hpp"
#include "poc/meanfield_pde.hpp"

using namespace poc;
using oracle::kPi;

namespace {

double cosine_coefficient(const DensityGrid& mu) {
  const std::size_t N = mu.size();
  double s = 0.0;
  for (std::size_t i = 0; i < N; ++i) s += mu.values[i] * std::cos(2.0 * kPi * static_cast<double>(i) / N);
  return 2.0 * s / static_cast<double>(N);
}

double cosine_entropy_oracle(double amp) {
  auto f = [amp](double x) {
    const double m = 1.0 + amp * std::cos(2.0 * kPi * x);
    return m * std::log(m);
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-14);
}

}  // namespace

TEST(Density, UniformAndNormalization) {
  const auto u = uniform_density(64);
  EXPECT_NEAR(u.mass(), 1.0, 1e-15);
  EXPECT_NO_THROW(validate_density(u));
  const auto d = density_from_function(128, [](double x) { return 2.0 + std::sin(2.0 * kPi * x); });
  EXPECT_NEAR(d.mass(), 1.0, 1e-14);
  EXPECT_THROW(uniform_density(100), ParameterError);
  DensityGrid bad = uniform_density(8);
  bad.values[2] = -0.1;
  EXPECT_THROW(validate_density(bad), DomainError);
}

TEST(Solver, UniformIsInvariant) {
  const std::size_t N = 256;
  const auto K = sample_kernel(N, [](double x) { return 0.8 * std::sin(2.0 * kPi * x); });
  const std::vector<double> rec{0.5, 1.0, 2.0};
  const auto out = solve_mv_pde(K, 0.7, uniform_density(N), 1e-3, 2.0, rec);
  ASSERT_EQ(out.size(), 3u);
  for (const auto& mu : out) {
    for (double v : mu.values) EXPECT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(Solver, HeatModeDecay) {
  const std::size_t N = 256;
  const std::vector<double> K(N, 0.0);
  const auto mu0 = density_from_function(N, [](double x) { return 1.0 + 0.5 * std::cos(2.0 * kPi * x); });
  const std::vector<double> rec{0.1};
  const auto out = solve_mv_pde(K, 1.0, mu0, 1e-3, 0.1, rec);
  EXPECT_NEAR(cosine_coefficient(out[0]), 0.5 * std::exp(-2.0 * kPi * kPi * 0.1), 1e-12);
  EXPECT_NEAR(cosine_coefficient(out[0]), 0.0694556, 1e-7);
  EXPECT_NEAR(out[0].mass(), 1.0, 1e-10);
}

TEST(Solver, MassConservedAndEntropyMonotoneForConstantKernel) {
  const std::size_t N = 256;
  const std::vector<double> K(N, 0.35);  // divergence-free in one dimension
  const auto mu0 = density_from_function(N, [](double x) { return std::exp(std::cos(2.0 * kPi * x) + 0.3 * std::sin(4.0 * kPi * x)); });
  std::vector<double> rec;
  for (int i = 1; i <= 20; ++i) rec.push_back(0.025 * i);
  const auto out = solve_mv_pde(K, 0.5, mu0, 5e-4, 0.5, rec);
  double prev = entropy_vs_uniform(mu0);
  for (const auto& mu : out) {
    EXPECT_NEAR(mu.mass(), 1.0, 1e-10);
    EXPECT_GE(mu.min(), 0.0);
    const double h = entropy_vs_uniform(mu);
    EXPECT_LE(h, prev + 1e-14);
    prev = h;
  }
}

TEST(Solver, InputValidation) {
  const auto mu0 = uniform_density(64);
  const std::vector<double> K(64, 0.0), shortK(32, 0.0);
  const std::vector<double> rec{0.5};
  EXPECT_THROW(solve_mv_pde(shortK, 1.0, mu0, 1e-3, 1.0, rec), ParameterError);
  EXPECT_THROW(solve_mv_pde(K, 0.0, mu0, 1e-3, 1.0, rec), ParameterError);
  const std::vector<double> bad_rec{0.5, 0.2};
  EXPECT_THROW(solve_mv_pde(K, 1.0, mu0, 1e-3, 1.0, bad_rec), ParameterError);
}

TEST(Solver, ExplodingAdvectionIsReported) {
  const std::size_t N = 64;
  const auto K = sample_kernel(N, [](double x) { return -500.0 * std::sin(2.0 * kPi * x); });
  const auto mu0 = density_from_function(N, [](double x) { return 1.0 + 0.5 * std::cos(2.0 * kPi * x); });
  const std::vector<double> rec{1.0};
  EXPECT_THROW(solve_mv_pde(K, 0.1, mu0, 0.05, 1.0, rec), NumericalError);
}

TEST(EntropyVsUniform, Values) {
  EXPECT_DOUBLE_EQ(entropy_vs_uniform(uniform_density(32)), 0.0);
  const auto mu = density_from_function(1024, [](double x) { return 1.0 + 0.5 * std::cos(2.0 * kPi * x); }, false);
  const double ref = cosine_entropy_oracle(0.5);
  EXPECT_NEAR(ref, 0.0646381, 1e-7);
  EXPECT_NEAR(entropy_vs_uniform(mu), ref, 1e-12);
}

TEST(EntropyVsUniform, GrowsAsBumpNarrows) {
  double prev = 0.0;
  for (double width : {0.2, 0.1, 0.05, 0.02, 0.01}) {
    const auto mu = density_from_function(4096, [width](double x) { return std::exp(-std::pow((x - 0.5) / width, 2)); });
    const double h = entropy_vs_uniform(mu);
    EXPECT_TRUE(std::isfinite(h));
    EXPECT_GT(h, prev);
    prev = h;
  }
}

TEST(DecayFit, SyntheticSeries) {
  std::vector<double> t, h, c;
  for (int i = 0; i < 10; ++i) {
    t.push_back(0.1 * i);
    h.push_back(std::exp(-3.0 * 0.1 * i));
    c.push_back(0.7);
  }
  EXPECT_NEAR(decay_rate_fit(t, h).rate, 3.0, 1e-9);
  EXPECT_NEAR(decay_rate_fit(t, c).rate, 0.0, 1e-12);
  h[3] = 0.0;
  EXPECT_THROW(decay_rate_fit(t, h), DomainError);
  const std::vector<double> t4(t.begin(), t.begin() + 4), c4(c.begin(), c.begin() + 4);
  EXPECT_THROW(decay_rate_fit(t4, c4), DomainError);
}

TEST(ShiftDistance, RotatedProfilesMatch) {
  const std::size_t N = 128;
  const auto a = density_from_function(N, [](double x) { return 1.0 + 0.4 * std::cos(2.0 * kPi * x); });
  const auto b = density_from_function(N, [](double x) { return 1.0 + 0.4 * std::cos(2.0 * kPi * (x - 17.0 / 128.0)); });
  EXPECT_LT(best_shift_sup_distance(a, b), 1e-14);
  EXPECT_GT(best_shift_sup_distance(a, uniform_density(N)), 0.39);
}

TEST(DensityCsv, WritesOneRowPerGridPoint) {
  const auto dir = std::filesystem::temp_directory_path() / "poclab_pde_csv";
  std::filesystem::create_directories(dir);
  const auto path = dir / "mu.csv";
  write_density_csv(path, uniform_density(16));
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 17);
  EXPECT_THROW(write_density_csv(dir / "missing" / "mu.csv", uniform_density(16)), IoError);
  std::filesystem::remove_all(dir);
}
