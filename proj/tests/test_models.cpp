#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "poc/errors.hpp"
#include "poc/models.hpp"

using namespace poc;
using oracle::kPi;

TEST(ConvexConstants, DiracStartSubstitution) {
  const auto rep = convex_constants(2.0, 1.0, kInf, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(rep.eta, 0.125);
  EXPECT_DOUBLE_EQ(rep.gamma, 0.5);
  ASSERT_TRUE(rep.r_c.has_value());
  EXPECT_NEAR(*rep.r_c, 3.0, 1e-14);
  EXPECT_NEAR(convex_rc_expanded(2.0, 1.0, kInf, 0.0, 1.0), 3.0, 1e-14);
  EXPECT_EQ(rep.regime, Regime::Optimal);
  EXPECT_FALSE(rep.p_c.has_value());
}

TEST(ConvexConstants, CriticalConvexityIsNotApplicable) {
  const auto rep = convex_constants(1.5, 1.5, kInf, 0.0, 1.0);
  ASSERT_TRUE(rep.r_c.has_value());
  EXPECT_NEAR(*rep.r_c, 0.0, 1e-14);
  EXPECT_EQ(rep.regime, Regime::NotApplicable);
  EXPECT_FALSE(rep.condition_flags.at("alpha_exceeds_lipschitz"));
}

TEST(ConvexConstants, TieBetweenInitialAndConvexityBranches) {
  const double sigma = 1.3, alpha = 0.7;
  const auto rep = convex_constants(alpha, 0.2, kInf, sigma * sigma / alpha, sigma);
  EXPECT_NEAR(rep.eta, sigma * sigma / (4.0 * alpha), 1e-15);
}

TEST(ConvexConstants, SupNormBranchAndExpandedFormAgree) {
  for (double alpha : {0.5, 1.0, 3.0}) {
    for (double L : {0.3, 2.0, kInf}) {
      for (double R : {0.1, 1.0, kInf}) {
        if (std::isinf(L) && std::isinf(R)) continue;
        for (double eta0 : {0.0, 0.4, 5.0}) {
          const auto rep = convex_constants(alpha, L, R, eta0, 0.9);
          EXPECT_NEAR(*rep.r_c, convex_rc_expanded(alpha, L, R, eta0, 0.9), 1e-10 * std::max(1.0, std::fabs(*rep.r_c)))
              << alpha << " " << L << " " << R << " " << eta0;
        }
      }
    }
  }
}

TEST(ConvexConstants, Errors) {
  EXPECT_THROW(convex_constants(0.0, 1.0, 1.0, 0.0, 1.0), UnsupportedModel);
  EXPECT_THROW(convex_constants(-1.0, 1.0, 1.0, 0.0, 1.0), UnsupportedModel);
  EXPECT_THROW(convex_constants(1.0, kInf, kInf, 0.0, 1.0), AssumptionViolation);
}

TEST(TorusConstants, DivergenceFreeKernel) {
  const auto rep = torus_constants(1.0, 0.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(rep.r0, 0.0);
  EXPECT_DOUBLE_EQ(rep.report.eta, 1.0);
  EXPECT_DOUBLE_EQ(rep.report.gamma, 0.125);
  EXPECT_NEAR(*rep.report.r_c, 1.0, 1e-15);
  EXPECT_EQ(rep.report.regime, Regime::Slow);
  EXPECT_TRUE(rep.report.condition_flags.at("smallness"));
}

TEST(TorusConstants, SmallnessBoundary) {
  const auto at = torus_constants(1.0, kPi * kPi, 0.5, 1.0);
  EXPECT_FALSE(at.report.condition_flags.at("smallness"));
  EXPECT_FALSE(at.report.r_c.has_value());
  EXPECT_FALSE(at.density_lower.has_value());
  const auto below = torus_constants(1.0, kPi * kPi * (1.0 - 1e-9), 0.5, 1.0);
  EXPECT_TRUE(below.report.condition_flags.at("smallness"));
}

TEST(TorusConstants, DensityBoundsAtRootLambda) {
  const double lambda = std::exp(0.5);
  const auto rep = torus_constants(lambda, 1.0, 0.5, 1.0);
  const double r0 = 1.0 / (kPi * kPi - 1.0);
  EXPECT_NEAR(rep.r0, r0, 1e-15);
  EXPECT_NEAR(rep.r0, 0.1127446, 1e-6);
  EXPECT_NEAR(*rep.density_lower, std::exp(-0.5 - r0), 1e-15);
  EXPECT_NEAR(*rep.density_lower, 0.541862, 1e-6);
  EXPECT_NEAR(*rep.density_upper, lambda / (1.0 - r0 * std::exp(r0)), 1e-14);
}

TEST(Kuramoto, CriticalCouplingsAtLambdaOne) {
  const auto rep = kuramoto_constants(0.01, 1.0);
  EXPECT_NEAR(rep.critical_coupling_0, std::sqrt(2.0) / (8.0 * kPi), 1e-12);
  EXPECT_NEAR(rep.critical_coupling_1, 1.0 / (8.0 * kPi), 1e-12);
  EXPECT_NEAR(kuramoto_rc(1.0 / (8.0 * kPi), 1.0), 1.0, 1e-12);
}

TEST(Kuramoto, SubstitutionValue) {
  // At lambda = 1 the (1 - 4K) factors cancel.
  EXPECT_NEAR(kuramoto_rc(0.02, 1.0), 1.0 / (32.0 * kPi * kPi * 0.0004) - 1.0, 1e-12);
  EXPECT_NEAR(kuramoto_rc(0.02, 1.0), 6.915717, 1e-6);
  const auto rep = kuramoto_constants(0.02, 1.0);
  EXPECT_NEAR(*rep.torus.report.r_c, kuramoto_rc(0.02, 1.0), 1e-10);
}

TEST(Kuramoto, ClosedFormMatchesGeneralTorusFormula) {
  for (double lambda : {1.0, 1.2, 2.0}) {
    const double bound = kuramoto_admissible_bound(lambda);
    for (double frac : {0.1, 0.4, 0.8}) {
      const double K = frac * bound;
      const auto tor = torus_constants(lambda, K, K / kPi, 1.0 / (2.0 * kPi));
      ASSERT_TRUE(tor.report.r_c.has_value());
      EXPECT_NEAR(kuramoto_rc(K, lambda), *tor.report.r_c, 1e-9 * std::max(1.0, std::fabs(*tor.report.r_c)));
    }
  }
}

TEST(Kuramoto, MonotoneInCouplingAndLambda) {
  for (double lambda : {1.0, 1.5, 3.0}) {
    const double bound = kuramoto_admissible_bound(lambda);
    double prev = kInf;
    for (int i = 1; i < 200; ++i) {
      const double rc = kuramoto_rc(bound * i / 200.0, lambda);
      EXPECT_LT(rc, prev);
      prev = rc;
    }
  }
  for (double K : {0.005, 0.02, 0.04}) {
    double prev = kInf;
    for (double lambda = 1.0; lambda < 1.6; lambda += 0.05) {
      if (!(K < kuramoto_admissible_bound(lambda))) break;
      const double rc = kuramoto_rc(K, lambda);
      EXPECT_LT(rc, prev);
      prev = rc;
    }
  }
}

TEST(Kuramoto, InadmissibleCouplingIsFlagged) {
  const auto rep = kuramoto_constants(0.3, 1.0);
  EXPECT_FALSE(rep.admissible);
  EXPECT_FALSE(rep.torus.report.r_c.has_value());
  EXPECT_FALSE(rep.torus.report.condition_flags.at("admissible"));
  EXPECT_THROW(kuramoto_constants(0.0, 1.0), ParameterError);
  EXPECT_THROW(kuramoto_constants(0.01, 0.5), ParameterError);
}

TEST(Regime, BoundariesMapToLowerRegime) {
  EXPECT_EQ(classify_regime(0.0), Regime::NotApplicable);
  EXPECT_EQ(classify_regime(-0.5), Regime::NotApplicable);
  EXPECT_EQ(classify_regime(1.0), Regime::Slow);
  EXPECT_EQ(classify_regime(std::nextafter(1.0, 2.0)), Regime::Intermediate);
  EXPECT_EQ(classify_regime(2.0), Regime::Intermediate);
  EXPECT_EQ(classify_regime(std::nextafter(2.0, 3.0)), Regime::Optimal);
}

TEST(ModelSpec, ValidationAndGeometry) {
  EXPECT_THROW(validate_model(LinearGaussian{0.0, 0.5, 1.0}), UnsupportedModel);
  EXPECT_THROW(validate_model(Kuramoto{1.0, 0.5}), ParameterError);
  EXPECT_NO_THROW(validate_model(LinearGaussian{1.0, 0.5, 1.0}));
  EXPECT_FALSE(is_torus(LinearGaussian{}));
  EXPECT_TRUE(is_torus(Kuramoto{}));
  EXPECT_NEAR(model_sigma(Kuramoto{}), 1.0 / (2.0 * kPi), 1e-16);
}

TEST(ModelSpec, KernelScanOfSineKernel) {
  const double amp = 0.3;
  VectorField k = [amp](std::span<const double> x, std::span<double> out) { out[0] = amp * std::sin(2.0 * kPi * x[0]); };
  const auto scan = scan_torus_kernel(1, k);
  EXPECT_NEAR(scan.div_sup, 2.0 * kPi * amp, 1e-3);
  EXPECT_NEAR(scan.diam, 2.0 * amp, 1e-4);
}

TEST(ModelSpec, InteractionProxies) {
  const double K = 0.7;
  const auto sq = interaction_sup_sq(Kuramoto{K, 1.0});
  EXPECT_NEAR(*sq, std::pow(K / (2.0 * kPi), 2), 1e-16);
  EXPECT_NEAR(*interaction_bound_proxy(Kuramoto{K, 1.0}), 4.0 * *sq, 1e-16);
  EXPECT_FALSE(interaction_bound_proxy(LinearGaussian{1.0, 0.5, 1.0}).has_value());
  EXPECT_DOUBLE_EQ(*interaction_bound_proxy(LinearGaussian{1.0, 0.0, 1.0}), 0.0);
}
