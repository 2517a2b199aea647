#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <mvfmr/mathutil.hpp>

namespace mvfmr {
namespace {

TEST(Linspace, EndpointsAndSpacing) {
  const VectorXd g = linspace(0.0, 50.0, 51);
  ASSERT_EQ(g.size(), 51);
  EXPECT_DOUBLE_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[50], 50.0);
  for (int i = 0; i < 50; ++i) EXPECT_NEAR(g[i + 1] - g[i], 1.0, 1e-12);
}

TEST(TrapezoidWeights, SumEqualsSpanOnUniformGrid) {
  const VectorXd g = linspace(0.0, 50.0, 201);
  const VectorXd w = trapezoid_weights(g);
  EXPECT_NEAR(w.sum(), 50.0, 1e-10);
  EXPECT_NEAR(w[0], 0.125, 1e-12);
  EXPECT_NEAR(w[100], 0.25, 1e-12);
}

TEST(Trapz, ExactForLinearFunctions) {
  const VectorXd g = linspace(0.0, 50.0, 51);
  // integral of 0.02 t over [0, 50] = 25, exact under the trapezoid rule
  const VectorXd v = 0.02 * g;
  EXPECT_NEAR(trapz(g, v), 25.0, 1e-10);
}

TEST(Trapz, QuadraticWithinDiscretizationError) {
  const VectorXd g = linspace(0.0, 1.0, 101);
  const VectorXd v = g.array().square();
  EXPECT_NEAR(trapz(g, v), 1.0 / 3.0, 1e-4);
}

TEST(InterpLinear, RecoversNodeValuesAndMidpoints) {
  const VectorXd g = linspace(0.0, 10.0, 11);
  const VectorXd v = 2.0 * g;
  VectorXd q(3);
  q << 0.0, 3.5, 10.0;
  const VectorXd out = interp_linear(g, v, q);
  EXPECT_DOUBLE_EQ(out[0], 0.0);
  EXPECT_NEAR(out[1], 7.0, 1e-12);
  EXPECT_DOUBLE_EQ(out[2], 20.0);
}

TEST(InterpLinear, ThrowsOutsideDomain) {
  const VectorXd g = linspace(0.0, 10.0, 11);
  const VectorXd v = g;
  VectorXd q(1);
  q << 10.5;
  EXPECT_THROW(interp_linear(g, v, q), OutOfDomainError);
  q << -0.5;
  EXPECT_THROW(interp_linear(g, v, q), OutOfDomainError);
}

TEST(NormalQuantile, MatchesKnownValues) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-9);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-12);
  EXPECT_NEAR(normal_quantile(0.025), -1.959963984540054, 1e-9);
  EXPECT_NEAR(normal_quantile(0.995), 2.5758293035489004, 1e-8);
}

TEST(SampleQuantile, MedianAndInterpolation) {
  // linear-interpolation convention on sorted order statistics
  std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  EXPECT_NEAR(sample_quantile(v, 0.5), 2.5, 1e-12);
  EXPECT_NEAR(sample_quantile(v, 0.0), 1.0, 1e-12);
  EXPECT_NEAR(sample_quantile(v, 1.0), 4.0, 1e-12);
  EXPECT_NEAR(sample_quantile(v, 0.25), 1.75, 1e-12);
}

TEST(DeriveSeed, DistinctAcrossIndicesAndStable) {
  const std::uint64_t master = 42;
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 2000; ++i) seen.insert(derive_seed(master, i));
  EXPECT_EQ(seen.size(), 2000u);  // no collisions in a long index range
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
  EXPECT_NE(derive_seed(7, 3), derive_seed(8, 3));
  EXPECT_NE(derive_seed(7, 3), derive_seed(7, 4));
}

TEST(VectorStats, MeanAndSd) {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  EXPECT_NEAR(vector_mean(v), 2.5, 1e-12);
  // sample standard deviation with n-1 denominator
  EXPECT_NEAR(vector_sd(v), std::sqrt(5.0 / 3.0), 1e-12);
  EXPECT_DOUBLE_EQ(vector_sd({1.0}), 0.0);
}

}  // namespace
}  // namespace mvfmr
