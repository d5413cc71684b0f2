#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stochlind/stochastic.hpp"

using namespace stochlind;

namespace {

BrownianIncrementStream stream(std::uint64_t seed, std::uint64_t traj, std::uint64_t ch, double t, std::size_t n) {
  return {seed, traj, ch, TimeGrid(t, n)};
}

}  // namespace

TEST(TimeGrid, RejectsBadInput) {
  EXPECT_THROW(TimeGrid(0.0, 10), InvariantError);
  EXPECT_THROW(TimeGrid(1.0, 0), InvariantError);
  const TimeGrid g(2.0, 8);
  EXPECT_DOUBLE_EQ(g.dt(), 0.25);
  EXPECT_DOUBLE_EQ(g.time(8), 2.0);
}

TEST(Increments, Deterministic) {
  const auto s = stream(42, 3, 1, 1.0, 500);
  EXPECT_EQ(sample_increments(s), sample_increments(s));
}

TEST(Increments, StreamsDiffer) {
  EXPECT_NE(sample_increments(stream(42, 3, 1, 1.0, 50)), sample_increments(stream(42, 4, 1, 1.0, 50)));
  EXPECT_NE(sample_increments(stream(42, 3, 1, 1.0, 50)), sample_increments(stream(42, 3, 2, 1.0, 50)));
  EXPECT_NE(sample_increments(stream(42, 3, 1, 1.0, 50)), sample_increments(stream(43, 3, 1, 1.0, 50)));
}

TEST(Increments, MeanAndVariance) {
  const std::size_t n = 1000000;
  const auto s = stream(7, 0, 0, 2.0, n);
  const double dt = s.grid.dt();
  const auto x = sample_increments(s);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  EXPECT_LT(std::abs(mean), 5.0 * std::sqrt(dt / static_cast<double>(n)));
  EXPECT_LT(std::abs(var / dt - 1.0), 0.01);
}

TEST(Increments, RefinementSharesThePath) {
  // Increments on the coarse grid are sums of the fine draws.
  const TimeGrid g(1.0, 20);
  GaussianIncrements fine(5, 2, 0, g.dt() / 4.0, 1);
  GaussianIncrements coarse(5, 2, 0, g.dt(), 4);
  for (int k = 0; k < 20; ++k) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += fine.next();
    EXPECT_NEAR(coarse.next(), s, 1e-14);
  }
}

TEST(ItoIntegral, ZeroKernel) {
  for (double x : ito_integral_path(NoiseKernel::zero(), stream(1, 0, 0, 1.0, 100))) EXPECT_EQ(x, 0.0);
}

TEST(ItoIntegral, UnitKernelIsBrownianPath) {
  const auto s = stream(1, 0, 0, 1.0, 100);
  const auto x = ito_integral_path(NoiseKernel::constant(1.0), s);
  const auto db = sample_increments(s);
  ASSERT_EQ(x.size(), 101u);
  EXPECT_EQ(x[0], 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < db.size(); ++k) {
    acc += db[k];
    EXPECT_NEAR(x[k + 1], acc, 1e-14);
  }
}

TEST(ItoIntegral, Isometry) {
  const NoiseKernel v = NoiseKernel::power_law(1.3, 1.0);
  const std::size_t paths = 10000, steps = 200;
  double m = 0.0, m2 = 0.0;
  std::vector<double> xs;
  for (std::size_t i = 0; i < paths; ++i) xs.push_back(ito_integral_path(v, stream(11, i, 0, 1.5, steps)).back());
  for (double x : xs) m += x;
  m /= static_cast<double>(paths);
  for (double x : xs) m2 += (x - m) * (x - m);
  const double var = m2 / static_cast<double>(paths - 1);
  // Variance of the left-point sum on this grid.
  const TimeGrid g(1.5, steps);
  double lam = 0.0;
  for (std::size_t k = 0; k < steps; ++k) lam += v(g.time(k)) * v(g.time(k)) * g.dt();
  const double se = var * std::sqrt(2.0 / static_cast<double>(paths - 1));
  EXPECT_LT(std::abs(var - lam), 5.0 * se);
  EXPECT_NEAR(lam, v.lambda(1.5), 1.69 * 1.5 * 1.5 * g.dt());
}

TEST(ItoIntegral, TabulatedWindowEnforced) {
  const NoiseKernel v = NoiseKernel::tabulated({0.0, 0.5}, {1.0, 1.0});
  EXPECT_ANY_THROW(ito_integral_path(v, stream(1, 0, 0, 1.0, 10)));
}

TEST(Lambda, ClosedForms) {
  EXPECT_DOUBLE_EQ(lambda_of_t(NoiseKernel::constant(1.0), 2.5), 2.5);
  EXPECT_NEAR(lambda_of_t(NoiseKernel::power_law(1.0, 1.0), 2.0), 8.0 / 3.0, 1e-14);
  EXPECT_NEAR(lambda_of_t(NoiseKernel::constant(std::sqrt(1.0 / (2.0 * std::numbers::pi))), 1.0), 0.15915494309189535,
              1e-15);
}

TEST(Lambda, TabulatedTrapezoid) {
  const NoiseKernel v = NoiseKernel::tabulated({0.0, 1.0, 2.0}, {0.0, 1.0, 1.0});
  // Trapezoid on v^2 between knots: 0.5 on [0,1], 1 on [1,2].
  EXPECT_NEAR(v.lambda(2.0), 1.5, 1e-15);
  EXPECT_NEAR(v.lambda(1.5), 1.0, 1e-15);
  EXPECT_LE(v.lambda(0.5), v.lambda(1.0));
}

TEST(Moments, GaussianFormula) {
  const NoiseKernel one = NoiseKernel::constant(1.0);
  EXPECT_NEAR(theoretical_moment(one, 2, 0.7), 0.7, 1e-15);
  EXPECT_NEAR(theoretical_moment(one, 4, 2.0), 12.0, 1e-12);
  EXPECT_EQ(theoretical_moment(NoiseKernel::power_law(2.0, 0.5), 3, 1.3), 0.0);
  EXPECT_NEAR(theoretical_moment(one, 6, 1.0), 15.0, 1e-12);
}

TEST(ExpectedCos, Values) {
  EXPECT_DOUBLE_EQ(expected_cos(0.8, 0.0), std::cos(0.8));
  EXPECT_NEAR(expected_cos(0.0, 1.0), 0.6065306597126334, 1e-15);
  EXPECT_DOUBLE_EQ(expected_cos_squared(0.8, 0.0), std::cos(0.8) * std::cos(0.8));
  EXPECT_NEAR(expected_cos_squared(0.0, 0.4), 0.5 * (1.0 + std::exp(-0.8)), 1e-15);
  EXPECT_ANY_THROW(expected_cos(0.0, -1.0));
  EXPECT_ANY_THROW(expected_cos_squared(0.0, -1.0));
}

TEST(ExpectedCos, SamplingOracle) {
  const NoiseKernel v = NoiseKernel::constant(0.9);
  const std::size_t paths = 100000;
  const double t = 1.0, b = 0.6;
  double s1 = 0.0, s2 = 0.0, q1 = 0.0, q2 = 0.0;
  for (std::size_t i = 0; i < paths; ++i) {
    GaussianIncrements g(21, i, 0, t);
    const double x = 0.9 * g.next();
    const double c = std::cos(b + x);
    s1 += c;
    q1 += c * c;
    s2 += c * c;
    q2 += c * c * c * c;
  }
  const double n = static_cast<double>(paths);
  const double m1 = s1 / n, m2 = s2 / n;
  const double se1 = std::sqrt((q1 / n - m1 * m1) / n), se2 = std::sqrt((q2 / n - m2 * m2) / n);
  EXPECT_LT(std::abs(m1 - expected_cos(b, v.lambda(t))), 5.0 * se1);
  EXPECT_LT(std::abs(m2 - expected_cos_squared(b, v.lambda(t))), 5.0 * se2);
}

TEST(Correlation, Validation) {
  RealMatrix g(2, 2);
  g << 1.0, 1.2, 1.2, 1.0;
  EXPECT_THROW(CorrelationSpec{g}, InvariantError);
  g << 1.0, 0.5, 0.4, 1.0;
  EXPECT_THROW(CorrelationSpec{g}, InvariantError);
  g << 0.9, 0.0, 0.0, 1.0;
  EXPECT_THROW(CorrelationSpec{g}, InvariantError);
  RealMatrix h(3, 3);
  h << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;
  EXPECT_THROW(CorrelationSpec{h}, InvariantError);
}

TEST(Correlation, FactorReproducesMatrix) {
  RealMatrix g(4, 4);
  g << 1, 0.5, 0, 0, 0.5, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1;
  const CorrelationSpec c(g);
  const RealMatrix l = c.factor().dense();
  EXPECT_LT(max_abs(RealMatrix(l * l.transpose() - g)), 1e-12);
}
