#include "navloop/spline.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "navloop/rng.hpp"

namespace navloop {
namespace {

TEST(Spline, InterpolatesKnots) {
  Rng rng = make_rng({11, 0x5b1u});
  std::vector<double> t, y;
  double acc = 0.0;
  for (int i = 0; i < 20; ++i) {
    acc += draw_uniform(rng, 0.1, 1.5);
    t.push_back(acc);
    y.push_back(draw_uniform(rng, -5.0, 5.0));
  }
  const CubicSpline s = CubicSpline::fit(t, y);
  for (size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(s.eval(t[i]), y[i], 1e-10);
}

TEST(Spline, LinearDataStaysLinearBetweenKnots) {
  const std::vector<double> t{0.0, 1.0, 2.5, 4.0, 7.0};
  std::vector<double> y;
  for (double ti : t) y.push_back(3.0 * ti - 2.0);
  const CubicSpline s = CubicSpline::fit(t, y);
  for (double q = 0.0; q <= 7.0; q += 0.17) EXPECT_NEAR(s.eval(q), 3.0 * q - 2.0, 1e-10);
}

// Natural spline through (0,0), (1,1), (2,0): the single interior second
// derivative solves 4*M1 = 6*((0-1) - (1-0)) so M1 = -3, and the first
// segment evaluates at 0.5 to -0.5*0.125 + 1.5*0.5 = 0.6875.
TEST(Spline, HandSolvedThreeKnots) {
  const CubicSpline s = CubicSpline::fit({0.0, 1.0, 2.0}, {0.0, 1.0, 0.0});
  EXPECT_NEAR(s.second_derivative_at_knot(1), -3.0, 1e-12);
  EXPECT_NEAR(s.eval(0.5), 0.6875, 1e-12);
  EXPECT_NEAR(s.eval(1.5), 0.6875, 1e-12);  // symmetric data
}

TEST(Spline, NaturalBoundaryHasZeroSecondDerivative) {
  const std::vector<double> t{0.0, 0.7, 1.1, 2.0, 3.2};
  const std::vector<double> y{1.0, -2.0, 0.5, 4.0, -1.0};
  const CubicSpline s = CubicSpline::fit(t, y);
  EXPECT_DOUBLE_EQ(s.second_derivative_at_knot(0), 0.0);
  EXPECT_DOUBLE_EQ(s.second_derivative_at_knot(4), 0.0);
  // Finite-difference estimate just inside each end stays near zero.
  const double e = 1e-4;
  const double left = (s.eval(t.front()) - 2.0 * s.eval(t.front() + e) + s.eval(t.front() + 2 * e)) / (e * e);
  const double right = (s.eval(t.back()) - 2.0 * s.eval(t.back() - e) + s.eval(t.back() - 2 * e)) / (e * e);
  EXPECT_LT(std::abs(left), 0.05);
  EXPECT_LT(std::abs(right), 0.05);
}

TEST(Spline, EvalClampsOutsideRange) {
  const CubicSpline s = CubicSpline::fit({0.0, 1.0, 2.0}, {0.0, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(s.eval(-5.0), 0.0);
  EXPECT_DOUBLE_EQ(s.eval(9.0), 0.0);
}

TEST(Spline, RejectsBadKnots) {
  EXPECT_THROW(CubicSpline::fit({0.0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(CubicSpline::fit({0.0, 0.0}, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(CubicSpline::fit({0.0, 1.0, 0.5}, {1.0, 2.0, 3.0}), std::invalid_argument);
  EXPECT_THROW(CubicSpline::fit({0.0, 1.0}, {1.0}), std::invalid_argument);
}

}  // namespace
}  // namespace navloop
