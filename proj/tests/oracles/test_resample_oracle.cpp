#include "oracles/spline_oracle.hpp"

#include "lmsd/dataio/resample.hpp"

#include <gtest/gtest.h>

using namespace lmsd;
using namespace lmsd::dataio;

TEST(ResampleOracle, FiftyRandomSeriesMatchDenseSolver) {
  Rng rng(2024);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_int_distribution<int> len(4, 400);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int L = trial == 0 ? 20 : len(rng);
    FlightSample s;
    s.flight_id = "r";
    s.values.resize(L, 1);
    std::vector<double> xs(L), ys(L);
    for (int t = 0; t < L; ++t) {
      xs[t] = t;
      ys[t] = s.values(t, 0) = n(rng);
    }
    const oracle::NaturalSpline ref(xs, ys);
    const int target = 257 + trial * 13;
    const auto out = resample_cubic(s, target);
    for (int i = 0; i < target; ++i) {
      const double t = static_cast<double>(i) * (L - 1) / (target - 1);
      worst = std::max(worst, std::abs(out.values(i, 0) - ref(t)));
    }
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(ResampleOracle, SecondDerivativesMatch) {
  std::vector<double> xs{0, 1, 2, 3, 4, 5}, ys{1, -2, 0.5, 4, 4, -1};
  const oracle::NaturalSpline ref(xs, ys);
  const NaturalCubicSpline mine(ys);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(mine.second_derivatives()[i], ref.M[i], 1e-12);
}
