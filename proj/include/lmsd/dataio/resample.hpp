#pragma once

#include "lmsd/dataio/sample.hpp"

#include <vector>

namespace lmsd::dataio {

/// Natural cubic spline over unit-spaced knots 0..n-1.
class NaturalCubicSpline {
 public:
  explicit NaturalCubicSpline(std::vector<double> y) : y_(std::move(y)) {
    const std::size_t n = y_.size();
    require(n >= 2, "spline needs at least 2 knots");
    m_.assign(n, 0.0);
    if (n < 4) return;  // degenerate sizes are handled by evaluate()
    // Unit spacing: m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]),
    // m[0] = m[n-1] = 0. Thomas algorithm on the interior unknowns.
    const std::size_t k = n - 2;
    std::vector<double> c(k), d(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double rhs = 6.0 * (y_[i + 2] - 2.0 * y_[i + 1] + y_[i]);
      if (i == 0) {
        c[i] = 1.0 / 4.0;
        d[i] = rhs / 4.0;
      } else {
        const double denom = 4.0 - c[i - 1];
        c[i] = 1.0 / denom;
        d[i] = (rhs - d[i - 1]) / denom;
      }
    }
    m_[k] = d[k - 1];
    for (std::size_t i = k - 1; i-- > 0;) m_[i + 1] = d[i] - c[i] * m_[i + 2];
  }

  double operator()(double t) const {
    const std::size_t n = y_.size();
    const double last = static_cast<double>(n - 1);
    require(t >= 0.0 && t <= last, "spline evaluation outside the knot range");
    if (n == 2) return y_[0] + (y_[1] - y_[0]) * t;
    if (n == 3) {
      // quadratic through the three knots (Newton form)
      const double d1 = y_[1] - y_[0];
      const double d2 = (y_[2] - 2.0 * y_[1] + y_[0]) / 2.0;
      return y_[0] + d1 * t + d2 * t * (t - 1.0);
    }
    if (t == last) return y_[n - 1];
    const auto j = static_cast<std::size_t>(t);
    const double u = t - static_cast<double>(j);
    if (u == 0.0) return y_[j];
    const double a = 1.0 - u;
    return a * y_[j] + u * y_[j + 1] + ((a * a * a - a) * m_[j] + (u * u * u - u) * m_[j + 1]) / 6.0;
  }

  const std::vector<double>& second_derivatives() const { return m_; }

 private:
  std::vector<double> y_;
  std::vector<double> m_;
};

/// Resamples each channel to target_len points spanning [0, L_raw - 1].
inline FlightSample resample_cubic(const FlightSample& sample, int target_len = 2048) {
  require(sample.length() >= 2, "resample: flight " + sample.flight_id + " has fewer than 2 timesteps");
  require(target_len >= 2, "resample: target length must be >= 2");
  require(sample.values.allFinite(), "resample: flight " + sample.flight_id + " still has missing values");
  const int L = sample.length();
  FlightSample out = sample;
  out.values.resize(target_len, sample.dim());
  out.missing = MissingMask::Constant(target_len, sample.dim(), false);
  const double span = static_cast<double>(L - 1);
  for (int d = 0; d < sample.dim(); ++d) {
    std::vector<double> y(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) y[static_cast<std::size_t>(t)] = sample.values(t, d);
    const NaturalCubicSpline spline(std::move(y));
    for (int i = 0; i < target_len; ++i) {
      const double t = static_cast<double>(i) * span / static_cast<double>(target_len - 1);
      out.values(i, d) = spline(t);
    }
  }
  return out;
}

}  // namespace lmsd::dataio
