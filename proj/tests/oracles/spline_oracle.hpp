#pragma once
// Reference natural cubic spline built from the general (non-uniform) knot
// formulation: solve for second derivatives with dense Gaussian elimination
// with partial pivoting, then evaluate the standard piecewise cubic.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

inline std::vector<double> solve_dense(std::vector<std::vector<double>> A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    std::swap(A[col], A[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = A[r][col] / A[col][col];
      for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= A[i][c] * x[c];
    x[i] = s / A[i][i];
  }
  return x;
}

struct NaturalSpline {
  std::vector<double> x, y, M;

  NaturalSpline(std::vector<double> xs, std::vector<double> ys) : x(std::move(xs)), y(std::move(ys)) {
    const std::size_t n = x.size();
    if (n < 4) throw std::invalid_argument("oracle spline needs >= 4 knots");
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    std::vector<double> b(n, 0.0);
    A[0][0] = 1.0;
    A[n - 1][n - 1] = 1.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x[i] - x[i - 1], h1 = x[i + 1] - x[i];
      A[i][i - 1] = h0 / 6.0;
      A[i][i] = (h0 + h1) / 3.0;
      A[i][i + 1] = h1 / 6.0;
      b[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    M = solve_dense(A, b);
  }

  double operator()(double t) const {
    std::size_t j = 0;
    while (j + 2 < x.size() && t > x[j + 1]) ++j;
    const double h = x[j + 1] - x[j];
    const double a = (x[j + 1] - t) / h, c = (t - x[j]) / h;
    return a * y[j] + c * y[j + 1] + ((a * a * a - a) * M[j] + (c * c * c - c) * M[j + 1]) * h * h / 6.0;
  }
};

}  // namespace oracle
