// spline.hpp -- natural cubic spline interpolation with flat extrapolation.
#pragma once

#include <vector>

#include "lgcp/common.hpp"

namespace lgcp {

// Interpolates (knots, values) exactly; C2 between knots; second derivative
// zero at both ends. Evaluation outside the knot range clamps to the
// endpoint values.
class CubicSpline {
 public:
  CubicSpline(std::vector<double> knots, std::vector<double> values)
      : x_(std::move(knots)), y_(std::move(values)) {
    if (x_.size() != y_.size()) throw ParameterError("spline: knots/values size mismatch");
    if (x_.size() < 3) throw ParameterError("spline: need at least 3 knots");
    for (std::size_t i = 0; i + 1 < x_.size(); ++i)
      if (!(x_[i] < x_[i + 1])) throw ParameterError("spline: knots must be strictly increasing");
    solve_second_derivatives();
  }

  double operator()(double x) const {
    const std::size_t m = x_.size();
    if (x <= x_[0]) return y_[0];
    if (x >= x_[m - 1]) return y_[m - 1];
    // interval search
    std::size_t lo = 0, hi = m - 1;
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      (x_[mid] <= x ? lo : hi) = mid;
    }
    double h = x_[lo + 1] - x_[lo];
    double a = (x_[lo + 1] - x) / h;
    double b = (x - x_[lo]) / h;
    return a * y_[lo] + b * y_[lo + 1] +
           ((a * a * a - a) * m2_[lo] + (b * b * b - b) * m2_[lo + 1]) * h * h / 6.0;
  }

  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }
  const std::vector<double>& second_derivatives() const { return m2_; }

 private:
  void solve_second_derivatives() {
    const std::size_t m = x_.size();
    m2_.assign(m, 0.0);
    // Thomas algorithm on the interior tridiagonal system; M_0 = M_{m-1} = 0.
    std::vector<double> diag(m, 0.0), rhs(m, 0.0), upper(m, 0.0);
    for (std::size_t i = 1; i + 1 < m; ++i) {
      double h0 = x_[i] - x_[i - 1];
      double h1 = x_[i + 1] - x_[i];
      diag[i] = (h0 + h1) / 3.0;
      upper[i] = h1 / 6.0;
      rhs[i] = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
    }
    for (std::size_t i = 2; i + 1 < m; ++i) {
      double w = (x_[i] - x_[i - 1]) / 6.0 / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = m - 2; i >= 1; --i) {
      m2_[i] = (rhs[i] - upper[i] * m2_[i + 1]) / diag[i];
      if (i == 1) break;
    }
  }

  std::vector<double> x_, y_, m2_;
};

inline CubicSpline spline_build(std::vector<double> knots, std::vector<double> values) {
  return CubicSpline(std::move(knots), std::move(values));
}

}  // namespace lgcp
