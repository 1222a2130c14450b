#pragma once
// Natural cubic spline interpolation over a strictly increasing knot sequence.

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace navloop {

class CubicSpline {
 public:
  // Fits a natural spline (zero second derivative at both ends) through
  // (t[i], y[i]). Requires t strictly increasing and size >= 2.
  static CubicSpline fit(const std::vector<double>& t, const std::vector<double>& y) {
    if (t.size() != y.size() || t.size() < 2)
      throw std::invalid_argument("CubicSpline::fit: need >= 2 matching knots");
    const int n = static_cast<int>(t.size());
    for (int i = 1; i < n; ++i)
      if (!(t[i] > t[i - 1]))
        throw std::invalid_argument("CubicSpline::fit: knots must be strictly increasing");

    CubicSpline s;
    s.t_ = t;
    s.y_ = y;
    s.m_.assign(n, 0.0);  // natural boundary: M_0 = M_{n-1} = 0
    if (n > 2) {
      // Tridiagonal system for interior second derivatives (Thomas algorithm).
      const int m = n - 2;
      std::vector<double> diag(m), upper(m), rhs(m);
      for (int i = 0; i < m; ++i) {
        const double h0 = t[i + 1] - t[i];
        const double h1 = t[i + 2] - t[i + 1];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
      }
      for (int i = 1; i < m; ++i) {
        const double lower = t[i + 1] - t[i];  // h_i, sub-diagonal entry
        const double w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
      }
      s.m_[m] = rhs[m - 1] / diag[m - 1];
      for (int i = m - 2; i >= 0; --i) s.m_[i + 1] = (rhs[i] - upper[i] * s.m_[i + 2]) / diag[i];
    }
    return s;
  }

  // Evaluates the spline; the argument is clamped to the knot range.
  double eval(double s) const {
    if (s <= t_.front()) return y_.front();
    if (s >= t_.back()) return y_.back();
    const auto it = std::upper_bound(t_.begin(), t_.end(), s);
    const int i = static_cast<int>(it - t_.begin()) - 1;
    const double h = t_[i + 1] - t_[i];
    const double a = t_[i + 1] - s;
    const double b = s - t_[i];
    return m_[i] * a * a * a / (6.0 * h) + m_[i + 1] * b * b * b / (6.0 * h) +
           (y_[i] / h - m_[i] * h / 6.0) * a + (y_[i + 1] / h - m_[i + 1] * h / 6.0) * b;
  }

  // Second derivative at a knot (handy for boundary checks).
  double second_derivative_at_knot(int i) const { return m_.at(i); }

 private:
  std::vector<double> t_, y_, m_;
};

}  // namespace navloop
