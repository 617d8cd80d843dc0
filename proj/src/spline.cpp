#include "oct4d/spline.hpp"

#include <algorithm>
#include <cstddef>

#include "oct4d/common.hpp"

namespace oct4d {

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> ts, std::vector<double> ys)
    : ts_(std::move(ts)), ys_(std::move(ys)) {
  size_t n = ts_.size();
  if (n < 2 || ys_.size() != n)
    fail_contract("spline needs >= 2 knots with matching values, got ", n, "/", ys_.size());
  for (size_t i = 1; i < n; ++i)
    if (ts_[i] <= ts_[i - 1]) fail_contract("spline knots must be strictly increasing");

  m2_.assign(n, 0.0);
  if (n == 2) return;

  // Thomas algorithm on the interior second-derivative system; natural
  // boundary conditions pin m2 to zero at both ends.
  size_t m = n - 2;
  std::vector<double> diag(m), rhs(m), upper(m, 0.0);
  for (size_t i = 0; i < m; ++i) {
    double h0 = ts_[i + 1] - ts_[i];
    double h1 = ts_[i + 2] - ts_[i + 1];
    diag[i] = 2.0 * (h0 + h1);
    if (i + 1 < m) upper[i] = h1;
    rhs[i] = 6.0 * ((ys_[i + 2] - ys_[i + 1]) / h1 - (ys_[i + 1] - ys_[i]) / h0);
  }
  for (size_t i = 1; i < m; ++i) {
    double h = ts_[i + 1] - ts_[i];  // sub-diagonal entry
    double w = h / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  m2_[m] = rhs[m - 1] / diag[m - 1];
  for (size_t i = m - 1; i >= 1; --i)
    m2_[i] = (rhs[i - 1] - upper[i - 1] * m2_[i + 1]) / diag[i - 1];
}

double NaturalCubicSpline::operator()(double t) const {
  size_t n = ts_.size();
  size_t hi = std::upper_bound(ts_.begin(), ts_.end(), t) - ts_.begin();
  hi = std::clamp<size_t>(hi, 1, n - 1);
  size_t lo = hi - 1;
  double h = ts_[hi] - ts_[lo];
  double a = (ts_[hi] - t) / h;
  double b = (t - ts_[lo]) / h;
  return a * ys_[lo] + b * ys_[hi] +
         ((a * a * a - a) * m2_[lo] + (b * b * b - b) * m2_[hi]) * h * h / 6.0;
}

}  // namespace oct4d
