#ifndef OCT4D_SPLINE_HPP
#define OCT4D_SPLINE_HPP

#include <vector>

namespace oct4d {

// Natural cubic spline through (t_i, y_i) knots, zero second derivative at
// both ends. Knot abscissae must be strictly increasing.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::vector<double> ts, std::vector<double> ys);

  // Evaluates inside [t_first, t_last]; arguments outside are clamped to
  // the boundary segments (callers only query within range).
  double operator()(double t) const;

 private:
  std::vector<double> ts_, ys_, m2_;  // m2_: second derivatives at knots
};

}  // namespace oct4d

#endif
