#pragma once

#include <vector>

namespace qlbe {

// Spherical Bessel functions j_l(x) and y_l(x) for l = 0..l_max, x > 0.
// j_l comes from Miller's downward recurrence normalised through the
// Wronskian j_1 y_0 - j_0 y_1 = 1/x^2; y_l from the (stable) upward recurrence.
struct SphericalBessel {
  std::vector<double> j;
  std::vector<double> y;
};

SphericalBessel spherical_bessel(int l_max, double x);

}  // namespace qlbe
