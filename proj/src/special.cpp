#include "qlbe/special.hpp"

#include "qlbe/errors.hpp"

#include <algorithm>
#include <cmath>

namespace qlbe {

SphericalBessel spherical_bessel(int l_max, double x) {
  if (l_max < 0 || !(x > 0.0) || !std::isfinite(x)) {
    fail(ErrorKind::InvalidArgument, "spherical_bessel needs l_max >= 0 and finite x > 0");
  }
  SphericalBessel out;
  const int n = std::max(l_max, 1);
  out.j.assign(n + 1, 0.0);
  out.y.assign(n + 1, 0.0);

  const double s = std::sin(x);
  const double c = std::cos(x);
  out.y[0] = -c / x;
  out.y[1] = -c / (x * x) - s / x;
  for (int l = 1; l < n; ++l) {
    out.y[l + 1] = (2.0 * l + 1.0) / x * out.y[l] - out.y[l - 1];
    if (!std::isfinite(out.y[l + 1])) {
      // y_l diverges towards -inf; the phase shift is zero to double precision there.
      for (int k = l + 1; k <= n; ++k) {
        out.y[k] = -HUGE_VAL;
      }
      break;
    }
  }

  const double big = std::max<double>(n, x);
  const int start = static_cast<int>(big) + 30 + static_cast<int>(2.0 * std::sqrt(big));
  double next = 0.0;
  double cur = 1e-300;
  for (int l = start; l > 0; --l) {
    const double prev = (2.0 * l + 1.0) / x * cur - next;
    next = cur;
    cur = prev;
    if (l - 1 <= n) {
      out.j[l - 1] = cur;
    }
    if (l <= n) {
      out.j[l] = next;
    }
    if (std::abs(cur) > 1e250) {
      cur *= 1e-250;
      next *= 1e-250;
      for (int k = std::max(0, l - 1); k <= n; ++k) {
        out.j[k] *= 1e-250;
      }
    }
  }
  // Wronskian: j_1 y_0 - j_0 y_1 = 1/x^2.
  const double w = out.j[1] * out.y[0] - out.j[0] * out.y[1];
  const double scale = 1.0 / (x * x * w);
  for (auto& v : out.j) {
    v *= scale;
  }
  out.j.resize(l_max + 1);
  out.y.resize(l_max + 1);
  return out;
}

}  // namespace qlbe
