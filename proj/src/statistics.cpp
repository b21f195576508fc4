#include "qlbe/statistics.hpp"

#include "qlbe/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qlbe {

double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) {
    fail(ErrorKind::InvalidArgument, "KS statistic needs at least one sample");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double F = cdf(sorted[i]);
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  return d;
}

double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

double maxwell_speed_cdf(double x, double sigma) {
  if (x <= 0.0) {
    return 0.0;
  }
  const double z = x / sigma;
  return std::erf(z / std::numbers::sqrt2) - std::sqrt(2.0 / std::numbers::pi) * z * std::exp(-0.5 * z * z);
}

}  // namespace qlbe
