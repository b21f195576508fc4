#pragma once

#include <functional>
#include <span>
#include <vector>

namespace qlbe {

// Two-sided Kolmogorov-Smirnov statistic of samples against a continuous CDF.
// The samples are copied and sorted.
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

// Asymptotic 1% critical value of the one-sample KS statistic.
double ks_critical_1pct(std::size_t n);

// CDF of the speed |v| of a 3D isotropic Gaussian with per-component
// standard deviation sigma.
double maxwell_speed_cdf(double x, double sigma);

}  // namespace qlbe
