#pragma once

#include "qlbe/kinematics.hpp"
#include "qlbe/numerics.hpp"

#include <variant>
#include <vector>

namespace qlbe {

// f(p_f, p_i) = f0 for every on-shell pair.
struct ConstantSWave {
  complex f0;
};

// Impenetrable sphere of radius a, partial waves l = 0..l_max.
struct HardSphere {
  double radius = 1.0;
  int l_max = 0;
};

// First Born approximation for V(x) = V0 exp(-x^2 / (2 s^2)).
struct BornGaussian {
  double V0 = 0.0;
  double s = 1.0;
  MassPair masses{1.0, 1.0};
};

using ScatteringModel = std::variant<ConstantSWave, HardSphere, BornGaussian>;

// Relative tolerance on | |p_f| - |p_i| | for the on-shell-only models.
inline constexpr double kOnShellTolerance = 1e-6;
// Partial-wave tail bound relative to the running sum.
inline constexpr double kPartialWaveTail = 1e-10;

ScatteringModel make_hard_sphere(double radius, int l_max);
ScatteringModel make_born_gaussian(double V0, double s, const MassPair& masses);

// Smallest l_max whose tail stays below kPartialWaveTail for k a <= k_max a.
int recommended_lmax(double radius, double k_max);

// Coefficients e^{i delta_l} sin(delta_l) of the hard-sphere partial-wave sum at
// relative momentum k. Terms that underflow relative to the sum are dropped.
struct PartialWaves {
  double k = 0.0;
  std::vector<complex> coeff;
  double sum_sin2 = 0.0;  // sum (2l+1) sin^2 delta_l

  complex amplitude(double cos_theta) const;
};

PartialWaves hard_sphere_partial_waves(const HardSphere& model, double k);

// -(m*/2pi) V0 (2pi)^{3/2} s^3, the forward Born amplitude.
double born_forward_amplitude(const BornGaussian& model);

complex amplitude(const ScatteringModel& model, const Vec3& p_f, const Vec3& p_i);

inline double differential_cross_section(const ScatteringModel& model, const Vec3& p_f, const Vec3& p_i) {
  return std::norm(amplitude(model, p_f, p_i));
}

// Forward amplitude f(k n, k n); independent of n for all implemented models.
complex forward_amplitude(const ScatteringModel& model, double k);

// Closed-form total cross section.
double sigma_tot(const ScatteringModel& model, const Vec3& p_i);
double sigma_tot(const ScatteringModel& model, double k);

// Sphere quadrature of |f(p_i n, p_i)|^2 (GL in cos theta x trapezoid in phi),
// doubled until two levels agree to rel_tol.
double sigma_tot_numeric(const ScatteringModel& model, const Vec3& p_i, double rel_tol = 1e-10);

// |p_i| sigma_tot - 4 pi hbar Im f(p_i, p_i), signed.
double optical_theorem_residual(const ScatteringModel& model, const Vec3& p_i);

// Upper bound of sigma_tot over all k >= 0 (rejection envelope).
double sigma_tot_bound(const ScatteringModel& model);

}  // namespace qlbe
