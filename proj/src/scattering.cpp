#include "qlbe/scattering.hpp"

#include "qlbe/errors.hpp"
#include "qlbe/special.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qlbe {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_on_shell(const Vec3& p_f, const Vec3& p_i) {
  const double a = p_f.norm();
  const double b = p_i.norm();
  if (std::abs(a - b) > kOnShellTolerance * std::max(b, 1e-300)) {
    fail(ErrorKind::OffShell, "|p_f| = " + std::to_string(a) + " differs from |p_i| = " + std::to_string(b));
  }
}

complex legendre_sum(const PartialWaves& pw, double cos_theta) {
  // Sum (2l+1) c_l P_l(x) with the three-term recurrence.
  CompensatedComplexSum sum;
  double p_prev = 1.0;
  double p_cur = cos_theta;
  const auto L = static_cast<int>(pw.coeff.size()) - 1;
  if (L >= 0) {
    sum.add(pw.coeff[0]);
  }
  for (int l = 1; l <= L; ++l) {
    sum.add((2.0 * l + 1.0) * pw.coeff[l] * p_cur);
    const double p_next = ((2.0 * l + 1.0) * cos_theta * p_cur - l * p_prev) / (l + 1.0);
    p_prev = p_cur;
    p_cur = p_next;
  }
  return sum.value();
}

}  // namespace

ScatteringModel make_hard_sphere(double radius, int l_max) {
  if (!(radius > 0.0)) {
    fail(ErrorKind::InvalidArgument, "hard-sphere radius must be > 0");
  }
  if (l_max < 0) {
    fail(ErrorKind::InvalidArgument, "hard-sphere l_max must be >= 0");
  }
  return HardSphere{radius, l_max};
}

ScatteringModel make_born_gaussian(double V0, double s, const MassPair& masses) {
  if (!(s > 0.0)) {
    fail(ErrorKind::InvalidArgument, "Born-Gaussian width s must be > 0");
  }
  if (!std::isfinite(V0)) {
    fail(ErrorKind::InvalidArgument, "Born-Gaussian V0 must be finite");
  }
  return BornGaussian{V0, s, masses};
}

int recommended_lmax(double radius, double k_max) {
  const double x = std::max(0.0, radius * k_max);
  return static_cast<int>(std::ceil(x + 6.0 * std::cbrt(x) + 10.0));
}

complex PartialWaves::amplitude(double cos_theta) const {
  if (k == 0.0) {
    return coeff.empty() ? complex{} : coeff[0];
  }
  return legendre_sum(*this, cos_theta) / k;
}

PartialWaves hard_sphere_partial_waves(const HardSphere& model, double k) {
  PartialWaves pw;
  pw.k = k;
  if (k == 0.0) {
    // Zero-energy limit: f = -a.
    pw.coeff.assign(1, complex{-model.radius, 0.0});
    return pw;
  }
  const double x = k * model.radius;
  // One extra order serves as the tail estimate.
  const SphericalBessel b = spherical_bessel(model.l_max + 1, x);
  auto coefficient = [&](int l) {
    const double jl = b.j[l];
    const double yl = b.y[l];
    if (std::isinf(yl)) {
      return complex{};
    }
    if (yl == 0.0) {
      return complex{0.0, 1.0};
    }
    // tan(delta_l) = j_l / y_l.
    const double t = jl / yl;
    const double d = 1.0 + t * t;
    return complex{t / d, t * t / d};
  };
  pw.coeff.reserve(model.l_max + 1);
  double running = 0.0;
  for (int l = 0; l <= model.l_max; ++l) {
    const complex c = coefficient(l);
    pw.coeff.push_back(c);
    pw.sum_sin2 += (2.0 * l + 1.0) * c.imag();
    const double term = (2.0 * l + 1.0) * std::sqrt(c.imag());
    running += term;
    if (l > x && term < 1e-18 * running) {
      return pw;
    }
  }
  const int next = model.l_max + 1;
  const double tail = (2.0 * next + 1.0) * std::sqrt(coefficient(next).imag());
  if (tail > kPartialWaveTail * running) {
    fail(ErrorKind::CutoffTooSmall, "partial-wave tail at l_max = " + std::to_string(model.l_max) +
                                        " exceeds bound for k a = " + std::to_string(x));
  }
  return pw;
}

double born_forward_amplitude(const BornGaussian& model) {
  const double s3 = model.s * model.s * model.s;
  return -(model.masses.m_star() / (2.0 * kPi)) * model.V0 * std::pow(2.0 * kPi, 1.5) * s3;
}

complex amplitude(const ScatteringModel& model, const Vec3& p_f, const Vec3& p_i) {
  return std::visit(
      Overloaded{
          [&](const ConstantSWave& m) -> complex {
            check_on_shell(p_f, p_i);
            return m.f0;
          },
          [&](const HardSphere& m) -> complex {
            check_on_shell(p_f, p_i);
            const double k = p_i.norm();
            const PartialWaves pw = hard_sphere_partial_waves(m, k);
            const double denom = p_f.norm() * k;
            const double c = denom > 0.0 ? std::clamp(dot(p_f, p_i) / denom, -1.0, 1.0) : 1.0;
            return pw.amplitude(c);
          },
          [&](const BornGaussian& m) -> complex {
            const Vec3 q = p_f - p_i;
            return born_forward_amplitude(m) * std::exp(-0.5 * q.norm2() * m.s * m.s);
          },
      },
      model);
}

complex forward_amplitude(const ScatteringModel& model, double k) {
  return std::visit(Overloaded{
                        [&](const ConstantSWave& m) -> complex { return m.f0; },
                        [&](const HardSphere& m) -> complex {
                          return hard_sphere_partial_waves(m, k).amplitude(1.0);
                        },
                        [&](const BornGaussian& m) -> complex { return born_forward_amplitude(m); },
                    },
                    model);
}

double sigma_tot(const ScatteringModel& model, double k) {
  return std::visit(Overloaded{
                        [&](const ConstantSWave& m) -> double { return 4.0 * kPi * std::norm(m.f0); },
                        [&](const HardSphere& m) -> double {
                          if (k == 0.0) {
                            return 4.0 * kPi * m.radius * m.radius;
                          }
                          const PartialWaves pw = hard_sphere_partial_waves(m, k);
                          return 4.0 * kPi * pw.sum_sin2 / (k * k);
                        },
                        [&](const BornGaussian& m) -> double {
                          // |f_B|^2 = A^2 exp(-|q|^2 s^2), |q|^2 = 2 k^2 (1 - cos theta).
                          const double A = born_forward_amplitude(m);
                          const double lam = 2.0 * k * k * m.s * m.s;
                          const double ang = lam > 1e-12 ? -std::expm1(-2.0 * lam) / lam : 2.0 - 2.0 * lam;
                          return 2.0 * kPi * A * A * ang;
                        },
                    },
                    model);
}

double sigma_tot(const ScatteringModel& model, const Vec3& p_i) { return sigma_tot(model, p_i.norm()); }

double sigma_tot_numeric(const ScatteringModel& model, const Vec3& p_i, double rel_tol) {
  const double k = p_i.norm();
  if (!(k > 0.0)) {
    fail(ErrorKind::InvalidArgument, "sigma_tot needs |p_i| > 0");
  }
  const Vec3 axis = p_i / k;
  const Frame frame = orthonormal_frame(axis);
  auto integrate = [&](int n) {
    const GaussLegendre& gl = gauss_legendre(n);
    const int nphi = 2 * n;
    CompensatedSum sum;
    for (int i = 0; i < n; ++i) {
      const double c = gl.nodes[i];
      const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
      for (int j = 0; j < nphi; ++j) {
        const double phi = 2.0 * kPi * (j + 0.5) / nphi;
        const Vec3 n_hat = c * axis + s * std::cos(phi) * frame.e1 + s * std::sin(phi) * frame.e2;
        sum.add(gl.weights[i] * (2.0 * kPi / nphi) * differential_cross_section(model, k * n_hat, p_i));
      }
    }
    return sum.value();
  };
  int n = 16;
  double prev = integrate(n);
  for (int level = 0; level < 6; ++level) {
    n *= 2;
    const double cur = integrate(n);
    if (std::abs(cur - prev) <= rel_tol * std::abs(cur)) {
      return cur;
    }
    prev = cur;
  }
  fail(ErrorKind::QuadratureNotConverged, "sphere quadrature of |f|^2 did not converge");
}

double optical_theorem_residual(const ScatteringModel& model, const Vec3& p_i) {
  const double k = p_i.norm();
  if (!(k > 0.0)) {
    fail(ErrorKind::InvalidArgument, "optical theorem needs |p_i| > 0");
  }
  return k * sigma_tot(model, k) - 4.0 * kPi * Units::hbar * amplitude(model, p_i, p_i).imag();
}

double sigma_tot_bound(const ScatteringModel& model) {
  return std::visit(Overloaded{
                        [&](const ConstantSWave& m) -> double { return 4.0 * kPi * std::norm(m.f0); },
                        [&](const HardSphere& m) -> double {
                          // Tabulate up to k a = 200 (beyond, sigma -> 2 pi a^2 from above).
                          double best = 4.0 * kPi * m.radius * m.radius;
                          const HardSphere wide{m.radius, recommended_lmax(m.radius, 200.0 / m.radius)};
                          for (int i = 1; i <= 2000; ++i) {
                            const double k = 0.1 * i / m.radius;
                            const PartialWaves pw = hard_sphere_partial_waves(wide, k);
                            best = std::max(best, 4.0 * kPi * pw.sum_sin2 / (k * k));
                          }
                          return best * (1.0 + 1e-3);
                        },
                        [&](const BornGaussian& m) -> double {
                          const double A = born_forward_amplitude(m);
                          return 4.0 * kPi * A * A;
                        },
                    },
                    model);
}

}  // namespace qlbe
