#include "oracles.hpp"

#include "qlbe/numerics.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace oracle {

using qlbe::complex;
using qlbe::Vec3;

complex quantum_rate_direct(const qlbe::CollisionSystem& sys, const Vec3& P, const Vec3& Pp, const Vec3& Q,
                            int n_radial, int n_phi) {
  const auto& mp = sys.masses();
  const double m = mp.m();
  const double M = mp.M();
  const double q = Q.norm();
  const Vec3 qh = Q / q;
  const Vec3 D = (dot(P, qh) - dot(Pp, qh)) * qh;
  const Vec3 Pm = 0.5 * (P + Pp);

  // Plane basis built from the y axis (or x if nearly parallel), unlike the
  // library's frame.
  Vec3 seed = std::abs(qh.y) < 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
  Vec3 e1 = seed - dot(seed, qh) * qh;
  e1 = e1 / e1.norm();
  const Vec3 e2 = cross(e1, qh);

  auto energy = [&](const Vec3& p0) {
    const Vec3 a = qlbe::rel(p0 - Q, Pm, mp);
    const Vec3 b = qlbe::rel(p0, Pm - Q, mp);
    return 0.5 * (a.norm2() - b.norm2());
  };

  const Vec3 c = qlbe::center(sys.distribution());
  const Vec3 c_perp = c - dot(c, qh) * qh;
  const double R = 8.5 * sys.p_beta();
  const auto& gl = qlbe::gauss_legendre(n_radial);
  qlbe::CompensatedComplexSum sum;
  for (int i = 0; i < n_radial; ++i) {
    const double r = 0.5 * R * (gl.nodes[i] + 1.0);
    const double wr = 0.5 * R * gl.weights[i] * r;
    for (int j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * qlbe::kPi * (j + 0.25) / n_phi;
      const Vec3 x = c_perp + r * std::cos(phi) * e1 + r * std::sin(phi) * e2;
      const double g0 = energy(x);
      const double slope = energy(x + qh) - g0;
      const double t = -g0 / slope;
      const Vec3 p0 = x + t * qh;
      const double mu_a = qlbe::mu(sys.distribution(), p0 + (m / M) * 0.5 * D);
      const double mu_b = qlbe::mu(sys.distribution(), p0 - (m / M) * 0.5 * D);
      if (mu_a == 0.0 || mu_b == 0.0) {
        continue;
      }
      const complex fa = qlbe::amplitude(sys.model(), qlbe::rel(p0 - Q, P - 0.5 * D, mp), qlbe::rel(p0, P - 0.5 * D - Q, mp));
      const complex fb = qlbe::amplitude(sys.model(), qlbe::rel(p0 - Q, Pp + 0.5 * D, mp), qlbe::rel(p0, Pp + 0.5 * D - Q, mp));
      sum.add(wr * (2.0 * qlbe::kPi / n_phi) * std::sqrt(mu_a * mu_b) * fa * std::conj(fb) / std::abs(slope));
    }
  }
  return sys.n_gas() / mp.m_star() * sum.value();
}

McValue in_rate_smoothed(const qlbe::CollisionSystem& sys, const Vec3& P_f, const Vec3& Q, double width, long samples,
                         std::uint64_t seed) {
  const auto& mp = sys.masses();
  const Vec3 P_i = P_f - Q;
  qlbe::RngStream rng(seed, 0);
  double s1 = 0.0;
  double s2 = 0.0;
  const double norm = 1.0 / (std::sqrt(2.0 * qlbe::kPi) * width);
  for (long k = 0; k < samples; ++k) {
    const Vec3 p0 = qlbe::sample(sys.distribution(), rng);
    const Vec3 p_i = qlbe::rel(p0, P_i, mp);
    const Vec3 p_f = p_i - Q;
    const double y = p_f.norm2() - p_i.norm2();
    const double kernel = norm * std::exp(-0.5 * y * y / (width * width));
    double value = 0.0;
    if (kernel > 0.0) {
      // Evaluate the cross section on shell at |p_i| (on-shell-only models).
      const Vec3 pf_shell = p_f * (p_i.norm() / p_f.norm());
      value = kernel * qlbe::differential_cross_section(sys.model(), pf_shell, p_i);
    }
    s1 += value;
    s2 += value * value;
  }
  const double mean = s1 / samples;
  const double var = std::max(0.0, s2 / samples - mean * mean);
  // delta((y)/(2 m*)) = 2 m* delta(y); overall n / m*^2.
  const double pre = sys.n_gas() / (mp.m_star() * mp.m_star()) * 2.0 * mp.m_star();
  return {pre * mean, pre * std::sqrt(var / samples)};
}

McValue in_rate_extrapolated(const qlbe::CollisionSystem& sys, const Vec3& P_f, const Vec3& Q, double width,
                             long samples, std::uint64_t seed) {
  const McValue a = in_rate_smoothed(sys, P_f, Q, width, samples, seed);
  const McValue b = in_rate_smoothed(sys, P_f, Q, 2.0 * width, samples, seed + 1);
  return {(4.0 * a.mean - b.mean) / 3.0, std::sqrt(16.0 * a.std_error * a.std_error + b.std_error * b.std_error) / 3.0};
}

McValue mean_relative_speed(const qlbe::CollisionSystem& sys, const Vec3& P, long samples, std::uint64_t seed) {
  qlbe::RngStream rng(seed, 0);
  double s1 = 0.0;
  double s2 = 0.0;
  for (long k = 0; k < samples; ++k) {
    const double v = qlbe::rel(qlbe::sample(sys.distribution(), rng), P, sys.masses()).norm();
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / samples;
  return {mean, std::sqrt((s2 / samples - mean * mean) / samples)};
}

McValue box_normalization(const qlbe::GasDistribution& dist, const Vec3& c, double half_side, long samples,
                          std::uint64_t seed) {
  qlbe::RngStream rng(seed, 0);
  double s1 = 0.0;
  double s2 = 0.0;
  const double vol = 8.0 * half_side * half_side * half_side;
  for (long k = 0; k < samples; ++k) {
    const Vec3 p = c + half_side * Vec3{2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0};
    const double v = vol * qlbe::mu(dist, p);
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / samples;
  return {mean, std::sqrt((s2 / samples - mean * mean) / samples)};
}

complex localization_direct(const qlbe::CollisionSystem& sys, const Vec3& dx, int n_axis, int n_sphere) {
  using namespace qlbe;
  const Vec3 c = center(sys.distribution());
  const double L = support_radius(sys.distribution());
  const GaussLegendre& gl = gauss_legendre(n_axis);
  // Fibonacci points carry equal solid angle.
  std::vector<Vec3> dirs(n_sphere);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n_sphere; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n_sphere;
    const double r = std::sqrt(1.0 - z * z);
    dirs[i] = {r * std::cos(golden * i), r * std::sin(golden * i), z};
  }
  const double dw = 4.0 * kPi / n_sphere;
  complex total;
  for (int i = 0; i < n_axis; ++i) {
    for (int j = 0; j < n_axis; ++j) {
      for (int k = 0; k < n_axis; ++k) {
        const Vec3 p = c + L * Vec3{gl.nodes[i], gl.nodes[j], gl.nodes[k]};
        const double w = L * L * L * gl.weights[i] * gl.weights[j] * gl.weights[k] * mu(sys.distribution(), p);
        const double kp = p.norm();
        if (w == 0.0 || kp == 0.0) {
          continue;
        }
        std::optional<PartialWaves> pw;
        if (const auto* hs = std::get_if<HardSphere>(&sys.model())) {
          pw = hard_sphere_partial_waves(*hs, kp);
        }
        complex inner;
        for (const Vec3& n : dirs) {
          const double sigma = pw ? std::norm(pw->amplitude(dot(n, p) / kp))
                                  : differential_cross_section(sys.model(), kp * n, p);
          inner += dw * sigma * (1.0 - std::polar(1.0, dot(dx, p - kp * n)));
        }
        total += w * kp * inner;
      }
    }
  }
  return sys.n_gas() / sys.masses().m() * total;
}

}  // namespace oracle
