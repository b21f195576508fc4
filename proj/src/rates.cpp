#include "qlbe/rates.hpp"

#include "qlbe/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qlbe {

void QuadratureBudget::validate() const {
  if (n_radial < 4 || n_angular < 4 || n_plane < 4) {
    fail(ErrorKind::InvalidArgument, "quadrature node counts must be >= 4");
  }
  if (!(plane_extent >= 4.0)) {
    fail(ErrorKind::InvalidArgument, "plane_extent must be >= 4");
  }
  if (mc_samples < 4) {
    fail(ErrorKind::InvalidArgument, "mc_samples must be >= 4");
  }
  if (!(rel_tol > 0.0) || !(rel_tol < 1.0)) {
    fail(ErrorKind::InvalidArgument, "rel_tol must lie in (0, 1)");
  }
  if (max_doublings < 1) {
    fail(ErrorKind::InvalidArgument, "max_doublings must be >= 1");
  }
}

CollisionSystem::CollisionSystem(const MassPair& masses, GasSpec gas, ScatteringModel model, QuadratureBudget quad)
    : masses_(masses), gas_(std::move(gas)), model_(std::move(model)), quad_(quad) {
  quad_.validate();
  const auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
  if (const auto* born = std::get_if<BornGaussian>(&model_)) {
    if (!same(born->masses.m(), masses_.m()) || !same(born->masses.M(), masses_.M())) {
      fail(ErrorKind::InvalidArgument, "Born-Gaussian model masses differ from the system masses");
    }
  }
  if (const auto* mb = std::get_if<MaxwellBoltzmann>(&gas_.distribution)) {
    if (!same(mb->m(), masses_.m())) {
      fail(ErrorKind::InvalidArgument, "Maxwell-Boltzmann gas mass differs from the system gas mass");
    }
  }
}

namespace {

// Integral over the unit sphere of mu(c + r n).
double angular_mass(const GasDistribution& dist, const Vec3& c, double r) {
  if (const auto* mb = std::get_if<MaxwellBoltzmann>(&dist)) {
    const double pb = mb->p_beta();
    const double d = (mb->center() - c).norm();
    const double x = 2.0 * r * d / (pb * pb);
    const double shape = x > 0.0 ? -std::expm1(-2.0 * x) / (2.0 * x) : 1.0;
    return 4.0 * kPi / (std::pow(kPi, 1.5) * pb * pb * pb) * std::exp(-(r - d) * (r - d) / (pb * pb)) * shape;
  }
  const auto& tab = std::get<TabulatedIsotropic>(dist);
  const double c0 = c.norm();
  if (r == 0.0) {
    return 4.0 * kPi * tab.density(c0);
  }
  if (c0 == 0.0) {
    return 4.0 * kPi * tab.density(r);
  }
  // |c + r n| = s gives dn = 2 pi s ds / (r c0).
  return 2.0 * kPi / (r * c0) * tab.first_moment(std::abs(r - c0), r + c0);
}

// integral d^3p0 mu(p0) g(|p0 - c| * kfactor) with p0 = c + r n.
template <class G>
RateEstimate radial_integral(const CollisionSystem& sys, const Vec3& c, double kfactor, G&& g) {
  const auto& dist = sys.distribution();
  const auto& quad = sys.quad();
  const double width = thermal_momentum(dist);
  const double d = (center(dist) - c).norm();
  const double R = support_radius(dist);
  const double lo = std::max(0.0, d - R);
  const double hi = d + R;
  const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / width)));
  const double h = (hi - lo) / panels;

  auto level = [&](int per_panel) {
    const GaussLegendre& gl = gauss_legendre(per_panel);
    CompensatedSum sum;
    for (int k = 0; k < panels; ++k) {
      const double a = lo + k * h;
      for (int i = 0; i < per_panel; ++i) {
        const double r = a + 0.5 * h * (gl.nodes[i] + 1.0);
        const double A = angular_mass(dist, c, r);
        if (A == 0.0) {
          continue;
        }
        sum.add(0.5 * h * gl.weights[i] * r * r * A * g(kfactor * r));
      }
    }
    return sum.value();
  };

  int per_panel = std::max(4, quad.n_radial / 8);
  double prev = level(per_panel);
  for (int i = 0; i < quad.max_doublings; ++i) {
    per_panel *= 2;
    const double cur = level(per_panel);
    const double err = std::abs(cur - prev);
    if (err <= quad.rel_tol * std::abs(cur) || err <= 1e-300) {
      return {cur, err};
    }
    prev = cur;
  }
  fail(ErrorKind::QuadratureNotConverged, "radial gas integral did not reach rel_tol");
}

double plane_half_width(const CollisionSystem& sys) {
  if (std::holds_alternative<MaxwellBoltzmann>(sys.distribution())) {
    return sys.quad().plane_extent * sys.p_beta();
  }
  return support_radius(sys.distribution());
}

void require_nonsingular(const CollisionSystem& sys, const Vec3& Q) {
  if (!(Q.norm() > sys.eps_Q())) {
    fail(ErrorKind::SingularQ, "|Q| = " + std::to_string(Q.norm()) + " is at or below the Q = 0 cutoff");
  }
}

// Tensor Gauss-Legendre over [-half, half]^2 of fn(u, v).
template <class Acc, class F>
auto plane_quadrature(int n, double half, F&& fn) {
  const GaussLegendre& gl = gauss_legendre(n);
  Acc sum;
  double abs_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = half * gl.nodes[i];
    for (int j = 0; j < n; ++j) {
      const double v = half * gl.nodes[j];
      const auto value = fn(u, v);
      const double w = half * half * gl.weights[i] * gl.weights[j];
      sum.add(w * value);
      abs_sum += w * std::abs(value);
    }
  }
  return std::pair{sum.value(), abs_sum};
}

struct QuantumPlane {
  Vec3 q_hat;
  Frame frame;
  Vec3 origin;  // centre of the integration square in the plane
  double half = 0.0;
  double prefactor = 0.0;
};

QuantumPlane quantum_plane(const CollisionSystem& sys, const Vec3& Q) {
  require_nonsingular(sys, Q);
  QuantumPlane plane;
  const double q = Q.norm();
  plane.q_hat = Q / q;
  plane.frame = orthonormal_frame(Q);
  const Vec3 c = center(sys.distribution());
  plane.origin = c - dot(c, plane.q_hat) * plane.q_hat;
  const auto& mp = sys.masses();
  plane.half = plane_half_width(sys);
  plane.prefactor = std::sqrt(sys.n_gas() * mp.m() / (q * mp.m_star() * mp.m_star()));
  return plane;
}

// L(p, P; Q) for p already in the plane.
complex L_in_plane(const CollisionSystem& sys, const QuantumPlane& plane, const Vec3& p, const Vec3& P, const Vec3& Q) {
  const auto& mp = sys.masses();
  const double ratio = mp.ratio();
  const Vec3 P_par = dot(P, plane.q_hat) * plane.q_hat;
  const Vec3 P_perp = P - P_par;
  const double weight = mu(sys.distribution(), p + (1.0 + ratio) * 0.5 * Q + ratio * P_par);
  if (weight == 0.0 || plane.prefactor == 0.0) {
    return {};
  }
  const Vec3 r = rel(p, P_perp, mp);
  return plane.prefactor * std::sqrt(weight) * amplitude(sys.model(), r - 0.5 * Q, r + 0.5 * Q);
}

complex quantum_level(const CollisionSystem& sys, const QuantumPlane& plane, const Vec3& Pa, const Vec3& Pb,
                      const Vec3& Q, int n, double* abs_scale) {
  const bool diagonal = Pa == Pb;
  auto [value, scale] = plane_quadrature<CompensatedComplexSum>(n, plane.half, [&](double u, double v) {
    const Vec3 p = plane.origin + u * plane.frame.e1 + v * plane.frame.e2;
    const complex a = L_in_plane(sys, plane, p, Pa, Q);
    if (diagonal) {
      return complex{std::norm(a), 0.0};
    }
    return a * std::conj(L_in_plane(sys, plane, p, Pb, Q));
  });
  if (abs_scale != nullptr) {
    *abs_scale = scale;
  }
  return value;
}

}  // namespace

RateEstimate m_out_cl_estimate(const CollisionSystem& sys, const Vec3& P) {
  const auto& mp = sys.masses();
  const double kf = mp.m_star() / mp.m();
  const RateEstimate I =
      radial_integral(sys, mp.ratio() * P, kf, [&](double k) { return k * sigma_tot(sys.model(), k); });
  const double pre = sys.n_gas() / mp.m_star();
  return {pre * I.value, pre * I.est_error};
}

double m_out_cl(const CollisionSystem& sys, const Vec3& P) { return m_out_cl_estimate(sys, P).value; }

double static_scattering_rate(const CollisionSystem& sys) {
  const RateEstimate I = radial_integral(sys, Vec3{}, 1.0, [&](double k) { return k * sigma_tot(sys.model(), k); });
  return sys.n_gas() / sys.masses().m() * I.value;
}

RateEstimate m_in_cl_estimate(const CollisionSystem& sys, const Vec3& P_f, const Vec3& Q) {
  require_nonsingular(sys, Q);
  const auto& mp = sys.masses();
  const double q = Q.norm();
  const Vec3 q_hat = Q / q;
  const Frame frame = orthonormal_frame(Q);
  const Vec3 P_i = P_f - Q;
  // The energy delta fixes p0 . Q_hat.
  const double t = (mp.m() / mp.m_star()) * 0.5 * q + mp.ratio() * dot(P_i, q_hat);
  const Vec3 c = center(sys.distribution());
  const Vec3 origin = c - dot(c, q_hat) * q_hat + t * q_hat;
  const double half = plane_half_width(sys);
  const double pre = sys.n_gas() / mp.m_star() * mp.m() / (mp.m_star() * q);

  auto level = [&](int n) {
    return plane_quadrature<CompensatedSum>(n, half, [&](double u, double v) {
             const Vec3 p0 = origin + u * frame.e1 + v * frame.e2;
             const double w = mu(sys.distribution(), p0);
             if (w == 0.0) {
               return 0.0;
             }
             const Vec3 p_i = rel(p0, P_i, mp);
             return w * differential_cross_section(sys.model(), p_i - Q, p_i);
           })
        .first;
  };

  int n = sys.quad().n_plane;
  double prev = level(n);
  for (int i = 0; i < sys.quad().max_doublings; ++i) {
    n *= 2;
    const double cur = level(n);
    const double err = std::abs(cur - prev);
    if (err <= sys.quad().rel_tol * std::abs(cur) || err <= 1e-300) {
      return {pre * cur, pre * err};
    }
    prev = cur;
  }
  fail(ErrorKind::QuadratureNotConverged, "classical in-rate plane integral did not reach rel_tol");
}

double m_in_cl(const CollisionSystem& sys, const Vec3& P_f, const Vec3& Q) {
  return m_in_cl_estimate(sys, P_f, Q).value;
}

complex L_fn(const CollisionSystem& sys, const Vec3& p, const Vec3& P, const Vec3& Q) {
  const QuantumPlane plane = quantum_plane(sys, Q);
  const double along = dot(p, plane.q_hat);
  if (std::abs(along) > 1e-10 * p.norm()) {
    fail(ErrorKind::OffPlane, "p is not orthogonal to Q");
  }
  return L_in_plane(sys, plane, p - along * plane.q_hat, P, Q);
}

ComplexRate m_in_quantum(const CollisionSystem& sys, const Vec3& P, const Vec3& P_prime, const Vec3& Q) {
  const QuantumPlane plane = quantum_plane(sys, Q);
  const Vec3 Pa = P - Q;
  const Vec3 Pb = P_prime - Q;
  int n = sys.quad().n_plane;
  complex prev = quantum_level(sys, plane, Pa, Pb, Q, n, nullptr);
  for (int i = 0; i < sys.quad().max_doublings; ++i) {
    n *= 2;
    double scale = 0.0;
    const complex cur = quantum_level(sys, plane, Pa, Pb, Q, n, &scale);
    const double err = std::abs(cur - prev);
    if (err <= sys.quad().rel_tol * scale || err <= 1e-300) {
      return {cur, err};
    }
    prev = cur;
  }
  fail(ErrorKind::QuadratureNotConverged, "quantum in-rate plane integral did not reach rel_tol");
}

complex m_in_quantum_at(const CollisionSystem& sys, const Vec3& P, const Vec3& P_prime, const Vec3& Q, int n_plane) {
  const QuantumPlane plane = quantum_plane(sys, Q);
  return quantum_level(sys, plane, P - Q, P_prime - Q, Q, n_plane, nullptr);
}

double energy_shift(const CollisionSystem& sys, const Vec3& P) {
  const auto& mp = sys.masses();
  const RateEstimate I = radial_integral(sys, mp.ratio() * P, mp.m_star() / mp.m(),
                                         [&](double k) { return forward_amplitude(sys.model(), k).real(); });
  return -2.0 * kPi * Units::hbar * Units::hbar * sys.n_gas() / mp.m_star() * I.value;
}

}  // namespace qlbe
