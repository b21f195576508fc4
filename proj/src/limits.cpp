#include "qlbe/limits.hpp"

#include "qlbe/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qlbe {

namespace {

const MaxwellBoltzmann& resting_maxwellian(const CollisionSystem& sys, const char* what) {
  const auto* mb = std::get_if<MaxwellBoltzmann>(&sys.distribution());
  if (mb == nullptr || !(mb->drift() == Vec3{})) {
    fail(ErrorKind::InvalidArgument, std::string(what) + " needs a Maxwell-Boltzmann gas at rest");
  }
  return *mb;
}

const MaxwellBoltzmann& maxwellian(const CollisionSystem& sys, const char* what) {
  const auto* mb = std::get_if<MaxwellBoltzmann>(&sys.distribution());
  if (mb == nullptr) {
    fail(ErrorKind::InvalidArgument, std::string(what) + " needs a Maxwell-Boltzmann gas");
  }
  return *mb;
}

const BornGaussian& born_model(const CollisionSystem& sys) {
  const auto* born = std::get_if<BornGaussian>(&sys.model());
  if (born == nullptr) {
    fail(ErrorKind::WrongModel, "weak-coupling evaluators need a Born-Gaussian model");
  }
  return *born;
}

void require_plane(const Vec3& p, const Vec3& Q) {
  if (std::abs(dot(p, Q)) > 1e-10 * p.norm() * Q.norm()) {
    fail(ErrorKind::OffPlane, "p is not orthogonal to Q");
  }
}

// Gas average of the forward amplitude on a spherical product grid centred on
// the point where rel(p0, P) vanishes.
complex forward_average_3d(const CollisionSystem& sys, const Vec3& P) {
  const auto& mp = sys.masses();
  const auto& mb = maxwellian(sys, "forward_average");
  const double pb = mb.p_beta();
  const Vec3 c = mp.ratio() * P;
  const Vec3 offset = mb.center() - c;
  const double d = offset.norm();
  const Vec3 axis = d > 0.0 ? offset / d : Vec3{0, 0, 1};
  const Frame frame = orthonormal_frame(axis);
  const double lo = std::max(0.0, d - 8.5 * pb);
  const double hi = d + 8.5 * pb;
  const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / pb)));
  const double h = (hi - lo) / panels;
  const double kf = mp.m_star() / mp.m();

  auto level = [&](int nr, int nc, int nphi) {
    const GaussLegendre& gr = gauss_legendre(nr);
    const GaussLegendre& gc = gauss_legendre(nc);
    CompensatedComplexSum sum;
    for (int k = 0; k < panels; ++k) {
      for (int i = 0; i < nr; ++i) {
        const double r = lo + k * h + 0.5 * h * (gr.nodes[i] + 1.0);
        const complex f = forward_amplitude(sys.model(), kf * r);
        const double wr = 0.5 * h * gr.weights[i] * r * r;
        for (int j = 0; j < nc; ++j) {
          const double ct = gc.nodes[j];
          const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
          for (int l = 0; l < nphi; ++l) {
            const double phi = 2.0 * kPi * (l + 0.5) / nphi;
            const Vec3 n = ct * axis + st * std::cos(phi) * frame.e1 + st * std::sin(phi) * frame.e2;
            sum.add(wr * gc.weights[j] * (2.0 * kPi / nphi) * mu(sys.distribution(), c + r * n) * f);
          }
        }
      }
    }
    return sum.value();
  };

  const auto& quad = sys.quad();
  int nr = std::max(4, quad.n_radial / 8);
  int nc = quad.n_angular;
  const int nphi = 4;
  complex prev = level(nr, nc, nphi);
  for (int i = 0; i < quad.max_doublings; ++i) {
    nr *= 2;
    nc *= 2;
    const complex cur = level(nr, nc, nphi);
    if (std::abs(cur - prev) <= 0.01 * kRouteTolerance * std::abs(cur) || std::abs(cur - prev) <= 1e-300) {
      return cur;
    }
    prev = cur;
  }
  fail(ErrorKind::QuadratureNotConverged, "3D forward-amplitude average did not converge");
}

// (2/sqrt(pi)) int dv/v_b (v/V) sinh(2 v V / v_b^2) exp(-(v^2 + V^2)/v_b^2) f(m* v).
complex forward_average_sinh(const CollisionSystem& sys, const Vec3& P) {
  const auto& mp = sys.masses();
  const auto& mb = maxwellian(sys, "forward_average");
  // Relative drift between tracer and gas.
  const double V = (P / mp.M() - mb.drift()).norm();
  const double vb = mb.p_beta() / mp.m();
  const bool series = V < 1e-4 * vb;

  auto weight = [&](double v) {
    const double x = 2.0 * v * V / (vb * vb);
    if (series) {
      return 2.0 * v * v / (vb * vb) * std::exp(-(v * v + V * V) / (vb * vb)) * (1.0 + x * x / 6.0);
    }
    if (x > 30.0) {
      // sinh(x) e^{-(v^2+V^2)/vb^2} = e^{-(v-V)^2/vb^2} / 2 up to e^{-2x}.
      return (v / V) * 0.5 * std::exp(-(v - V) * (v - V) / (vb * vb));
    }
    return (v / V) * 0.5 * std::exp(-(v - V) * (v - V) / (vb * vb)) * (-std::expm1(-2.0 * x));
  };

  const double lo = std::max(0.0, V - 8.5 * vb);
  const double hi = V + 8.5 * vb;
  const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / vb)));
  const double h = (hi - lo) / panels;
  auto level = [&](int n) {
    const GaussLegendre& gl = gauss_legendre(n);
    CompensatedComplexSum sum;
    for (int k = 0; k < panels; ++k) {
      for (int i = 0; i < n; ++i) {
        const double v = lo + k * h + 0.5 * h * (gl.nodes[i] + 1.0);
        sum.add(0.5 * h * gl.weights[i] * weight(v) * forward_amplitude(sys.model(), mp.m_star() * v));
      }
    }
    return 2.0 / (std::sqrt(kPi) * vb) * sum.value();
  };
  int n = 8;
  complex prev = level(n);
  for (int i = 0; i < 4; ++i) {
    n *= 2;
    const complex cur = level(n);
    if (std::abs(cur - prev) <= 0.01 * kRouteTolerance * std::abs(cur) || std::abs(cur - prev) <= 1e-300) {
      return cur;
    }
    prev = cur;
  }
  fail(ErrorKind::QuadratureNotConverged, "relative-speed forward average did not converge");
}

}  // namespace

double structure_factor(const MassPair& masses, double beta, const Vec3& Q, const Vec3& P) {
  const double m = masses.m();
  const double q2 = Q.norm2();
  const double eps = 1e-6 * std::sqrt(2.0 * m / beta);
  if (!(std::sqrt(q2) > eps)) {
    fail(ErrorKind::SingularQ, "structure factor needs |Q| above the Q = 0 cutoff");
  }
  const double r = masses.ratio();
  const double a = (1.0 + r) * q2 + 2.0 * r * dot(P, Q);
  return std::sqrt(beta * m / (2.0 * kPi)) / std::sqrt(q2) * std::exp(-beta * a * a / (8.0 * m * q2));
}

double born_jump_rate(const CollisionSystem& sys, const Vec3& Q, const Vec3& P) {
  const BornGaussian& born = born_model(sys);
  const auto& mb = resting_maxwellian(sys, "born_jump_rate");
  if (!(Q.norm() > sys.eps_Q())) {
    fail(ErrorKind::SingularQ, "born_jump_rate needs |Q| above the Q = 0 cutoff");
  }
  const auto& mp = sys.masses();
  const double f = born_forward_amplitude(born) * std::exp(-0.5 * Q.norm2() * born.s * born.s);
  return sys.n_gas() / (mp.m_star() * mp.m_star()) * structure_factor(mp, mb.beta(), Q, P) * f * f;
}

complex L_born(const CollisionSystem& sys, const Vec3& p, const Vec3& P, const Vec3& Q) {
  const BornGaussian& born = born_model(sys);
  const auto& mb = resting_maxwellian(sys, "L_born");
  if (!(Q.norm() > sys.eps_Q())) {
    fail(ErrorKind::SingularQ, "L_born needs |Q| above the Q = 0 cutoff");
  }
  require_plane(p, Q);
  const auto& mp = sys.masses();
  const double pb = mb.p_beta();
  const double f = born_forward_amplitude(born) * std::exp(-0.5 * Q.norm2() * born.s * born.s);
  const Vec3 p_perp = p - dot(p, Q) / Q.norm2() * Q;
  return std::sqrt(sys.n_gas()) / mp.m_star() * f * std::sqrt(structure_factor(mp, mb.beta(), Q, P)) *
         std::exp(-p_perp.norm2() / (2.0 * pb * pb)) / (std::sqrt(kPi) * pb);
}

complex L_pure_decoherence(const CollisionSystem& sys, const Vec3& p, const Vec3& Q) {
  if (!(Q.norm() > sys.eps_Q())) {
    fail(ErrorKind::SingularQ, "L_pure_decoherence needs |Q| above the Q = 0 cutoff");
  }
  require_plane(p, Q);
  const double m = sys.masses().m();
  const double weight = mu(sys.distribution(), p + 0.5 * Q);
  if (weight == 0.0 || sys.n_gas() == 0.0) {
    return {};
  }
  return std::sqrt(sys.n_gas() / (Q.norm() * m)) * std::sqrt(weight) * amplitude(sys.model(), p - 0.5 * Q, p + 0.5 * Q);
}

ForwardAverage forward_average(const CollisionSystem& sys, const Vec3& P) {
  ForwardAverage out;
  out.quadrature = forward_average_3d(sys, P);
  out.sinh_form = forward_average_sinh(sys, P);
  out.difference = std::abs(out.quadrature - out.sinh_form);
  if (out.difference > kRouteTolerance * std::abs(out.quadrature)) {
    fail(ErrorKind::RoutesDisagree, "forward-average routes differ by " + std::to_string(out.difference));
  }
  return out;
}

RefractionResult refraction_index(const CollisionSystem& sys, double K) {
  if (!(K > 0.0) || !std::isfinite(K)) {
    fail(ErrorKind::InvalidArgument, "refraction needs a wavenumber K > 0");
  }
  const auto& mp = sys.masses();
  const Vec3 P{Units::hbar * K, 0.0, 0.0};
  RefractionResult out;
  out.K = K;
  out.f_avg = forward_average(sys, P).value();
  const double scale = 2.0 * kPi * sys.n_gas() / (K * K) * (mp.M() / mp.m_star());
  out.n1 = 1.0 + scale * out.f_avg.real();
  out.n2 = scale * out.f_avg.imag();
  out.n2_attenuation = m_out_cl(sys, P) * mp.M() / (2.0 * Units::hbar * K * K);
  return out;
}

DiffusiveCoefficients diffusive_coefficients(const CollisionSystem& sys) {
  const auto* swave = std::get_if<ConstantSWave>(&sys.model());
  if (swave == nullptr) {
    fail(ErrorKind::WrongModel, "diffusive coefficients need a constant cross section");
  }
  const auto& mb = resting_maxwellian(sys, "diffusive_coefficients");
  const double M = sys.masses().M();
  const double sigma = 4.0 * kPi * std::norm(swave->f0);
  DiffusiveCoefficients out;
  out.eta = 8.0 / (3.0 * std::sqrt(kPi)) * sys.n_gas() * mb.p_beta() * sigma / M;
  out.Dpp = out.eta * M / mb.beta();
  out.Dxx = out.eta * Units::hbar * Units::hbar * mb.beta() / (16.0 * M);
  return out;
}

}  // namespace qlbe
