#include "qlbe/errors.hpp"
#include "qlbe/limits.hpp"

#include "../oracles/q_integral.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace qlbe;

namespace {

CollisionSystem born_system(double m, double M, double V0 = 0.3, double n_gas = 0.7, double beta = 1.0) {
  const MassPair mp(m, M);
  return CollisionSystem(mp, GasSpec(MaxwellBoltzmann(m, beta), n_gas), make_born_gaussian(V0, 0.6, mp));
}

CollisionSystem hard_sphere_system(double m, double M, double a, double n_gas = 0.5) {
  const MassPair mp(m, M);
  const double pb = std::sqrt(2.0 * m);
  return CollisionSystem(mp, GasSpec(MaxwellBoltzmann(m, 1.0), n_gas),
                         make_hard_sphere(a, recommended_lmax(a, 14.0 * pb + 3.0 * M)));
}

Vec3 random_vec(std::mt19937_64& gen, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(gen), u(gen), u(gen)};
}

Vec3 in_plane(const Vec3& p, const Vec3& Q) { return p - dot(p, Q) / Q.norm2() * Q; }

}  // namespace

TEST_CASE("structure factor") {
  const MassPair light(1.0, 1e6);
  const Vec3 Q{0.4, 0.9, -0.3};
  const double base = std::sqrt(1.0 / (2.0 * kPi)) / Q.norm() * std::exp(-Q.norm2() / 8.0);
  for (const Vec3& P : {Vec3{}, Vec3{1.0, 2.0, 0.0}, Vec3{-3.0, 0.5, 1.0}}) {
    CHECK(structure_factor(light, 1.0, Q, P) == doctest::Approx(base).epsilon(1e-5));
  }

  const MassPair mp(1.0, 3.0);
  std::vector<double> x;
  std::vector<double> y;
  for (double lambda : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    x.push_back(lambda * lambda);
    y.push_back(std::log(lambda * structure_factor(mp, 0.7, lambda * Q, {})));
  }
  const double slope = (y[1] - y[0]) / (x[1] - x[0]);
  for (std::size_t i = 2; i < x.size(); ++i) {
    CHECK(y[i] == doctest::Approx(y[0] + slope * (x[i] - x[0])).epsilon(1e-12));
  }
  CHECK_THROWS_AS(structure_factor(mp, 1.0, {}, {}), Error);
}

TEST_CASE("weak-coupling rate integrates to the Born out-rate") {
  const auto sys = born_system(1.0, 2.0);
  const Vec3 P{0.5, -0.3, 0.2};
  const double q_max = 2.0 * (sys.masses().m_star() / sys.masses().m()) * 8.0 * sys.p_beta() + 2.0 * P.norm();
  const double total = oracle::integrate_over_Q([&](const Vec3& Q) { return born_jump_rate(sys, Q, P); }, 32, q_max);
  CHECK(total == doctest::Approx(m_out_cl(sys, P)).epsilon(0.01));
}

TEST_CASE("weak-coupling rate equals the plane integral and the diagonal kernel") {
  const auto sys = born_system(1.0, 1.5);
  const double pb = sys.p_beta();
  std::mt19937_64 gen(31);
  for (int i = 0; i < 5; ++i) {
    const Vec3 P = random_vec(gen, 1.5);
    const Vec3 Q = random_vec(gen, 1.5);
    const Frame fr = orthonormal_frame(Q);
    const auto& gl = gauss_legendre(64);
    const double half = 8.0 * pb;
    double plane = 0.0;
    for (int a = 0; a < 64; ++a) {
      for (int b = 0; b < 64; ++b) {
        const Vec3 p = half * gl.nodes[a] * fr.e1 + half * gl.nodes[b] * fr.e2;
        plane += half * half * gl.weights[a] * gl.weights[b] * std::norm(L_born(sys, p, P, Q));
      }
    }
    const double rate = born_jump_rate(sys, Q, P);
    CHECK(plane == doctest::Approx(rate).epsilon(1e-8));
    const ComplexRate diag = m_in_quantum(sys, P + Q, P + Q, Q);
    CHECK(std::abs(diag.value.real() - rate) <= 1e-6 * rate + 3.0 * diag.est_error);

    const Vec3 p = in_plane(random_vec(gen, 1.5), Q);
    const complex lb = L_born(sys, p, P, Q);
    const complex ld = L_fn(sys, p, P, Q);
    CHECK(std::abs(lb - ld) <= 1e-12 * std::abs(ld));
  }
}

TEST_CASE("weak-coupling rate scales quadratically with the potential") {
  const Vec3 Q{0.3, 0.2, 0.1};
  const Vec3 P{0.1, 0.0, 0.5};
  const double r1 = born_jump_rate(born_system(1.0, 2.0, 1e-3), Q, P);
  const double r2 = born_jump_rate(born_system(1.0, 2.0, 2e-3), Q, P);
  CHECK(r2 == doctest::Approx(4.0 * r1).epsilon(1e-12));
  CHECK(born_jump_rate(born_system(1.0, 2.0, 1e-12), Q, P) < 1e-18);

  const MassPair mp(1.0, 2.0);
  const CollisionSystem swave(mp, GasSpec(MaxwellBoltzmann(1.0, 1.0), 1.0), ConstantSWave{1.0});
  try {
    (void)born_jump_rate(swave, Q, P);
    FAIL("expected WrongModel");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WrongModel);
  }
}

TEST_CASE("pure-decoherence symbol") {
  const auto sys = hard_sphere_system(1.0, 1e4, 0.8);
  const Vec3 Q{0.2, 0.5, -0.4};
  const Vec3 p = in_plane({0.3, -0.2, 0.6}, Q);
  const complex full = L_fn(sys, p, {1.0, 0.5, 0.0}, Q);
  CHECK(std::abs(full - L_pure_decoherence(sys, p, Q)) < 1e-3 * std::abs(full));
  CHECK_THROWS_AS(L_pure_decoherence(sys, p + Q, Q), Error);
}

TEST_CASE("forward average") {
  const MassPair mp(1.0, 2.0);
  const complex f0{0.3, 0.2};
  const CollisionSystem swave(mp, GasSpec(MaxwellBoltzmann(1.0, 1.0), 1.0), ConstantSWave{f0});
  for (const Vec3& P : {Vec3{}, Vec3{1e-6, 0, 0}, Vec3{2.0, 1.0, 0.0}}) {
    const ForwardAverage fa = forward_average(swave, P);
    CHECK(std::abs(fa.quadrature - f0) < 1e-12);
    CHECK(std::abs(fa.sinh_form - f0) < 1e-12);
  }

  // Hard spheres with p_beta a = 1 and a tracer moving at the gas thermal speed.
  const double pb = std::sqrt(2.0);
  const double M = 2.0;
  const auto hs = hard_sphere_system(1.0, M, 1.0 / pb);
  const double vb = pb / 1.0;
  const ForwardAverage fa = forward_average(hs, {M * vb, 0.0, 0.0});
  CHECK(fa.difference <= 1e-6 * std::abs(fa.quadrature));
  CHECK(fa.quadrature.imag() > 0.0);

  // The V -> 0 series branch joins the closed form smoothly.
  const ForwardAverage slow = forward_average(hs, {M * vb * 5e-5, 0.0, 0.0});
  const ForwardAverage slower = forward_average(hs, {M * vb * 2e-4, 0.0, 0.0});
  CHECK(std::abs(slow.sinh_form - slower.sinh_form) < 1e-6 * std::abs(slow.sinh_form));
}

TEST_CASE("refraction index") {
  const MassPair mp(1.0, 3.0);
  const CollisionSystem imag(mp, GasSpec(MaxwellBoltzmann(1.0, 1.0), 0.2), ConstantSWave{{0.0, 0.5}});
  CHECK(refraction_index(imag, 2.0).n1 == 1.0);

  const auto hs = hard_sphere_system(1.0, 3.0, 0.9, 0.2);
  for (double K : {0.5, 2.0, 6.0}) {
    const RefractionResult r = refraction_index(hs, K);
    CHECK(r.n2 > 0.0);
    CHECK(std::abs(r.n2 - r.n2_attenuation) <= 1e-6 * r.n2);
    const RefractionResult twice = refraction_index(hs.with_gas(GasSpec(hs.distribution(), 0.4)), K);
    CHECK(twice.n1 - 1.0 == doctest::Approx(2.0 * (r.n1 - 1.0)).epsilon(1e-13));
    CHECK(twice.n2 == doctest::Approx(2.0 * r.n2).epsilon(1e-13));
  }
  CHECK_THROWS_AS(refraction_index(hs, 0.0), Error);
}

TEST_CASE("diffusive coefficients") {
  // n = p_beta = sigma = M = 1: m = 1, beta = 2.
  const MassPair mp(1.0, 1.0);
  const CollisionSystem unit(mp, GasSpec(MaxwellBoltzmann(1.0, 2.0), 1.0), ConstantSWave{{std::sqrt(1.0 / (4.0 * kPi)), 0.0}});
  const DiffusiveCoefficients d = diffusive_coefficients(unit);
  CHECK(d.eta == doctest::Approx(1.504507).epsilon(1e-6));
  CHECK(d.Dpp * 2.0 / (d.eta * 1.0) == 1.0);
  CHECK(d.Dxx * 16.0 * 1.0 / (d.eta * 2.0) == 1.0);
  CHECK_THROWS_AS(diffusive_coefficients(born_system(1.0, 1.0)), Error);
}
