#pragma once

#include "qlbe/rates.hpp"

namespace qlbe {

// Dynamic structure factor of a Maxwell gas at rest for the jump P -> P + Q.
double structure_factor(const MassPair& masses, double beta, const Vec3& Q, const Vec3& P);

// Weak-coupling rate density for P -> P + Q. Requires a Born-Gaussian model
// and a Maxwell-Boltzmann gas at rest.
double born_jump_rate(const CollisionSystem& sys, const Vec3& Q, const Vec3& P);

// Weak-coupling jump-operator symbol; p in the plane orthogonal to Q.
complex L_born(const CollisionSystem& sys, const Vec3& p, const Vec3& P, const Vec3& Q);

// Heavy-tracer (m/M -> 0) form of the jump-operator symbol, independent of P.
complex L_pure_decoherence(const CollisionSystem& sys, const Vec3& p, const Vec3& Q);

struct ForwardAverage {
  complex quadrature;  // 3D gas-momentum quadrature
  complex sinh_form;   // 1D relative-speed integral
  double difference = 0.0;

  complex value() const { return quadrature; }
};

inline constexpr double kRouteTolerance = 1e-6;

// Thermally averaged forward amplitude seen by a tracer of momentum P.
// Throws RoutesDisagree when the two evaluations differ by more than
// kRouteTolerance relative.
ForwardAverage forward_average(const CollisionSystem& sys, const Vec3& P);

struct RefractionResult {
  double n1 = 1.0;
  double n2 = 0.0;
  complex f_avg;
  double K = 0.0;
  // n2 from the attenuation of the beam, M_out(K) M / (2 K^2).
  double n2_attenuation = 0.0;
};

RefractionResult refraction_index(const CollisionSystem& sys, double K);

struct DiffusiveCoefficients {
  double eta = 0.0;
  double Dpp = 0.0;
  double Dxx = 0.0;
};

// Friction and diffusion constants of the heavy-tracer limit for a constant
// cross section in a Maxwell-Boltzmann gas.
DiffusiveCoefficients diffusive_coefficients(const CollisionSystem& sys);

}  // namespace qlbe
